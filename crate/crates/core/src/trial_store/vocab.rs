use std::collections::HashMap;

/// The 16 entry-level categories of the human experiments, in the order the
/// published data and mapping files use.
pub const DEFAULT_CATEGORIES: [&str; 16] = [
    "knife", "keyboard", "elephant", "bicycle", "airplane", "clock", "oven", "chair", "bear", "boat", "cat", "bottle",
    "truck", "car", "bird", "dog",
];

pub const VOCABULARY_SIZE: usize = 16;

/// Index of a category within its [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryLabel(u8);

impl CategoryLabel {
    /// Panics if `i` is not a valid vocabulary position.
    pub fn from_index(i: usize) -> Self {
        assert!(i < VOCABULARY_SIZE, "category index {i} out of range");
        CategoryLabel(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("vocabulary must have exactly {VOCABULARY_SIZE} categories, got {0}")]
    WrongSize(usize),
    #[error("category {0:?} listed twice")]
    Duplicate(String),
    #[error("invalid category name {0:?}")]
    InvalidName(String),
}

/// Closed set of category names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    lookup: HashMap<String, CategoryLabel>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new(DEFAULT_CATEGORIES).expect("default vocabulary is valid")
    }
}

impl Vocabulary {
    pub fn new<I, S>(names: I) -> Result<Self, VocabularyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != VOCABULARY_SIZE {
            return Err(VocabularyError::WrongSize(names.len()));
        }
        let mut lookup = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.eq_ignore_ascii_case("na") || n.contains([',', '\n', '"']) {
                return Err(VocabularyError::InvalidName(n.clone()));
            }
            if lookup.insert(n.clone(), CategoryLabel(i as u8)).is_some() {
                return Err(VocabularyError::Duplicate(n.clone()));
            }
        }
        Ok(Vocabulary { names, lookup })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<CategoryLabel> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, label: CategoryLabel) -> &str {
        &self.names[label.index()]
    }

    pub fn labels(&self) -> impl Iterator<Item = CategoryLabel> + '_ {
        (0..self.names.len()).map(|i| CategoryLabel(i as u8))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
