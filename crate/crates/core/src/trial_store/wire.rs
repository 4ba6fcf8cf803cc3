//! CSV wire format for decision records.
//!
//! ```text
//! subj,session,trial,rt,object_response,category,condition,imagename
//! subject-01,1,1,0.734,dog,dog,0.35,0001_un_s01_0.35_dog_10_n02085620_1234.png
//! resnet50,1,1,na,cat,dog,0.35,0001_un_s01_0.35_dog_10_n02085620_1234.png
//! ```
//!
//! UTF-8, `\n` line endings, missing values written as `na`. On input the
//! reader also accepts `NA`/`NaN` for missing values and `session-N` session
//! tokens, which occur in the released raw data; output is always canonical.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{CategoryLabel, ConditionId, DatasetDescriptor, DecisionTable, StoreError, TrialRecord, Vocabulary};

pub const WIRE_HEADER: [&str; 8] =
    ["subj", "session", "trial", "rt", "object_response", "category", "condition", "imagename"];

const NA: &str = "na";

fn is_na(s: &str) -> bool {
    s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

/// Reads and validates one decision file.
pub fn load_decisions(
    path: &Path,
    descriptor: &DatasetDescriptor,
    vocab: &Arc<Vocabulary>,
) -> Result<DecisionTable, StoreError> {
    let file = std::fs::File::open(path).map_err(|source| StoreError::Io { path: path.to_owned(), source })?;
    read_decisions(std::io::BufReader::new(file), path, descriptor, vocab)
}

/// Like [`load_decisions`] but from any reader; `path` labels diagnostics.
pub fn read_decisions<R: Read>(
    reader: R,
    path: &Path,
    descriptor: &DatasetDescriptor,
    vocab: &Arc<Vocabulary>,
) -> Result<DecisionTable, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let malformed = |row: u64, reason: String| StoreError::MalformedRow { path: path.to_owned(), row, reason };

    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for result in rdr.records() {
        let rec = result.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            match e.into_kind() {
                csv::ErrorKind::Io(source) => StoreError::Io { path: path.to_owned(), source },
                other => malformed(row, format!("{other:?}")),
            }
        })?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            saw_header = true;
            let header: Vec<&str> = rec.iter().map(str::trim).collect();
            if header != WIRE_HEADER {
                return Err(malformed(
                    row,
                    format!("expected header {:?}, found {:?}", WIRE_HEADER.join(","), header.join(",")),
                ));
            }
            continue;
        }
        if rec.len() != WIRE_HEADER.len() {
            return Err(malformed(row, format!("expected {} columns, found {}", WIRE_HEADER.len(), rec.len())));
        }
        let field = |i: usize| rec.get(i).unwrap_or("").trim();

        let decider_id = field(0);
        if decider_id.is_empty() {
            return Err(malformed(row, "empty subj".into()));
        }
        let session = parse_positive(field(1).strip_prefix("session-").unwrap_or(field(1)))
            .ok_or_else(|| malformed(row, format!("session {:?} is not a positive integer", field(1))))?;
        let trial_index = parse_positive(field(2))
            .ok_or_else(|| malformed(row, format!("trial {:?} is not a positive integer", field(2))))?;
        let response_time = if is_na(field(3)) {
            None
        } else {
            match field(3).parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Some(v),
                _ => return Err(malformed(row, format!("rt {:?} is not a non-negative number", field(3)))),
            }
        };
        let category = |s: &str| {
            vocab.get(s).ok_or_else(|| StoreError::UnknownCategory { path: path.to_owned(), row, value: s.to_owned() })
        };
        let response = if is_na(field(4)) { None } else { Some(category(field(4))?) };
        let true_category = category(field(5))?;
        if field(6).is_empty() {
            return Err(malformed(row, "empty condition".into()));
        }
        if field(7).is_empty() {
            return Err(malformed(row, "empty imagename".into()));
        }
        records.push(TrialRecord {
            decider_id: decider_id.to_owned(),
            session,
            trial_index,
            response_time,
            response,
            true_category,
            condition: ConditionId::new(field(6)),
            image_id: field(7).to_owned(),
        });
        rows.push(row);
    }
    if records.is_empty() {
        return Err(StoreError::EmptyFile { path: path.to_owned() });
    }
    DecisionTable::build(path, descriptor, vocab.clone(), records, &rows)
}

fn parse_positive(s: &str) -> Option<u32> {
    s.parse::<u32>().ok().filter(|&v| v > 0)
}

fn label_name(vocab: &Vocabulary, label: Option<CategoryLabel>) -> &str {
    label.map_or(NA, |l| vocab.name(l))
}

/// Writes a table in canonical wire format, preserving row order.
pub fn write_decisions<W: Write>(table: &DecisionTable, writer: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(WIRE_HEADER)?;
    let vocab = table.vocabulary();
    for r in table.records() {
        let rt = r.response_time.map_or_else(|| NA.to_owned(), |v| v.to_string());
        w.write_record([
            r.decider_id.as_str(),
            &r.session.to_string(),
            &r.trial_index.to_string(),
            &rt,
            label_name(vocab, r.response),
            vocab.name(r.true_category),
            r.condition.as_str(),
            &r.image_id,
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial_store::{DatasetKind, DEFAULT_CATEGORIES};
    use proptest::prelude::*;

    fn desc() -> DatasetDescriptor {
        DatasetDescriptor::new("sketch", DatasetKind::Nonparametric, ["0", "1"])
    }

    fn read(s: &str) -> Result<DecisionTable, StoreError> {
        read_decisions(s.as_bytes(), Path::new("t.csv"), &desc(), &Arc::new(Vocabulary::default()))
    }

    const HEADER: &str = "subj,session,trial,rt,object_response,category,condition,imagename\n";

    #[test]
    fn minimal_file() {
        let t = read(&format!("{HEADER}subject-01,1,1,0.5,dog,dog,0,a.png\n")).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.decider_id(), "subject-01");
        assert!(t.records()[0].is_correct());
    }

    #[test]
    fn unknown_category_names_row() {
        let err = read(&format!("{HEADER}s,1,1,0.5,dog,dog,0,a.png\ns,1,2,0.5,dgo,dog,0,b.png\n")).unwrap_err();
        match err {
            StoreError::UnknownCategory { row, value, .. } => {
                assert_eq!(row, 3);
                assert_eq!(value, "dgo");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_and_empty() {
        assert!(matches!(read(""), Err(StoreError::EmptyFile { .. })));
        assert!(matches!(read(HEADER), Err(StoreError::EmptyFile { .. })));
        assert!(matches!(
            read(&format!("{HEADER}s,1,1,0.5,dog,dog,0\n")),
            Err(StoreError::MalformedRow { row: 2, .. })
        ));
        assert!(matches!(
            read(&format!("{HEADER}s,x,1,0.5,dog,dog,0,a\n")),
            Err(StoreError::MalformedRow { row: 2, .. })
        ));
        assert!(matches!(read(&format!("{HEADER}s,1,1,-3,dog,dog,0,a\n")), Err(StoreError::MalformedRow { .. })));
        assert!(matches!(read("a,b\ns,1\n"), Err(StoreError::MalformedRow { row: 1, .. })));
        assert!(matches!(read(&format!("{HEADER}s,1,1,0.5,dog,na,0,a\n")), Err(StoreError::UnknownCategory { .. })));
    }

    #[test]
    fn lenient_inputs_accepted() {
        let t = read(&format!("{HEADER}resnet50,session-1,1,NaN,na,dog,1,a.png\n")).unwrap();
        let r = &t.records()[0];
        assert_eq!(r.session, 1);
        assert_eq!(r.response_time, None);
        assert_eq!(r.response, None);
        assert!(!r.is_correct());
        let mut out = Vec::new();
        write_decisions(&t, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{HEADER}resnet50,1,1,na,na,dog,1,a.png\n"));
    }

    #[test]
    fn duplicate_trial_reports_key() {
        let err = read(&format!("{HEADER}s,2,7,0.5,dog,dog,0,a\ns,2,7,0.5,dog,dog,0,b\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("decider s") && msg.contains("session 2") && msg.contains("trial 7"), "{msg}");
    }

    fn arb_row() -> impl Strategy<Value = (Option<f64>, Option<usize>, usize, bool, String)> {
        (
            proptest::option::of(0.0f64..5.0),
            proptest::option::of(0usize..16),
            0usize..16,
            any::<bool>(),
            "[a-z0-9_ ]{1,12}",
        )
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(rows in proptest::collection::vec(arb_row(), 1..40)) {
            let vocab = Arc::new(Vocabulary::default());
            let records: Vec<TrialRecord> = rows.iter().enumerate().map(|(i, (rt, resp, truth, cond, name))| TrialRecord {
                decider_id: "subject-03".into(),
                session: 1 + (i % 2) as u32,
                trial_index: i as u32 + 1,
                response_time: *rt,
                response: resp.map(CategoryLabel::from_index),
                true_category: CategoryLabel::from_index(*truth),
                condition: if *cond { "1".into() } else { "0".into() },
                image_id: format!("{i}_{}_{}", name.trim(), DEFAULT_CATEGORIES[*truth]),
            }).collect();
            let table = DecisionTable::from_records(&desc(), vocab.clone(), records).unwrap();
            let mut bytes = Vec::new();
            write_decisions(&table, &mut bytes).unwrap();
            let back = read_decisions(bytes.as_slice(), Path::new("rt.csv"), &desc(), &vocab).unwrap();
            prop_assert_eq!(&back, &table);
            let mut again = Vec::new();
            write_decisions(&back, &mut again).unwrap();
            prop_assert_eq!(bytes, again);
        }
    }
}
