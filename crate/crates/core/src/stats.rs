//! Small numeric helpers shared by the metric and ranking code.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Unweighted mean with compensated summation. `None` for an empty input.
pub fn mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let mut n = 0usize;
    let mut buf = Vec::new();
    for v in values {
        n += 1;
        buf.push(v);
    }
    if n == 0 {
        None
    } else {
        Some(compensated_sum(buf) / n as f64)
    }
}

/// Fractional ("mean of tied positions") ranks, 1-based. Values comparing
/// equal share the mean of the positions they occupy.
pub fn fractional_ranks(values: &[f64], lower_is_better: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        if lower_is_better {
            ord
        } else {
            ord.reverse()
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v), 1.0);
        assert!((mean([0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(mean(std::iter::empty()), None);
    }

    #[test]
    fn ties_share_mean_position() {
        let r = fractional_ranks(&[0.1, 0.3, 0.3, 0.5], true);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
        let r = fractional_ranks(&[0.1, 0.3, 0.3, 0.5], false);
        assert_eq!(r, vec![4.0, 2.5, 2.5, 1.0]);
        let total: f64 = fractional_ranks(&[1.0, 1.0, 1.0, 2.0, 0.0], true).iter().sum();
        assert_eq!(total, 15.0);
    }
}
