use crate::logvalue::LogValue;

/// Sign and log-magnitude of `det(a)` (row-major, `n × n`) by LU with partial pivoting.
pub fn log_det(mut a: Vec<f64>, n: usize) -> LogValue {
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    let mut sign: i8 = 1;
    let mut ln = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .unwrap_or(col);
        let pv = a[piv * n + col];
        if pv == 0.0 {
            return LogValue::ZERO;
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            sign = -sign;
        }
        if pv < 0.0 {
            sign = -sign;
        }
        ln += pv.abs().ln();
        for r in col + 1..n {
            let f = a[r * n + col] / pv;
            if f == 0.0 {
                continue;
            }
            for c in col + 1..n {
                a[r * n + c] -= f * a[col * n + c];
            }
        }
    }
    LogValue::new(sign, ln)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_determinants() {
        assert!((log_det(vec![2.0, 1.0, 1.0, 3.0], 2).value() - 5.0).abs() < 1e-14);
        let d = log_det(vec![0.0, 1.0, 1.0, 0.0], 2);
        assert_eq!(d.sign(), -1);
        assert!(log_det(vec![1.0, 2.0, 2.0, 4.0], 2).is_zero());
        assert_eq!(log_det(vec![], 0), LogValue::ONE);
    }

    #[test]
    fn matches_permutation_expansion() {
        let a = vec![4.0, -2.0, 1.0, 3.0, 6.0, -4.0, 2.0, 1.0, 8.0];
        let want = 4.0 * (48.0 + 4.0) + 2.0 * (24.0 + 8.0) + (3.0 - 12.0);
        let d = log_det(a, 3);
        assert!((d.value() - want).abs() < 1e-11);
    }
}
