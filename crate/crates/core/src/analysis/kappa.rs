use crate::error::{Error, Result};
use crate::eval::DecisionMatrix;

/// Fleiss' kappa over items x raters with categories {0, 1}. When every
/// rating falls in one category, chance agreement is 1 and kappa is taken
/// to be 1.
pub fn fleiss_kappa(m: &DecisionMatrix) -> Result<f64> {
    let (items, raters) = (m.num_items(), m.num_raters());
    if raters < 2 || items < 2 {
        return Err(Error::InvalidArgument(format!(
            "kappa needs at least 2 raters and 2 items, got {raters} and {items}"
        )));
    }
    let n = raters as f64;
    let mut ones_total = 0u64;
    let mut p_bar = 0.0;
    for i in 0..items {
        let ones = (0..raters).map(|j| m.get(i, j) as u64).sum::<u64>();
        ones_total += ones;
        let (a, b) = (ones as f64, (raters as u64 - ones) as f64);
        p_bar += (a * a + b * b - n) / (n * (n - 1.0));
    }
    p_bar /= items as f64;
    let p1 = ones_total as f64 / (items as f64 * n);
    let p_e = p1 * p1 + (1.0 - p1) * (1.0 - p1);
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[u8]]) -> DecisionMatrix {
        let raters = rows[0].len();
        DecisionMatrix::new(
            (0..rows.len()).map(|i| ("c".to_string(), i)).collect(),
            (0..raters).map(|j| format!("r{j}")).collect(),
            rows.concat(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_agreement_with_mixed_items() {
        let m = matrix(&[&[1, 1, 1], &[0, 0, 0], &[1, 1, 1]]);
        assert_eq!(fleiss_kappa(&m).unwrap(), 1.0);
    }

    #[test]
    fn constant_matrix_is_one() {
        let m = matrix(&[&[1, 1], &[1, 1]]);
        assert_eq!(fleiss_kappa(&m).unwrap(), 1.0);
    }

    #[test]
    fn too_small() {
        assert!(fleiss_kappa(&matrix(&[&[1], &[0]])).is_err());
        assert!(fleiss_kappa(&matrix(&[&[1, 0]])).is_err());
    }
}
