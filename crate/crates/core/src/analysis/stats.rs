use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

impl CorrelationMethod {
    pub fn name(self) -> &'static str {
        match self {
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Spearman => "spearman",
        }
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn correlate(x: &[f64], y: &[f64], method: CorrelationMethod) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 values, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value".into()));
    }
    match method {
        CorrelationMethod::Pearson => pearson(x, y),
        CorrelationMethod::Spearman => pearson(&average_ranks(x), &average_ranks(y)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub method: CorrelationMethod,
    pub pairs: Vec<(String, String, f64)>,
    pub mean_r: f64,
}

/// All `C(m, 2)` pairwise coefficients, in `(i, j), i < j` order.
pub fn mean_pairwise_correlation(
    labels: &[String],
    vectors: &[Vec<f64>],
    method: CorrelationMethod,
) -> Result<CorrelationReport> {
    if vectors.len() < 2 || labels.len() != vectors.len() {
        return Err(Error::InvalidArgument("need at least two labelled vectors".into()));
    }
    let mut pairs = Vec::new();
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let r = correlate(&vectors[i], &vectors[j], method)?;
            pairs.push((labels[i].clone(), labels[j].clone(), r));
        }
    }
    let mean_r = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    Ok(CorrelationReport { method, pairs, mean_r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use CorrelationMethod::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn affine_and_reversal() {
        let v1 = [0.1, 0.4, 0.2, 0.9, 0.55];
        let v2: Vec<f64> = v1.iter().map(|x| 2.0 * x + 0.1).collect();
        assert!((correlate(&v1, &v2, Pearson).unwrap() - 1.0).abs() < 1e-12);
        let dec: Vec<f64> = v1.iter().map(|x| -x.powi(3)).collect();
        assert!((correlate(&v1, &dec, Spearman).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let e = correlate(&[0.5, 0.5, 0.5], &[0.1, 0.2, 0.3], Pearson).unwrap_err();
        assert_eq!(e.to_string(), "zero variance");
        assert!(correlate(&[0.1, 0.2], &[0.1, 0.2], Pearson).is_err());
        assert!(correlate(&[0.1, 0.2, 0.3], &[0.1, 0.2], Pearson).is_err());
    }

    #[test]
    fn pairwise_means() {
        let v = vec![0.2, 0.4, 0.9, 0.1];
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = mean_pairwise_correlation(&labels, &[v.clone(), v.clone(), v.clone()], Pearson).unwrap();
        assert_eq!(r.pairs.len(), 3);
        assert!((r.mean_r - 1.0).abs() < 1e-12);
        let w = vec![0.3, 0.1, 0.8, 0.2];
        let two = mean_pairwise_correlation(&labels[..2], &[v.clone(), w.clone()], Spearman).unwrap();
        assert_eq!(two.mean_r, correlate(&v, &w, Spearman).unwrap());
    }
}
