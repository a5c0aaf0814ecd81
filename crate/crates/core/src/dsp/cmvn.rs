use serde::{Deserialize, Serialize};

use super::features::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Global per-dimension mean and variance pooled over all training frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmvnStats {
    pub kind: FeatureKind,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub frame_count: u64,
}

impl CmvnStats {
    pub fn fit<'a, I>(features: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureMatrix>,
    {
        let mut kind = None;
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        let mut count = 0u64;
        for f in features {
            match kind {
                None => {
                    kind = Some(f.kind());
                    sum = vec![0.0; f.cols()];
                    sum_sq = vec![0.0; f.cols()];
                }
                Some(k) if k != f.kind() => {
                    return Err(Error::InvalidArgument(format!(
                        "cannot pool {} and {} features",
                        k,
                        f.kind()
                    )))
                }
                _ => {}
            }
            if f.is_normalized() {
                return Err(Error::InvalidArgument("features are already normalized".into()));
            }
            for r in 0..f.rows() {
                for (d, &v) in f.row(r).iter().enumerate() {
                    sum[d] += v;
                    sum_sq[d] += v * v;
                }
            }
            count += f.rows() as u64;
        }
        let kind = kind.ok_or_else(|| Error::InvalidArgument("empty corpus".into()))?;
        if count == 0 {
            return Err(Error::InvalidArgument("corpus has no frames".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let var = sum_sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n - m * m).max(VARIANCE_FLOOR))
            .collect();
        Ok(CmvnStats {
            kind,
            mean,
            var,
            frame_count: count,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, f: &FeatureMatrix, want_normalized: bool) -> Result<()> {
        if f.kind() != self.kind {
            return Err(Error::InvalidArgument(format!(
                "cmvn stats are for {} features, got {}",
                self.kind,
                f.kind()
            )));
        }
        if f.is_normalized() != want_normalized {
            return Err(Error::InvalidArgument(format!(
                "expected {} features",
                if want_normalized { "normalized" } else { "raw" }
            )));
        }
        Ok(())
    }

    /// `(x - mean) / sqrt(var)` per dimension.
    pub fn apply(&self, f: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(f, false)?;
        let mut data = f.data().to_vec();
        self.normalize_rows(&mut data);
        FeatureMatrix::with_state(f.kind(), f.rows(), data, true)
    }

    pub fn invert(&self, f: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(f, true)?;
        let mut data = f.data().to_vec();
        self.denormalize_rows(&mut data);
        FeatureMatrix::with_state(f.kind(), f.rows(), data, false)
    }

    pub fn normalize_rows(&self, data: &mut [f64]) {
        let d = self.dim();
        for row in data.chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.var) {
                *v = (*v - m) / s.sqrt();
            }
        }
    }

    pub fn denormalize_rows(&self, data: &mut [f64]) {
        let d = self.dim();
        for row in data.chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.var) {
                *v = *v * s.sqrt() + m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_mfcc(rows: usize, seed: u64) -> FeatureMatrix {
        let mut s = seed;
        let data = (0..rows * 40)
            .map(|i| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) as f64 / (1u64 << 31) as f64) * 10.0 + (i % 40) as f64
            })
            .collect();
        FeatureMatrix::new(FeatureKind::Mfcc, rows, data).unwrap()
    }

    #[test]
    fn fit_then_apply_standardizes() {
        let corpus = [random_mfcc(30, 1), random_mfcc(50, 2), random_mfcc(7, 3)];
        let stats = CmvnStats::fit(&corpus).unwrap();
        assert_eq!(stats.frame_count, 87);
        let normed: Vec<FeatureMatrix> = corpus.iter().map(|f| stats.apply(f).unwrap()).collect();
        for d in 0..40 {
            let vals: Vec<f64> = normed
                .iter()
                .flat_map(|f| (0..f.rows()).map(move |r| f.row(r)[d]))
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn apply_invert_identity() {
        let f = random_mfcc(20, 9);
        let stats = CmvnStats::fit([&f]).unwrap();
        let back = stats.invert(&stats.apply(&f).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_dimension_floored() {
        let f = FeatureMatrix::new(FeatureKind::Mfcc, 5, vec![2.5; 200]).unwrap();
        let stats = CmvnStats::fit([&f]).unwrap();
        assert!(stats.var.iter().all(|&v| v == VARIANCE_FLOOR));
        assert!(stats.apply(&f).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        assert!(CmvnStats::fit(std::iter::empty::<&FeatureMatrix>()).is_err());
        let a = random_mfcc(3, 1);
        let b = FeatureMatrix::new(FeatureKind::Lps, 1, vec![0.0; 257]).unwrap();
        assert!(CmvnStats::fit([&a, &b]).is_err());
        let stats = CmvnStats::fit([&a]).unwrap();
        assert!(stats.apply(&b).is_err());
    }
}
