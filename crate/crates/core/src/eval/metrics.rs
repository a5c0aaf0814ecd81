use crate::dsp::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

fn check_pair(a: &FeatureMatrix, b: &FeatureMatrix, what: &str) -> Result<()> {
    if a.kind() != b.kind() {
        return Err(Error::InvalidArgument(format!(
            "{what}: cannot compare {} with {}",
            a.kind(),
            b.kind()
        )));
    }
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::shape(what, &[b.rows(), b.cols()], &[a.rows(), a.cols()]));
    }
    if a.rows() == 0 {
        return Err(Error::InvalidArgument(format!("{what}: no frames")));
    }
    Ok(())
}

/// Mean squared difference over all frames and coefficients.
pub fn mfcc_mse(enhanced: &FeatureMatrix, reference: &FeatureMatrix) -> Result<f64> {
    check_pair(enhanced, reference, "mfcc mse")?;
    if enhanced.kind() != FeatureKind::Mfcc {
        return Err(Error::InvalidArgument("mfcc mse needs mfcc features".into()));
    }
    let n = enhanced.data().len() as f64;
    Ok(enhanced
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Mean over frames of the RMS log-power difference across bins.
pub fn log_spectral_distance(enhanced: &FeatureMatrix, reference: &FeatureMatrix) -> Result<f64> {
    check_pair(enhanced, reference, "log spectral distance")?;
    if enhanced.kind() != FeatureKind::Lps {
        return Err(Error::InvalidArgument(
            "log spectral distance needs lps features".into(),
        ));
    }
    let total: f64 = (0..enhanced.rows())
        .map(|t| {
            let (a, b) = (enhanced.row(t), reference.row(t));
            let ms = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / enhanced.rows() as f64)
}
