use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::numeric::{Real, Tensor};

/// Default half-width of the context window for frame-level models.
pub const DEFAULT_CONTEXT: usize = 5;

/// Concatenates frames `t - half ..= t + half` for every frame, replicating
/// the first and last frame at the edges. Width grows by `2 * half + 1`.
pub fn splice_context<F: Real>(x: &Tensor<F>, half: usize) -> Tensor<F> {
    let (rows, d) = (x.rows(), x.cols());
    let span = 2 * half + 1;
    let mut out = Vec::with_capacity(rows * d * span);
    for t in 0..rows {
        for off in 0..span {
            let src = (t + off).saturating_sub(half).min(rows.saturating_sub(1));
            out.extend_from_slice(x.row(src));
        }
    }
    Tensor::from_vec(&[rows, d * span], out).expect("spliced length is exact")
}

/// Variable-length utterances packed time-major and right-padded with zeros.
/// Row `t * B + b` is frame `t` of utterance `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqBatch<F: Real = f32> {
    pub data: Tensor<F>,
    pub lengths: Vec<usize>,
}

impl<F: Real> SeqBatch<F> {
    pub fn from_sequences(seqs: &[&Tensor<F>]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::InvalidArgument("empty sequence batch".into()));
        }
        let d = seqs[0].cols();
        let lengths: Vec<usize> = seqs.iter().map(|s| s.rows()).collect();
        if let Some(s) = seqs.iter().find(|s| s.cols() != d) {
            return Err(Error::shape("sequence batch width", &[d], &[s.cols()]));
        }
        if lengths.iter().any(|&l| l == 0) {
            return Err(Error::InvalidArgument("zero-length sequence in batch".into()));
        }
        let steps = *lengths.iter().max().expect("nonempty");
        let b = seqs.len();
        let mut data = Tensor::zeros(&[steps * b, d]);
        for (bi, s) in seqs.iter().enumerate() {
            for t in 0..s.rows() {
                data.row_mut(t * b + bi).copy_from_slice(s.row(t));
            }
        }
        Ok(SeqBatch { data, lengths })
    }

    pub fn from_features(feats: &[&FeatureMatrix]) -> Result<Self> {
        let ts: Vec<Tensor<F>> = feats.iter().map(|f| f.to_tensor()).collect();
        Self::from_sequences(&ts.iter().collect::<Vec<_>>())
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn steps(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn valid_frames(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Packed row indices of utterance `b`, in time order.
    pub fn rows_of(&self, b: usize) -> Vec<usize> {
        let n = self.batch();
        (0..self.lengths[b]).map(|t| t * n + b).collect()
    }

    /// Row-wise validity mask.
    pub fn mask(&self) -> Vec<bool> {
        let n = self.batch();
        let mut m = vec![false; self.steps() * n];
        for (b, &len) in self.lengths.iter().enumerate() {
            for t in 0..len {
                m[t * n + b] = true;
            }
        }
        m
    }

    /// Same layout with different row contents.
    pub fn with_data(&self, data: Tensor<F>) -> Result<Self> {
        if data.rows() != self.data.rows() {
            return Err(Error::shape("sequence batch rows", &[self.data.rows()], &[data.rows()]));
        }
        Ok(SeqBatch {
            data,
            lengths: self.lengths.clone(),
        })
    }

    /// Per-utterance matrices from a packed tensor with this batch's layout.
    pub fn unpack(&self, packed: &Tensor<F>) -> Vec<Tensor<F>> {
        (0..self.batch())
            .map(|b| packed.gather_rows(&self.rows_of(b)))
            .collect()
    }

    /// Zeroes the padded rows of a packed tensor.
    pub fn zero_padding(&self, packed: &mut Tensor<F>) {
        let c = packed.cols();
        for (row, valid) in packed.data_mut().chunks_mut(c).zip(self.mask()) {
            if !valid {
                row.iter_mut().for_each(|v| *v = F::zero());
            }
        }
    }

    /// Concatenates the valid rows along the feature axis with another batch
    /// of identical layout.
    pub fn concat_features(&self, other: &SeqBatch<F>) -> Result<Self> {
        if self.lengths != other.lengths {
            return Err(Error::InvalidArgument(
                "cannot concatenate batches with different lengths".into(),
            ));
        }
        let (a, b) = (self.dim(), other.dim());
        let rows = self.data.rows();
        let mut data = Vec::with_capacity(rows * (a + b));
        for r in 0..rows {
            data.extend_from_slice(self.data.row(r));
            data.extend_from_slice(other.data.row(r));
        }
        Ok(SeqBatch {
            data: Tensor::from_vec(&[rows, a + b], data)?,
            lengths: self.lengths.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame_repeats() {
        let x = Tensor::<f64>::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let s = splice_context(&x, 5);
        assert_eq!(s.shape(), &[1, 33]);
        for k in 0..11 {
            assert_eq!(&s.data()[k * 3..k * 3 + 3], &[1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn interior_frame_is_slice_concatenation() {
        let x = Tensor::<f64>::from_vec(&[20, 2], (0..40).map(|v| v as f64).collect()).unwrap();
        let s = splice_context(&x, 5);
        let t = 9;
        let expect: Vec<f64> = x.data()[(t - 5) * 2..(t + 6) * 2].to_vec();
        assert_eq!(s.row(t), &expect[..]);
    }

    #[test]
    fn lps_width_after_splicing() {
        let x = Tensor::<f32>::zeros(&[4, 257]);
        assert_eq!(splice_context(&x, 5).cols(), 2827);
    }

    #[test]
    fn packing_round_trip() {
        let a = Tensor::<f64>::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::<f64>::from_vec(&[1, 2], vec![7.0, 8.0]).unwrap();
        let batch = SeqBatch::from_sequences(&[&a, &b]).unwrap();
        assert_eq!(batch.data.shape(), &[6, 2]);
        assert_eq!(batch.mask(), vec![true, true, true, false, true, false]);
        let back = batch.unpack(&batch.data);
        assert_eq!(back[0], a);
        assert_eq!(back[1], b);
    }
}
