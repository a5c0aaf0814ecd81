use crate::error::{Error, Result};
use crate::numeric::{derive_seed, gemm_acc, xavier_init, Parameter, Real, Tensor};

/// 1-D convolution over the width axis of channels-last input `[N, W, Cin]`
/// with zero "same" padding. The kernel is `[Cout, Cin, K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<F: Real = f32> {
    pub w: Parameter<F>,
    pub b: Parameter<F>,
}

impl<F: Real> Conv1d<F> {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, kernel: usize, seed: u64) -> Result<Self> {
        if kernel == 0 {
            return Err(Error::InvalidArgument(format!("{name}: kernel width 0")));
        }
        let wname = format!("{name}.w");
        let w = xavier_init(&[out_ch, in_ch, kernel], derive_seed(seed, &wname))?;
        Ok(Conv1d {
            w: Parameter::new(wname, w),
            b: Parameter::zeros(format!("{name}.b"), &[out_ch]),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.w.value.shape()[2]
    }

    fn pad(&self) -> usize {
        (self.kernel() - 1) / 2
    }

    /// Rows are output positions `(n, w)`; column `c * K + k` holds
    /// `x[n, w + k - pad, c]`.
    fn im2col(&self, x: &Tensor<F>, n: usize, width: usize) -> Tensor<F> {
        let (cin, k, pad) = (self.in_channels(), self.kernel(), self.pad());
        let ck = cin * k;
        let mut cols = Tensor::zeros(&[n * width, ck]);
        let xd = x.data();
        let cd = cols.data_mut();
        for s in 0..n {
            for w in 0..width {
                let row = &mut cd[(s * width + w) * ck..(s * width + w + 1) * ck];
                for kk in 0..k {
                    let src = w as isize + kk as isize - pad as isize;
                    if src < 0 || src >= width as isize {
                        continue;
                    }
                    let base = (s * width + src as usize) * cin;
                    for c in 0..cin {
                        row[c * k + kk] = xd[base + c];
                    }
                }
            }
        }
        cols
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<(usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.in_channels() {
            return Err(Error::shape(
                format!("input of {}", self.w.name),
                &[0, 0, self.in_channels()],
                s,
            ));
        }
        Ok((s[0], s[1]))
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, width) = self.check_input(x)?;
        let cols = self.im2col(x, n, width);
        let cout = self.out_channels();
        let wmat = self
            .w
            .value
            .clone()
            .reshape(&[cout, self.in_channels() * self.kernel()])?;
        let mut y = cols.matmul(false, &wmat, true)?;
        y.add_row_vector(self.b.value.data());
        y.reshape(&[n, width, cout])
    }

    /// Accumulates parameter gradients; returns `dx`. The column matrix is
    /// rebuilt from `x` rather than cached.
    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, width) = self.check_input(x)?;
        let (cin, k, cout, pad) = (self.in_channels(), self.kernel(), self.out_channels(), self.pad());
        let ck = cin * k;
        dy.expect_shape(&[n, width, cout], "conv1d output gradient")?;
        let cols = self.im2col(x, n, width);
        let dy2 = dy.clone().reshape(&[n * width, cout])?;
        let mut dw = Tensor::zeros(&[cout, ck]);
        gemm_acc(&mut dw, F::one(), &dy2, true, &cols, false)?;
        for (g, d) in self.w.grad.data_mut().iter_mut().zip(dw.data()) {
            *g += *d;
        }
        dy2.accumulate_col_sums(self.b.grad.data_mut());
        let wmat = self.w.value.clone().reshape(&[cout, ck])?;
        let dcols = dy2.matmul(false, &wmat, false)?;
        let mut dx = Tensor::zeros(&[n, width, cin]);
        let dxd = dx.data_mut();
        let dc = dcols.data();
        for s in 0..n {
            for w in 0..width {
                let row = &dc[(s * width + w) * ck..(s * width + w + 1) * ck];
                for kk in 0..k {
                    let src = w as isize + kk as isize - pad as isize;
                    if src < 0 || src >= width as isize {
                        continue;
                    }
                    let base = (s * width + src as usize) * cin;
                    for c in 0..cin {
                        dxd[base + c] += row[c * k + kk];
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(conv: &Conv1d<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let s = x.shape();
        let (n, width, cin) = (s[0], s[1], s[2]);
        let (cout, k) = (conv.out_channels(), conv.kernel());
        let pad = (k - 1) / 2;
        let w = conv.w.value.data();
        let mut y = vec![0.0; n * width * cout];
        for a in 0..n {
            for p in 0..width {
                for o in 0..cout {
                    let mut acc = conv.b.value.data()[o];
                    for c in 0..cin {
                        for kk in 0..k {
                            let q = p as isize + kk as isize - pad as isize;
                            if q >= 0 && (q as usize) < width {
                                acc += w[(o * cin + c) * k + kk] * x.data()[(a * width + q as usize) * cin + c];
                            }
                        }
                    }
                    y[(a * width + p) * cout + o] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn matches_direct_loop() {
        let mut conv = Conv1d::<f64>::new("c", 3, 4, 5, 2).unwrap();
        conv.b.value.data_mut().copy_from_slice(&[0.1, 0.2, -0.3, 0.4]);
        let x = Tensor::from_vec(&[2, 7, 3], (0..42).map(|i| (i as f64 * 0.61).sin()).collect()).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 7, 4]);
        for (a, b) in y.data().iter().zip(direct(&conv, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn width_is_preserved_for_even_kernels() {
        let conv = Conv1d::<f64>::new("c", 1, 1, 4, 0).unwrap();
        let y = conv.forward(&Tensor::zeros(&[1, 9, 1])).unwrap();
        assert_eq!(y.shape(), &[1, 9, 1]);
    }
}
