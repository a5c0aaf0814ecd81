use super::layers::sigmoid;
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, gemm_acc, xavier_init, Parameter, Real, Tensor};

/// LSTM layer with a linear recurrent projection and no peepholes.
///
/// Gate pre-activations are laid out `[i | f | g | o]`, each `cells` wide:
///
/// ```text
/// G_t = x_t Wx^T + r_{t-1} Wr^T + b
/// c_t = f * c_{t-1} + i * g
/// m_t = o * tanh(c_t)
/// r_t = m_t Wp^T
/// ```
///
/// Sequences are time-major: row `t * B + b` holds frame `t` of stream `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmpLayer<F: Real = f32> {
    pub wx: Parameter<F>,
    pub wr: Parameter<F>,
    pub b: Parameter<F>,
    pub wp: Parameter<F>,
}

#[derive(Clone, Debug)]
pub struct LstmpCache<F: Real> {
    steps: usize,
    batch: usize,
    x: Tensor<F>,
    /// Activated gates `[T*B, 4C]`.
    gates: Tensor<F>,
    c: Tensor<F>,
    tanh_c: Tensor<F>,
    m: Tensor<F>,
    r: Tensor<F>,
}

impl<F: Real> LstmpLayer<F> {
    pub fn new(name: &str, input: usize, cells: usize, proj: usize, seed: u64) -> Result<Self> {
        let n = |s: &str| format!("{name}.{s}");
        Ok(LstmpLayer {
            wx: Parameter::new(n("wx"), xavier_init(&[4 * cells, input], derive_seed(seed, &n("wx")))?),
            wr: Parameter::new(n("wr"), xavier_init(&[4 * cells, proj], derive_seed(seed, &n("wr")))?),
            b: Parameter::zeros(n("b"), &[4 * cells]),
            wp: Parameter::new(n("wp"), xavier_init(&[proj, cells], derive_seed(seed, &n("wp")))?),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.wx.value.shape()[1]
    }

    pub fn cells(&self) -> usize {
        self.wp.value.shape()[1]
    }

    pub fn proj(&self) -> usize {
        self.wp.value.shape()[0]
    }

    /// `4C(I + P) + 4C + PC`.
    pub fn param_count(input: usize, cells: usize, proj: usize) -> usize {
        4 * cells * (input + proj) + 4 * cells + proj * cells
    }

    /// Runs `steps` frames of `batch` streams from zero initial state.
    pub fn forward(&self, x: &Tensor<F>, steps: usize, batch: usize) -> Result<(Tensor<F>, LstmpCache<F>)> {
        let (c_n, p_n) = (self.cells(), self.proj());
        if x.cols() != self.input_dim() || x.rows() != steps * batch {
            return Err(Error::shape(
                format!("input of {}", self.wx.name),
                &[steps * batch, self.input_dim()],
                x.shape(),
            ));
        }
        let rows = steps * batch;
        let g4 = 4 * c_n;
        let mut gates = x.matmul(false, &self.wx.value, true)?;
        gates.add_row_vector(self.b.value.data());
        let mut c = Tensor::zeros(&[rows, c_n]);
        let mut tanh_c = Tensor::zeros(&[rows, c_n]);
        let mut m = Tensor::zeros(&[rows, c_n]);
        let mut r = Tensor::zeros(&[rows, p_n]);
        for t in 0..steps {
            let span = t * batch..(t + 1) * batch;
            if t > 0 {
                let prev = &r.data()[(t - 1) * batch * p_n..t * batch * p_n];
                F::gemm(
                    batch,
                    p_n,
                    g4,
                    F::one(),
                    prev,
                    false,
                    self.wr.value.data(),
                    true,
                    F::one(),
                    &mut gates.data_mut()[t * batch * g4..(t + 1) * batch * g4],
                );
            }
            for bi in span.clone() {
                let g = &mut gates.data_mut()[bi * g4..(bi + 1) * g4];
                for j in 0..c_n {
                    g[j] = sigmoid(g[j]);
                    g[c_n + j] = sigmoid(g[c_n + j]);
                    g[2 * c_n + j] = g[2 * c_n + j].tanh();
                    g[3 * c_n + j] = sigmoid(g[3 * c_n + j]);
                }
                let g = &gates.data()[bi * g4..(bi + 1) * g4];
                for j in 0..c_n {
                    let c_prev = if t > 0 {
                        c.data()[(bi - batch) * c_n + j]
                    } else {
                        F::zero()
                    };
                    let cv = g[c_n + j] * c_prev + g[j] * g[2 * c_n + j];
                    let tc = cv.tanh();
                    c.data_mut()[bi * c_n + j] = cv;
                    tanh_c.data_mut()[bi * c_n + j] = tc;
                    m.data_mut()[bi * c_n + j] = g[3 * c_n + j] * tc;
                }
            }
            let m_t = &m.data()[t * batch * c_n..(t + 1) * batch * c_n];
            F::gemm(
                batch,
                c_n,
                p_n,
                F::one(),
                m_t,
                false,
                self.wp.value.data(),
                true,
                F::zero(),
                &mut r.data_mut()[t * batch * p_n..(t + 1) * batch * p_n],
            );
        }
        let cache = LstmpCache {
            steps,
            batch,
            x: x.clone(),
            gates,
            c,
            tanh_c,
            m,
            r: r.clone(),
        };
        Ok((r, cache))
    }

    /// Backpropagation through time. Accumulates parameter gradients and
    /// returns the gradient with respect to the input sequence.
    pub fn backward(&mut self, cache: &LstmpCache<F>, dr_out: &Tensor<F>) -> Result<Tensor<F>> {
        let (steps, batch) = (cache.steps, cache.batch);
        let (c_n, p_n) = (self.cells(), self.proj());
        let g4 = 4 * c_n;
        let rows = steps * batch;
        dr_out.expect_shape(&[rows, p_n], "lstmp output gradient")?;
        let mut dr_total = dr_out.clone();
        let mut dgates = Tensor::zeros(&[rows, g4]);
        let mut dm = vec![F::zero(); batch * c_n];
        let mut dc_next = vec![F::zero(); batch * c_n];
        let wp = self.wp.value.data();
        let wr = self.wr.value.data();
        for t in (0..steps).rev() {
            let p_span = t * batch * p_n..(t + 1) * batch * p_n;
            if t + 1 < steps {
                // Recurrent gradient: dG_{t+1} Wr.
                let dg_next = &dgates.data()[(t + 1) * batch * g4..(t + 2) * batch * g4];
                let mut rec = vec![F::zero(); batch * p_n];
                F::gemm(batch, g4, p_n, F::one(), dg_next, false, wr, false, F::zero(), &mut rec);
                for (d, v) in dr_total.data_mut()[p_span.clone()].iter_mut().zip(rec) {
                    *d += v;
                }
            }
            F::gemm(
                batch,
                p_n,
                c_n,
                F::one(),
                &dr_total.data()[p_span],
                false,
                wp,
                false,
                F::zero(),
                &mut dm,
            );
            for b in 0..batch {
                let row = t * batch + b;
                let g = &cache.gates.data()[row * g4..(row + 1) * g4];
                let tc = &cache.tanh_c.data()[row * c_n..(row + 1) * c_n];
                let dg = &mut dgates.data_mut()[row * g4..(row + 1) * g4];
                for j in 0..c_n {
                    let (i, f, gg, o) = (g[j], g[c_n + j], g[2 * c_n + j], g[3 * c_n + j]);
                    let dmj = dm[b * c_n + j];
                    let dc = dc_next[b * c_n + j] + dmj * o * (F::one() - tc[j] * tc[j]);
                    let c_prev = if t > 0 {
                        cache.c.data()[(row - batch) * c_n + j]
                    } else {
                        F::zero()
                    };
                    dg[j] = dc * gg * i * (F::one() - i);
                    dg[c_n + j] = dc * c_prev * f * (F::one() - f);
                    dg[2 * c_n + j] = dc * i * (F::one() - gg * gg);
                    dg[3 * c_n + j] = dmj * tc[j] * o * (F::one() - o);
                    dc_next[b * c_n + j] = dc * f;
                }
            }
        }
        gemm_acc(&mut self.wp.grad, F::one(), &dr_total, true, &cache.m, false)?;
        if steps > 1 {
            let dg_tail = Tensor::from_vec(&[(steps - 1) * batch, g4], dgates.data()[batch * g4..].to_vec())?;
            let r_head = Tensor::from_vec(
                &[(steps - 1) * batch, p_n],
                cache.r.data()[..(steps - 1) * batch * p_n].to_vec(),
            )?;
            gemm_acc(&mut self.wr.grad, F::one(), &dg_tail, true, &r_head, false)?;
        }
        gemm_acc(&mut self.wx.grad, F::one(), &dgates, true, &cache.x, false)?;
        dgates.accumulate_col_sums(self.b.grad.data_mut());
        dgates.matmul(false, &self.wx.value, false)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.wx, &self.wr, &self.b, &self.wp]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.wx, &mut self.wr, &mut self.b, &mut self.wp]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formula() {
        let l = LstmpLayer::<f32>::new("l", 257, 760, 257, 0).unwrap();
        let n: usize = l.params().iter().map(|p| p.len()).sum();
        assert_eq!(n, LstmpLayer::<f32>::param_count(257, 760, 257));
        assert_eq!(n, 4 * 760 * 514 + 4 * 760 + 257 * 760);
    }

    #[test]
    fn batched_streams_are_independent() {
        let l = LstmpLayer::<f64>::new("l", 3, 4, 2, 5).unwrap();
        let (steps, batch) = (5, 2);
        let x: Vec<f64> = (0..steps * batch * 3).map(|i| (i as f64 * 0.3).cos()).collect();
        let (y, _) = l
            .forward(&Tensor::from_vec(&[steps * batch, 3], x.clone()).unwrap(), steps, batch)
            .unwrap();
        for b in 0..batch {
            let xs: Vec<f64> = (0..steps)
                .flat_map(|t| x[(t * batch + b) * 3..(t * batch + b + 1) * 3].to_vec())
                .collect();
            let (ys, _) = l
                .forward(&Tensor::from_vec(&[steps, 3], xs).unwrap(), steps, 1)
                .unwrap();
            for t in 0..steps {
                for p in 0..2 {
                    assert!((ys.data()[t * 2 + p] - y.data()[(t * batch + b) * 2 + p]).abs() < 1e-12);
                }
            }
        }
    }
}
