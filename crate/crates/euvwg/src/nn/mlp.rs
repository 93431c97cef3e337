//! Dense tanh networks with reverse-mode parameter gradients and exact
//! input-derivative jets.
//!
//! Two training regimes drive the design. Operator-style training needs
//! plain batched evaluation plus the pullback of a loss gradient onto the
//! parameters. Physics-informed training additionally needs the network's
//! exact first and pure second derivatives with respect to its two inputs,
//! and those derivatives must themselves be differentiable with respect to
//! the parameters. Both reverse passes replay a tape stored by the forward
//! pass; the heavy work is batched column-major GEMMs.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network: tanh on hidden layers, identity on the last.
/// Batches live in columns, so a forward pass maps (inputs, b) to
/// (outputs, b).
#[derive(Clone, Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    /// weights[l] has shape (sizes[l + 1], sizes[l]).
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Forward records consumed by `Mlp::backward`: the input batch and every
/// hidden activation.
#[derive(Clone, Debug)]
pub struct Tape {
    input: Array2<f64>,
    acts: Vec<Array2<f64>>,
}

/// Value and exact input derivatives of one batch: d/dx, d/dz and the pure
/// second derivatives. Mixed second derivatives never enter the residuals
/// downstream, so they are not carried.
#[derive(Clone, Debug)]
pub struct Jet {
    pub v: Array2<f64>,
    pub dx: Array2<f64>,
    pub dz: Array2<f64>,
    pub dxx: Array2<f64>,
    pub dzz: Array2<f64>,
}

impl Jet {
    pub fn zeros(rows: usize, cols: usize) -> Jet {
        Jet {
            v: Array2::zeros((rows, cols)),
            dx: Array2::zeros((rows, cols)),
            dz: Array2::zeros((rows, cols)),
            dxx: Array2::zeros((rows, cols)),
            dzz: Array2::zeros((rows, cols)),
        }
    }
}

/// Pre-activation derivative jets of one hidden layer. The pre-activation
/// value itself is never needed again: the stored activation determines
/// every tanh derivative.
#[derive(Clone, Debug)]
struct PreJets {
    dx: Array2<f64>,
    dz: Array2<f64>,
    dxx: Array2<f64>,
    dzz: Array2<f64>,
}

/// Forward records consumed by `Mlp::backward_jet`.
#[derive(Clone, Debug)]
pub struct JetTape {
    /// Post-activation jets entering each linear layer; inputs[0] holds the
    /// coordinates with unit first derivatives.
    inputs: Vec<Jet>,
    pre: Vec<PreJets>,
}

/// Parameter-space gradients in the network's own shapes.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    fn zeros_like(net: &Mlp) -> Gradients {
        Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    /// Same flat layout as `Mlp::params`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Serializable snapshot: layer sizes plus the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. The draw order is fixed (layer
    /// by layer, row-major), so a seed pins the network exactly.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Mlp> {
        if sizes.len() < 2 {
            return Err(Error::Config(
                "a network needs an input and an output layer".into(),
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be nonzero".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let lim = (6.0 / (n_in + n_out) as f64).sqrt();
            weights.push(Array2::from_shape_fn((n_out, n_in), |_| {
                rng.random_range(-lim..lim)
            }));
            biases.push(Array1::zeros(n_out));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }

    /// Flat parameter vector: per layer, the weight matrix in row-major
    /// order, then the bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[at];
                at += 1;
            }
            for v in b.iter_mut() {
                *v = flat[at];
                at += 1;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            sizes: self.sizes.clone(),
            params: self.params(),
        }
    }

    pub fn from_checkpoint(ck: &MlpCheckpoint) -> Result<Mlp> {
        let mut net = Mlp::new(&ck.sizes, 0)?;
        net.set_params(&ck.params)?;
        Ok(net)
    }

    fn affine(&self, l: usize, a: &Array2<f64>) -> Array2<f64> {
        let mut z = self.weights[l].dot(a);
        z += &self.biases[l].view().insert_axis(Axis(1));
        z
    }

    /// Batched evaluation. Returns the output and the tape the reverse pass
    /// replays.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Tape)> {
        if x.nrows() != self.sizes[0] {
            return Err(Error::Shape(format!(
                "input has {} rows, network expects {}",
                x.nrows(),
                self.sizes[0]
            )));
        }
        let n_lin = self.weights.len();
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(n_lin - 1);
        for l in 0..n_lin - 1 {
            let prev = if l == 0 { x } else { &acts[l - 1] };
            acts.push(self.affine(l, prev).mapv_into(f64::tanh));
        }
        let y = self.affine(n_lin - 1, acts.last().unwrap_or(x));
        Ok((
            y,
            Tape {
                input: x.clone(),
                acts,
            },
        ))
    }

    /// Pull a loss gradient on the output back onto the parameters.
    pub fn backward(&self, tape: &Tape, out_adj: &Array2<f64>) -> Result<Gradients> {
        let n_lin = self.weights.len();
        if out_adj.dim() != (self.sizes[n_lin], tape.input.ncols()) {
            return Err(Error::Shape(format!(
                "output adjoint is {:?}, expected ({}, {})",
                out_adj.dim(),
                self.sizes[n_lin],
                tape.input.ncols()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut zbar = out_adj.clone();
        for l in (0..n_lin).rev() {
            let input = if l == 0 { &tape.input } else { &tape.acts[l - 1] };
            grads.weights[l] = zbar.dot(&input.t());
            grads.biases[l] = zbar.sum_axis(Axis(1));
            if l > 0 {
                let abar = self.weights[l].t().dot(&zbar);
                let t1 = tape.acts[l - 1].mapv(|a| 1.0 - a * a);
                zbar = abar * &t1;
            }
        }
        Ok(grads)
    }

    /// Forward pass carrying exact derivative jets with respect to the two
    /// inputs. A linear map propagates every jet unchanged through its
    /// weights; tanh composes through
    /// a' = 1 - a^2, (f(z))_xx = a'' z_x^2 + a' z_xx.
    pub fn forward_jet(&self, x: &Array2<f64>) -> Result<(Jet, JetTape)> {
        if self.sizes[0] != 2 {
            return Err(Error::Shape(
                "derivative jets are defined for two-input networks".into(),
            ));
        }
        if x.nrows() != 2 {
            return Err(Error::Shape(format!(
                "input has {} rows, expected 2",
                x.nrows()
            )));
        }
        let b = x.ncols();
        let mut dx0 = Array2::zeros((2, b));
        dx0.row_mut(0).fill(1.0);
        let mut dz0 = Array2::zeros((2, b));
        dz0.row_mut(1).fill(1.0);
        self.forward_jet_from(Jet {
            v: x.clone(),
            dx: dx0,
            dz: dz0,
            dxx: Array2::zeros((2, b)),
            dzz: Array2::zeros((2, b)),
        })
    }

    /// Same pass starting from a precomputed input jet, for feature maps of
    /// the two coordinates: each input row carries its own value and
    /// (x, z)-derivatives and the chain rule through the layers is
    /// unchanged. `backward_jet` works on the returned tape as usual.
    pub fn forward_jet_from(&self, input: Jet) -> Result<(Jet, JetTape)> {
        let dim = input.v.dim();
        if dim.0 != self.sizes[0] {
            return Err(Error::Shape(format!(
                "input jet has {} rows, expected {}",
                dim.0, self.sizes[0]
            )));
        }
        for d in [&input.dx, &input.dz, &input.dxx, &input.dzz] {
            if d.dim() != dim {
                return Err(Error::Shape(
                    "input jet arrays disagree on shape".into(),
                ));
            }
        }
        let mut inputs = vec![input];
        let n_lin = self.weights.len();
        let mut pre = Vec::with_capacity(n_lin - 1);
        for l in 0..n_lin {
            let a = inputs.last().expect("layer inputs are never empty");
            let w = &self.weights[l];
            let zv = self.affine(l, &a.v);
            let zdx = w.dot(&a.dx);
            let zdz = w.dot(&a.dz);
            let zdxx = w.dot(&a.dxx);
            let zdzz = w.dot(&a.dzz);
            if l + 1 == n_lin {
                let out = Jet {
                    v: zv,
                    dx: zdx,
                    dz: zdz,
                    dxx: zdxx,
                    dzz: zdzz,
                };
                return Ok((out, JetTape { inputs, pre }));
            }
            let t = zv.mapv_into(f64::tanh);
            let t1 = t.mapv(|a| 1.0 - a * a);
            let t2 = (&t * &t1) * -2.0;
            let adx = &t1 * &zdx;
            let adz = &t1 * &zdz;
            let adxx = &t1 * &zdxx + &t2 * &(&zdx * &zdx);
            let adzz = &t1 * &zdzz + &t2 * &(&zdz * &zdz);
            pre.push(PreJets {
                dx: zdx,
                dz: zdz,
                dxx: zdxx,
                dzz: zdzz,
            });
            inputs.push(Jet {
                v: t,
                dx: adx,
                dz: adz,
                dxx: adxx,
                dzz: adzz,
            });
        }
        unreachable!("the loop returns on the output layer")
    }

    /// Reverse pass through a jet forward. `out_adj` holds dL/d(jet) for
    /// every tracked derivative with the output batch shape; the result is
    /// dL/d(parameters) of the full jet computation.
    pub fn backward_jet(&self, tape: &JetTape, out_adj: &Jet) -> Result<Gradients> {
        let n_lin = self.weights.len();
        let b = tape.inputs[0].v.ncols();
        if out_adj.v.dim() != (self.sizes[n_lin], b) {
            return Err(Error::Shape(format!(
                "jet adjoint is {:?}, expected ({}, {})",
                out_adj.v.dim(),
                self.sizes[n_lin],
                b
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut zbar = out_adj.clone();
        for l in (0..n_lin).rev() {
            let a = &tape.inputs[l];
            grads.weights[l] = zbar.v.dot(&a.v.t())
                + zbar.dx.dot(&a.dx.t())
                + zbar.dz.dot(&a.dz.t())
                + zbar.dxx.dot(&a.dxx.t())
                + zbar.dzz.dot(&a.dzz.t());
            grads.biases[l] = zbar.v.sum_axis(Axis(1));
            if l == 0 {
                break;
            }
            let wt = self.weights[l].t();
            let abar = Jet {
                v: wt.dot(&zbar.v),
                dx: wt.dot(&zbar.dx),
                dz: wt.dot(&zbar.dz),
                dxx: wt.dot(&zbar.dxx),
                dzz: wt.dot(&zbar.dzz),
            };
            // Undo the tanh jet: t carries the activation values, p the
            // pre-activation derivative jets, and a''' = -2 (a'^2 + a a'').
            let t = &tape.inputs[l].v;
            let p = &tape.pre[l - 1];
            let t1 = t.mapv(|a| 1.0 - a * a);
            let t2 = (t * &t1) * -2.0;
            let t3 = (&t1 * &t1 + t * &t2) * -2.0;
            let v = &abar.v * &t1
                + &abar.dx * &(&t2 * &p.dx)
                + &abar.dz * &(&t2 * &p.dz)
                + &abar.dxx * &(&t3 * &(&p.dx * &p.dx) + &t2 * &p.dxx)
                + &abar.dzz * &(&t3 * &(&p.dz * &p.dz) + &t2 * &p.dzz);
            let dx = &abar.dx * &t1 + (&abar.dxx * &t2) * &p.dx * 2.0;
            let dz = &abar.dz * &t1 + (&abar.dzz * &t2) * &p.dz * 2.0;
            let dxx = &abar.dxx * &t1;
            let dzz = &abar.dzz * &t1;
            zbar = Jet {
                v,
                dx,
                dz,
                dxx,
                dzz,
            };
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic pseudo-random batch without touching the seed stream.
    fn test_batch(rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| ((i * 7 + j * 3) as f64 * 0.7).sin())
    }

    fn central_diff_grad(net: &mut Mlp, loss: &mut dyn FnMut(&Mlp) -> f64) -> Vec<f64> {
        let p0 = net.params();
        let mut fd = vec![0.0; p0.len()];
        for i in 0..p0.len() {
            let h = 1e-6 * p0[i].abs().max(1.0);
            let mut p = p0.clone();
            p[i] = p0[i] + h;
            net.set_params(&p).unwrap();
            let fp = loss(net);
            p[i] = p0[i] - h;
            net.set_params(&p).unwrap();
            let fm = loss(net);
            fd[i] = (fp - fm) / (2.0 * h);
        }
        net.set_params(&p0).unwrap();
        fd
    }

    #[test]
    fn init_is_pinned_by_the_seed() {
        let a = Mlp::new(&[3, 8, 2], 42).unwrap();
        let b = Mlp::new(&[3, 8, 2], 42).unwrap();
        let c = Mlp::new(&[3, 8, 2], 43).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        let lim = (6.0 / 11.0f64).sqrt();
        assert!(a.params().iter().all(|p| p.abs() <= lim));
    }

    #[test]
    fn init_variance_matches_the_uniform_law() {
        // 100x100 weights: uniform on +-sqrt(6/200) has variance 2/200.
        let net = Mlp::new(&[100, 100], 7).unwrap();
        let w = &net.weights[0];
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.mapv(|p| (p - mean) * (p - mean)).sum() / (n - 1.0);
        assert!((var - 0.01).abs() < 0.0005, "var = {var}");
    }

    #[test]
    fn huge_inputs_saturate_but_stay_bounded() {
        let net = Mlp::new(&[2, 16, 16, 3], 5).unwrap();
        let x = test_batch(2, 4).mapv_into(|v| v * 1e6);
        let (y, tape) = net.forward(&x).unwrap();
        assert!(tape.acts.iter().all(|a| a.iter().all(|v| v.abs() <= 1.0)));
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_matches_a_hand_built_net() {
        // y = -tanh(2x + 0.5) + 0.25
        let mut net = Mlp::new(&[1, 1, 1], 0).unwrap();
        net.set_params(&[2.0, 0.5, -1.0, 0.25]).unwrap();
        let x = Array2::from_shape_fn((1, 3), |(_, j)| j as f64 - 1.0);
        let (y, _) = net.forward(&x).unwrap();
        for j in 0..3 {
            let want = -(2.0 * x[(0, j)] + 0.5).tanh() + 0.25;
            assert!((y[(0, j)] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut net = Mlp::new(&[3, 6, 5, 2], 11).unwrap();
        let x = test_batch(3, 4);
        let target = test_batch(2, 4);
        let (y, tape) = net.forward(&x).unwrap();
        let adj = &y - &target;
        let grads = net.backward(&tape, &adj).unwrap().flatten();
        let fd = central_diff_grad(&mut net, &mut |n: &Mlp| {
            let (y, _) = n.forward(&x).unwrap();
            0.5 * (&y - &target).iter().map(|v| v * v).sum::<f64>()
        });
        assert_eq!(grads.len(), fd.len());
        for (i, (a, b)) in grads.iter().zip(&fd).enumerate() {
            assert!(
                (a - b).abs() <= 1e-6 * (1.0 + b.abs()),
                "parameter {i}: reverse {a} vs central {b}"
            );
        }
    }

    #[test]
    fn jet_value_agrees_with_plain_forward() {
        let net = Mlp::new(&[2, 9, 7, 3], 5).unwrap();
        let x = test_batch(2, 6);
        let (y, _) = net.forward(&x).unwrap();
        let (jet, _) = net.forward_jet(&x).unwrap();
        for (a, b) in y.iter().zip(jet.v.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn jets_match_central_differences_in_the_inputs() {
        let net = Mlp::new(&[2, 8, 8, 1], 3).unwrap();
        let f = |xx: f64, zz: f64| {
            let v = Array2::from_shape_fn((2, 1), |(i, _)| if i == 0 { xx } else { zz });
            net.forward(&v).unwrap().0[(0, 0)]
        };
        for p in [[0.3, -0.7], [-1.1, 0.4], [0.0, 0.0]] {
            let x = Array2::from_shape_fn((2, 1), |(i, _)| p[i]);
            let (jet, _) = net.forward_jet(&x).unwrap();
            let h = 1e-4;
            let f0 = f(p[0], p[1]);
            let fdx = (f(p[0] + h, p[1]) - f(p[0] - h, p[1])) / (2.0 * h);
            let fdz = (f(p[0], p[1] + h) - f(p[0], p[1] - h)) / (2.0 * h);
            let fdxx = (f(p[0] + h, p[1]) - 2.0 * f0 + f(p[0] - h, p[1])) / (h * h);
            let fdzz = (f(p[0], p[1] + h) - 2.0 * f0 + f(p[0], p[1] - h)) / (h * h);
            assert!((jet.v[(0, 0)] - f0).abs() < 1e-15);
            assert!((jet.dx[(0, 0)] - fdx).abs() < 1e-7, "dx at {p:?}");
            assert!((jet.dz[(0, 0)] - fdz).abs() < 1e-7, "dz at {p:?}");
            assert!((jet.dxx[(0, 0)] - fdxx).abs() < 1e-5, "dxx at {p:?}");
            assert!((jet.dzz[(0, 0)] - fdzz).abs() < 1e-5, "dzz at {p:?}");
        }
    }

    #[test]
    fn jet_backward_matches_central_differences() {
        let mut net = Mlp::new(&[2, 6, 6, 2], 7).unwrap();
        let x = test_batch(2, 5);
        // Distinct weights per jet component so every reverse path carries
        // a different factor.
        let ws = [0.5, 1.5, 0.7, 0.3, 1.1];
        let sq = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
        let (jet, tape) = net.forward_jet(&x).unwrap();
        let adj = Jet {
            v: &jet.v * ws[0],
            dx: &jet.dx * ws[1],
            dz: &jet.dz * ws[2],
            dxx: &jet.dxx * ws[3],
            dzz: &jet.dzz * ws[4],
        };
        let grads = net.backward_jet(&tape, &adj).unwrap().flatten();
        let fd = central_diff_grad(&mut net, &mut |n: &Mlp| {
            let (j, _) = n.forward_jet(&x).unwrap();
            0.5 * (ws[0] * sq(&j.v)
                + ws[1] * sq(&j.dx)
                + ws[2] * sq(&j.dz)
                + ws[3] * sq(&j.dxx)
                + ws[4] * sq(&j.dzz))
        });
        for (i, (a, b)) in grads.iter().zip(&fd).enumerate() {
            assert!(
                (a - b).abs() <= 1e-6 * (1.0 + b.abs()),
                "parameter {i}: reverse {a} vs central {b}"
            );
        }
    }

    #[test]
    fn checkpoint_roundtrips_bitwise_through_json() {
        let net = Mlp::new(&[2, 5, 3], 19).unwrap();
        let text = serde_json::to_string(&net.to_checkpoint()).unwrap();
        let back: MlpCheckpoint = serde_json::from_str(&text).unwrap();
        let restored = Mlp::from_checkpoint(&back).unwrap();
        assert_eq!(net.params(), restored.params());
        assert_eq!(net.sizes(), restored.sizes());
    }

    #[test]
    fn shape_errors_are_reported() {
        let net = Mlp::new(&[3, 4, 2], 0).unwrap();
        assert!(net.forward(&Array2::zeros((2, 5))).is_err());
        assert!(net.forward_jet(&Array2::zeros((3, 5))).is_err());
        let mut net = net;
        assert!(net.set_params(&[0.0; 3]).is_err());
        assert!(Mlp::new(&[4], 0).is_err());
        assert!(Mlp::new(&[4, 0, 2], 0).is_err());
    }
}
