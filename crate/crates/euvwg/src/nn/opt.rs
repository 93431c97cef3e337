//! Optimizers over flat parameter vectors: Adam for the descent stages and
//! limited-memory BFGS with a strong Wolfe line search for polishing.
//!
//! Both are deterministic: fixed iteration order, no internal randomness,
//! and explicit state that survives staged schedules.

use std::collections::VecDeque;

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Adam with bias correction. The moment estimates persist across learning
/// rate changes, so a schedule can drop the rate without restarting.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer built for {} parameters, got {} / {}",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

struct Accepted {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// L-BFGS with the two-loop recursion. Curvature pairs survive across `run`
/// calls, so a staged schedule keeps the inverse-Hessian picture it has
/// built. Pairs that fail the curvature test are skipped rather than
/// damped.
pub struct Lbfgs {
    capacity: usize,
    pairs: VecDeque<Pair>,
    pub c1: f64,
    pub c2: f64,
    /// Objective evaluations one line search may spend.
    pub max_line_evals: usize,
}

impl Lbfgs {
    pub fn new(capacity: usize) -> Lbfgs {
        Lbfgs {
            capacity,
            pairs: VecDeque::new(),
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 25,
        }
    }

    /// Advance `iters` iterations from `params`, updating them in place, and
    /// return the loss at the final iterate. Stops early when the gradient
    /// vanishes or no line search can make progress.
    pub fn run<F>(&mut self, params: &mut Vec<f64>, mut objective: F, iters: usize) -> Result<f64>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let (mut f, mut g) = objective(params)?;
        if !f.is_finite() {
            return Err(Error::Numerical(
                "objective is not finite at the initial point".into(),
            ));
        }
        for _ in 0..iters {
            if norm(&g) <= 1e-14 * (1.0 + f.abs()) {
                break;
            }
            let mut d = self.direction(&g);
            if dot(&d, &g) >= 0.0 {
                // The history produced a non-descent direction; drop it.
                self.pairs.clear();
                d = g.iter().map(|v| -v).collect();
            }
            let Some(step) = self.wolfe_search(params, f, &g, &d, &mut objective)? else {
                if self.pairs.is_empty() {
                    break;
                }
                self.pairs.clear();
                continue;
            };
            let s: Vec<f64> = step.x.iter().zip(params.iter()).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = step.g.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-10 * norm(&s) * norm(&y) {
                if self.pairs.len() == self.capacity {
                    self.pairs.pop_front();
                }
                self.pairs.push_back(Pair {
                    s,
                    y,
                    rho: 1.0 / sy,
                });
            }
            *params = step.x;
            f = step.f;
            g = step.g;
        }
        Ok(f)
    }

    /// Two-loop recursion with the standard gamma scaling of the seed
    /// Hessian.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for pair in self.pairs.iter().rev() {
            let a = pair.rho * dot(&pair.s, &q);
            for (qi, yi) in q.iter_mut().zip(&pair.y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match self.pairs.back() {
            Some(pair) => dot(&pair.s, &pair.y) / dot(&pair.y, &pair.y),
            None => 1.0,
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for (pair, a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = pair.rho * dot(&pair.y, &q);
            for (qi, si) in q.iter_mut().zip(&pair.s) {
                *qi += (a - b) * si;
            }
        }
        for qi in q.iter_mut() {
            *qi = -*qi;
        }
        q
    }

    /// Bracket-then-zoom search for a step satisfying the strong Wolfe
    /// conditions. Non-finite probes count as overshoots and shrink the
    /// bracket. If the curvature condition can never be certified within
    /// the evaluation budget, the best point satisfying the decrease
    /// condition is returned instead; a `None` means no progress at all.
    fn wolfe_search<F>(
        &self,
        x0: &[f64],
        f0: f64,
        g0: &[f64],
        d: &[f64],
        objective: &mut F,
    ) -> Result<Option<Accepted>>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let dg0 = dot(g0, d);
        if dg0 >= 0.0 {
            return Ok(None);
        }
        let at = |alpha: f64| -> Vec<f64> {
            x0.iter().zip(d).map(|(p, di)| p + alpha * di).collect()
        };
        let mut evals = 0usize;
        let mut best: Option<Accepted> = None;
        let mut alpha_prev = 0.0;
        let mut f_prev = f0;
        let mut alpha = 1.0;
        // Bracketing: grow the step until the decrease condition fails (the
        // minimum is behind us) or the slope turns non-negative.
        let mut bracket = None;
        while evals < self.max_line_evals {
            evals += 1;
            let x = at(alpha);
            let (fa, ga) = objective(&x)?;
            let dga = dot(&ga, d);
            if !fa.is_finite()
                || fa > f0 + self.c1 * alpha * dg0
                || (fa >= f_prev && alpha_prev > 0.0)
            {
                bracket = Some((alpha_prev, f_prev, alpha));
                break;
            }
            if best.as_ref().map_or(true, |b| fa < b.f) {
                best = Some(Accepted {
                    x: x.clone(),
                    f: fa,
                    g: ga.clone(),
                });
            }
            if dga.abs() <= -self.c2 * dg0 {
                return Ok(Some(Accepted { x, f: fa, g: ga }));
            }
            if dga >= 0.0 {
                bracket = Some((alpha, fa, alpha_prev));
                break;
            }
            alpha_prev = alpha;
            f_prev = fa;
            alpha *= 2.0;
        }
        let Some((mut a_lo, mut f_lo, mut a_hi)) = bracket else {
            return Ok(best);
        };
        // Zoom by bisection. Invariant: a_lo satisfies the decrease
        // condition and the interval holds a strong Wolfe point.
        while evals < self.max_line_evals {
            if (a_hi - a_lo).abs() <= 1e-12 * (a_lo.abs() + a_hi.abs()).max(1.0) {
                break;
            }
            evals += 1;
            let aj = 0.5 * (a_lo + a_hi);
            let x = at(aj);
            let (fj, gj) = objective(&x)?;
            let dgj = dot(&gj, d);
            if !fj.is_finite() || fj > f0 + self.c1 * aj * dg0 || fj >= f_lo {
                a_hi = aj;
                continue;
            }
            if best.as_ref().map_or(true, |b| fj < b.f) {
                best = Some(Accepted {
                    x: x.clone(),
                    f: fj,
                    g: gj.clone(),
                });
            }
            if dgj.abs() <= -self.c2 * dg0 {
                return Ok(Some(Accepted { x, f: fj, g: gj }));
            }
            if dgj * (a_hi - a_lo) >= 0.0 {
                a_hi = a_lo;
            }
            a_lo = aj;
            f_lo = fj;
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[f64]) -> (f64, Vec<f64>) {
        let scale = [1.0, 10.0, 0.1, 3.0];
        let target = [2.0, -1.0, 0.5, 0.0];
        let f = p
            .iter()
            .zip(scale)
            .zip(target)
            .map(|((pi, si), ti)| si * (pi - ti) * (pi - ti))
            .sum();
        let g = p
            .iter()
            .zip(scale)
            .zip(target)
            .map(|((pi, si), ti)| 2.0 * si * (pi - ti))
            .collect();
        (f, g)
    }

    fn run_adam_schedule() -> Vec<f64> {
        let mut p = vec![0.0; 4];
        let mut adam = Adam::new(4);
        for _ in 0..3000 {
            let (_, g) = quadratic(&p);
            adam.step(&mut p, &g, 0.05).unwrap();
        }
        // Drop the rate without resetting the moments.
        for _ in 0..2000 {
            let (_, g) = quadratic(&p);
            adam.step(&mut p, &g, 1e-3).unwrap();
        }
        p
    }

    #[test]
    fn adam_minimizes_a_separable_quadratic() {
        let p = run_adam_schedule();
        let target = [2.0, -1.0, 0.5, 0.0];
        for (i, (pi, ti)) in p.iter().zip(target).enumerate() {
            assert!((pi - ti).abs() < 1e-5, "component {i}: {pi} vs {ti}");
        }
    }

    #[test]
    fn adam_is_bitwise_deterministic() {
        assert_eq!(run_adam_schedule(), run_adam_schedule());
    }

    #[test]
    fn adam_rejects_mismatched_lengths() {
        let mut adam = Adam::new(3);
        let mut p = vec![0.0; 4];
        assert!(adam.step(&mut p, &[0.0; 4], 0.1).is_err());
    }

    fn rosenbrock(p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (x, y) = (p[0], p[1]);
        let f = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
        let g = vec![
            -2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
            200.0 * (y - x * x),
        ];
        Ok((f, g))
    }

    #[test]
    fn lbfgs_minimizes_rosenbrock() {
        let mut p = vec![-1.2, 1.0];
        let mut opt = Lbfgs::new(10);
        let f = opt.run(&mut p, rosenbrock, 100).unwrap();
        assert!(f < 1e-12, "final loss {f}");
        assert!((p[0] - 1.0).abs() < 1e-6 && (p[1] - 1.0).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn lbfgs_split_runs_match_one_run() {
        let mut p1 = vec![-1.2, 1.0];
        let mut opt1 = Lbfgs::new(10);
        opt1.run(&mut p1, rosenbrock, 12).unwrap();

        let mut p2 = vec![-1.2, 1.0];
        let mut opt2 = Lbfgs::new(10);
        opt2.run(&mut p2, rosenbrock, 6).unwrap();
        opt2.run(&mut p2, rosenbrock, 6).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn lbfgs_recovers_from_nonfinite_probes() {
        // Log barrier: a unit step from the start lands far outside the
        // domain and the probe returns NaN, which must shrink the bracket
        // rather than poison the state.
        let barrier = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
            let x = p[0];
            let f = -(1.0 - x * x).ln();
            let g = vec![2.0 * x / (1.0 - x * x)];
            Ok((f, g))
        };
        let mut p = vec![0.99];
        let mut opt = Lbfgs::new(10);
        let f = opt.run(&mut p, barrier, 50).unwrap();
        assert!(p[0].abs() < 1e-6, "minimum missed: {p:?}");
        assert!(f.abs() < 1e-10);
    }
}
