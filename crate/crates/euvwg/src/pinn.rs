//! Physics-informed field network for the scalar 2D problem.
//!
//! The network maps scaled coordinates to (Re, Im) of the total E_y field
//! and is trained without reference data on a composite loss: the
//! Helmholtz residual at interior collocation points plus boundary terms.
//! The boundary terms impose x-periodicity and per-harmonic radiation
//! conditions: at the top the scattered field (total minus incident) must
//! be outgoing into vacuum, at the bottom the total field must be outgoing
//! into the substrate. Radiation conditions act on harmonics because a
//! plain pointwise condition cannot distinguish travel directions; the
//! projection is a DFT over uniform boundary samples.
//!
//! The network does not see the scaled coordinates directly but a
//! trigonometric feature map of them (plus the raw pair): plain tanh
//! networks resolve the oscillatory field and its quasi-periodic phase
//! slowly, while low-order sin/cos features make both representable with
//! small weights from the start.
//!
//! Everything differentiates analytically: the network's spatial jets come
//! from `nn::Mlp::forward_jet_from` seeded with the exact feature jet, and
//! the loss adjoints (including the DFT projections) are pulled back
//! through `backward_jet`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_harmonics, MaskStack, PlaneWaveSource};
use crate::matching::{operator_kind, WgSolution};
use crate::modes::{branch_sqrt, OperatorKind};
use crate::nn::{Adam, Jet, Lbfgs, Mlp, MlpCheckpoint};
use crate::numerics::{c64, C64};
use crate::oracles::relative_l2;

/// Scalar 2D scattering description reduced to what the losses need.
/// Incidence must be commensurate with the period, so the incident
/// transverse wavenumber is exactly `kappa_x * m0`.
#[derive(Clone, Debug)]
pub struct PinnProblem {
    pub stack: MaskStack,
    pub k0: f64,
    pub kappa_x: f64,
    pub m0: i64,
    pub k0z: f64,
    pub eps_substrate: C64,
    pub depth: f64,
}

pub fn pinn_problem(stack: &MaskStack, source: &PlaneWaveSource) -> Result<PinnProblem> {
    if operator_kind(source) != OperatorKind::Te2d {
        return Err(Error::Config(
            "the field network implements the scalar TE problem only".into(),
        ));
    }
    let (k0x, _, _) = source.k_components();
    let kappa_x = std::f64::consts::TAU / stack.l_x;
    let guess = (k0x.abs() / kappa_x).ceil() as usize + 1;
    let grid = build_harmonics(stack, source, guess, 0)?;
    let depth = stack.total_thickness();
    if depth <= 0.0 {
        return Err(Error::Config("the network needs a stack with depth".into()));
    }
    Ok(PinnProblem {
        stack: stack.clone(),
        k0: grid.k0,
        kappa_x: grid.kappa_x,
        m0: grid.m0,
        k0z: grid.k0z,
        eps_substrate: stack.eps_substrate,
        depth,
    })
}

/// Loss weights, sampling resolution, and the two-stage schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PinnConfig {
    pub hidden: Vec<usize>,
    pub lambda_bc: f64,
    pub lambda_r: f64,
    /// Collocation intervals per axis; interior points sit on a staggered
    /// lattice of intervals^2 cells, boundary samples are 2 * intervals
    /// uniform points.
    pub intervals: usize,
    /// Extra interior exclusion around internal layer interfaces, in cells.
    pub interface_band_cells: usize,
    pub adam_epochs: usize,
    pub adam_lr: f64,
    /// LBFGS stage: `lbfgs_epochs` rounds of `lbfgs_iters` iterations with
    /// one persistent history.
    pub lbfgs_epochs: usize,
    pub lbfgs_iters: usize,
    pub lbfgs_history: usize,
    /// Radiation conditions act on harmonics |m| <= boundary_harmonics.
    pub boundary_harmonics: usize,
    /// Trigonometric input features per axis: the network sees the scaled
    /// coordinates plus sin/cos of the first `fourier_features` integer
    /// frequencies of each. 0 reduces to the plain two-input network.
    pub fourier_features: usize,
    pub seed: u64,
}

impl Default for PinnConfig {
    fn default() -> Self {
        PinnConfig {
            hidden: vec![128, 128, 128],
            lambda_bc: 10.0,
            lambda_r: 1.0,
            intervals: 100,
            interface_band_cells: 0,
            adam_epochs: 1000,
            adam_lr: 1e-3,
            lbfgs_epochs: 5,
            lbfgs_iters: 20,
            lbfgs_history: 10,
            boundary_harmonics: 10,
            fourier_features: 4,
            seed: 0,
        }
    }
}

impl PinnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.lambda_bc > 0.0 && self.lambda_r > 0.0) {
            return Err(Error::Config("loss weights must be positive".into()));
        }
        if self.intervals < 2 {
            return Err(Error::Config("need at least 2 intervals per axis".into()));
        }
        if self.adam_epochs == 0 || self.lbfgs_epochs == 0 || self.lbfgs_iters == 0 {
            return Err(Error::Config("both stages need at least one epoch".into()));
        }
        if !(self.adam_lr > 0.0) || self.lbfgs_history == 0 {
            return Err(Error::Config("invalid optimizer constants".into()));
        }
        if 2 * self.boundary_harmonics + 1 > 2 * self.intervals {
            return Err(Error::Config(
                "boundary harmonics exceed what the boundary sampling resolves".into(),
            ));
        }
        if 2 * self.fourier_features > self.intervals {
            return Err(Error::Config(
                "fourier features exceed what the collocation grid resolves".into(),
            ));
        }
        // Feature n coincides with grating order n, so the network can put
        // field content at orders up to ~2 * fourier_features (pairwise
        // feature products) with no spectral reluctance. Radiation
        // conditions must police that whole band: an evanescent order
        // outside it satisfies Helmholtz and periodicity at zero loss while
        // corrupting the field.
        if self.fourier_features > 0 && self.boundary_harmonics < 2 * self.fourier_features {
            return Err(Error::Config(
                "boundary harmonics must cover twice the fourier feature band".into(),
            ));
        }
        Ok(())
    }
}

/// Sample sets the losses are evaluated on, in physical coordinates.
#[derive(Clone, Debug)]
pub struct CollocationSet {
    /// Interior (x, z) points on a staggered double-brick lattice,
    /// interfaces excluded.
    pub interior: Vec<(f64, f64)>,
    /// Permittivity at each interior point.
    pub eps: Vec<C64>,
    /// Uniform x samples for the z = 0 boundary (no endpoint repeat).
    pub top_x: Vec<f64>,
    /// Same x samples for the z = -depth boundary.
    pub bottom_x: Vec<f64>,
    /// Depths of the periodic pairs (x = 0 vs x = L_x).
    pub pair_z: Vec<f64>,
}

/// Interior sampling on a brick-staggered lattice: cell midpoints, with x
/// shifted half a cell on alternate rows and z shifted half a cell on
/// alternate columns. A plain midpoint product grid has band-limited null
/// modes right at its own Nyquist frequency, and an optimizer over a
/// trigonometric feature basis will happily park unbounded residual
/// oscillation there, invisible to the loss; the stagger pushes the lowest
/// null to twice the grid frequency at the same point count. Boundary combs
/// carry 2 * intervals samples for the same reason. Points never land on an
/// internal layer interface: the Helmholtz residual is undefined across an
/// eps jump in z, so points closer than 1e-9 * depth (or the configured
/// band) are dropped.
pub fn build_collocation(
    stack: &MaskStack,
    intervals: usize,
    band_cells: usize,
) -> Result<CollocationSet> {
    if intervals < 2 {
        return Err(Error::Config("need at least 2 intervals per axis".into()));
    }
    let depth = stack.total_thickness();
    let l_x = stack.l_x;
    let cell = depth / intervals as f64;
    let guard = (1e-9 * depth).max(band_cells as f64 * cell);

    let mut interfaces = Vec::new();
    let mut z = 0.0;
    for layer in &stack.layers[..stack.layers.len() - 1] {
        z -= layer.thickness;
        interfaces.push(z);
    }

    let mut layer_tops = Vec::with_capacity(stack.layers.len());
    let mut top = 0.0;
    for layer in &stack.layers {
        layer_tops.push(top);
        top -= layer.thickness;
    }

    let eps_at = |x: f64, z: f64| -> C64 {
        let mut idx = stack.layers.len() - 1;
        for (j, &zt) in layer_tops.iter().enumerate() {
            if z <= zt && z > zt - stack.layers[j].thickness {
                idx = j;
                break;
            }
        }
        stack.layers[idx].pattern.eval(l_x, stack.l_y, x, 0.0)
    };

    let mut interior = Vec::new();
    let mut eps = Vec::new();
    let n = intervals as f64;
    for k in 0..intervals {
        for i in 0..intervals {
            let xi = (l_x * (i as f64 + 0.5 + 0.5 * (k % 2) as f64) / n).rem_euclid(l_x);
            let zi = -depth * (k as f64 + 0.5 + 0.5 * (i % 2) as f64) / n;
            if interfaces.iter().any(|&zj| (zi - zj).abs() < guard) {
                continue;
            }
            interior.push((xi, zi));
            eps.push(eps_at(xi, zi));
        }
    }
    if interior.is_empty() {
        return Err(Error::Config(
            "interface exclusion removed every collocation point".into(),
        ));
    }

    let n_b = 2 * intervals;
    let bx: Vec<f64> = (0..n_b).map(|i| l_x * i as f64 / n_b as f64).collect();
    let pair_z: Vec<f64> = (0..n_b)
        .map(|k| -depth * (k as f64 + 0.5) / n_b as f64)
        .collect();
    Ok(CollocationSet {
        interior,
        eps,
        top_x: bx.clone(),
        bottom_x: bx,
        pair_z,
    })
}

/// Helmholtz residual u_xx + u_zz + k0^2 eps u per point, all inputs in
/// physical coordinates.
pub fn helmholtz_residuals(
    v: &[C64],
    dxx: &[C64],
    dzz: &[C64],
    eps: &[C64],
    k0: f64,
) -> Vec<C64> {
    v.iter()
        .zip(dxx)
        .zip(dzz)
        .zip(eps)
        .map(|(((u, uxx), uzz), e)| uxx + uzz + e * (k0 * k0) * u)
        .collect()
}

fn dft_project(vals: &[C64], xs: &[f64], kappa_x: f64, m: i64) -> C64 {
    let mut acc = C64::ZERO;
    for (v, &x) in vals.iter().zip(xs) {
        acc += v * c64(0.0, kappa_x * m as f64 * x).exp();
    }
    acc / vals.len() as f64
}

/// Per-harmonic outgoing-wave residuals du/dz + sign * i * kz_m * u_m for
/// |m| <= m_b, from uniform samples of u and du/dz along one horizontal
/// boundary. The top condition uses sign = +1 on the scattered field, the
/// bottom uses sign = -1 on the total field.
pub fn radiation_residuals(
    u: &[C64],
    uz: &[C64],
    xs: &[f64],
    kappa_x: f64,
    m_b: usize,
    sign: f64,
    kz_of: impl Fn(i64) -> C64,
) -> Vec<C64> {
    (-(m_b as i64)..=m_b as i64)
        .map(|m| {
            let um = dft_project(u, xs, kappa_x, m);
            let uzm = dft_project(uz, xs, kappa_x, m);
            uzm + c64(0.0, sign) * kz_of(m) * um
        })
        .collect()
}

/// Incident trace exp(-i kappa_x m0 x + i k0z z) and its z-derivative
/// along a horizontal line.
pub fn incident_trace(
    xs: &[f64],
    kappa_x: f64,
    m0: i64,
    k0z: f64,
    z: f64,
) -> (Vec<C64>, Vec<C64>) {
    let mut u = Vec::with_capacity(xs.len());
    let mut uz = Vec::with_capacity(xs.len());
    for &x in xs {
        let v = c64(0.0, -kappa_x * m0 as f64 * x + k0z * z).exp();
        u.push(v);
        uz.push(c64(0.0, k0z) * v);
    }
    (u, uz)
}

/// Loss values of one evaluation; total = lambda_r * l_r + lambda_bc * l_bc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub l_r: f64,
    pub l_bc: f64,
}

/// Network input width for a feature depth: the two scaled coordinates
/// plus four trig rows per frequency.
pub fn feature_count(fourier_features: usize) -> usize {
    2 + 4 * fourier_features
}

/// Input jet of the trigonometric feature map on scaled coordinates in
/// [-1, 1]. Row layout per column: x, z, then sin(pi n x), cos(pi n x),
/// sin(pi n z), cos(pi n z) for n = 1..=f. Integer frequencies make every
/// x-row take equal values at x = -1 and x = 1, so the feature map itself
/// never breaks periodicity; the derivative rows are exact, which keeps
/// `forward_jet_from` jets exact.
fn feature_jet(batch: &Array2<f64>, f: usize) -> Jet {
    let b = batch.ncols();
    let mut jet = Jet::zeros(feature_count(f), b);
    for c in 0..b {
        let x = batch[(0, c)];
        let z = batch[(1, c)];
        jet.v[(0, c)] = x;
        jet.dx[(0, c)] = 1.0;
        jet.v[(1, c)] = z;
        jet.dz[(1, c)] = 1.0;
        for n in 1..=f {
            let w = std::f64::consts::PI * n as f64;
            let r = 2 + 4 * (n - 1);
            let (sx, cx) = (w * x).sin_cos();
            jet.v[(r, c)] = sx;
            jet.dx[(r, c)] = w * cx;
            jet.dxx[(r, c)] = -w * w * sx;
            jet.v[(r + 1, c)] = cx;
            jet.dx[(r + 1, c)] = -w * sx;
            jet.dxx[(r + 1, c)] = -w * w * cx;
            let (sz, cz) = (w * z).sin_cos();
            jet.v[(r + 2, c)] = sz;
            jet.dz[(r + 2, c)] = w * cz;
            jet.dzz[(r + 2, c)] = -w * w * sz;
            jet.v[(r + 3, c)] = cz;
            jet.dz[(r + 3, c)] = -w * sz;
            jet.dzz[(r + 3, c)] = -w * w * cz;
        }
    }
    jet
}

/// Everything constant across one training run: the scaled input batch and
/// its feature jet, column layout, kz tables, and the incident trace at the
/// top boundary.
struct Assembled {
    batch: Array2<f64>,
    features: Jet,
    n_int: usize,
    n_b: usize,
    n_p: usize,
    eps: Vec<C64>,
    top_x: Vec<f64>,
    kz_top: Vec<C64>,
    kz_bot: Vec<C64>,
    inc_u: Vec<C64>,
    inc_uz: Vec<C64>,
    m_b: usize,
    k0: f64,
    kappa_x: f64,
    /// d(scaled)/d(physical) per axis.
    sx: f64,
    sz: f64,
    lambda_r: f64,
    lambda_bc: f64,
}

fn assemble(prob: &PinnProblem, colloc: &CollocationSet, cfg: &PinnConfig) -> Assembled {
    let l_x = prob.stack.l_x;
    let depth = prob.depth;
    let sx = 2.0 / l_x;
    let sz = 2.0 / depth;
    let scale_x = |x: f64| sx * x - 1.0;
    let scale_z = |z: f64| sz * (z + depth) - 1.0;

    let n_int = colloc.interior.len();
    let n_b = colloc.top_x.len();
    let n_p = colloc.pair_z.len();
    let cols = n_int + 2 * n_b + 2 * n_p;
    let mut batch = Array2::zeros((2, cols));
    for (i, &(x, z)) in colloc.interior.iter().enumerate() {
        batch[(0, i)] = scale_x(x);
        batch[(1, i)] = scale_z(z);
    }
    for (i, &x) in colloc.top_x.iter().enumerate() {
        batch[(0, n_int + i)] = scale_x(x);
        batch[(1, n_int + i)] = scale_z(0.0);
    }
    for (i, &x) in colloc.bottom_x.iter().enumerate() {
        batch[(0, n_int + n_b + i)] = scale_x(x);
        batch[(1, n_int + n_b + i)] = scale_z(-depth);
    }
    for (j, &z) in colloc.pair_z.iter().enumerate() {
        batch[(0, n_int + 2 * n_b + j)] = scale_x(0.0);
        batch[(1, n_int + 2 * n_b + j)] = scale_z(z);
        batch[(0, n_int + 2 * n_b + n_p + j)] = scale_x(l_x);
        batch[(1, n_int + 2 * n_b + n_p + j)] = scale_z(z);
    }

    let m_b = cfg.boundary_harmonics;
    let k0sq = prob.k0 * prob.k0;
    let kz_top: Vec<C64> = (-(m_b as i64)..=m_b as i64)
        .map(|m| {
            let kx = prob.kappa_x * m as f64;
            branch_sqrt(c64(k0sq - kx * kx, 0.0))
        })
        .collect();
    let kz_bot: Vec<C64> = (-(m_b as i64)..=m_b as i64)
        .map(|m| {
            let kx = prob.kappa_x * m as f64;
            branch_sqrt(prob.eps_substrate * k0sq - c64(kx * kx, 0.0))
        })
        .collect();
    let (inc_u, inc_uz) = incident_trace(&colloc.top_x, prob.kappa_x, prob.m0, prob.k0z, 0.0);

    let features = feature_jet(&batch, cfg.fourier_features);
    Assembled {
        batch,
        features,
        n_int,
        n_b,
        n_p,
        eps: colloc.eps.clone(),
        top_x: colloc.top_x.clone(),
        kz_top,
        kz_bot,
        inc_u,
        inc_uz,
        m_b,
        k0: prob.k0,
        kappa_x: prob.kappa_x,
        sx,
        sz,
        lambda_r: cfg.lambda_r,
        lambda_bc: cfg.lambda_bc,
    }
}

/// One full-batch loss + parameter gradient evaluation. The adjoint jet is
/// filled term by term; every physical-derivative factor (sx, sz powers)
/// reappears on the corresponding adjoint entry.
fn loss_and_grad(net: &Mlp, asm: &Assembled) -> Result<(LossParts, Vec<f64>)> {
    let (jet, tape) = net.forward_jet_from(asm.features.clone())?;
    let cols = asm.batch.ncols();
    let mut adj = Jet::zeros(2, cols);
    let sx2 = asm.sx * asm.sx;
    let sz2 = asm.sz * asm.sz;
    let k0sq = asm.k0 * asm.k0;

    // Interior Helmholtz residual, complex via the two output rows.
    let mut l_r = 0.0;
    let wi = 1.0 / asm.n_int as f64;
    for i in 0..asm.n_int {
        let e = asm.eps[i];
        let u = c64(jet.v[(0, i)], jet.v[(1, i)]);
        let uxx = c64(jet.dxx[(0, i)], jet.dxx[(1, i)]) * sx2;
        let uzz = c64(jet.dzz[(0, i)], jet.dzz[(1, i)]) * sz2;
        let res = uxx + uzz + e * k0sq * u;
        l_r += res.norm_sqr() * wi;
        // d|res|^2 / d(u0, u1): res depends on u through k0^2 * e * u.
        let w = 2.0 * asm.lambda_r * wi;
        adj.v[(0, i)] += w * k0sq * (res.re * e.re + res.im * e.im);
        adj.v[(1, i)] += w * k0sq * (-res.re * e.im + res.im * e.re);
        adj.dxx[(0, i)] += w * res.re * sx2;
        adj.dxx[(1, i)] += w * res.im * sx2;
        adj.dzz[(0, i)] += w * res.re * sz2;
        adj.dzz[(1, i)] += w * res.im * sz2;
    }

    // Periodic value mismatch between x = 0 and x = L_x columns.
    let base = asm.n_int + 2 * asm.n_b;
    let wp = 1.0 / asm.n_p as f64;
    let mut l_per = 0.0;
    for j in 0..asm.n_p {
        let (l, r) = (base + j, base + asm.n_p + j);
        for row in 0..2 {
            let d = jet.v[(row, l)] - jet.v[(row, r)];
            l_per += d * d * wp;
            adj.v[(row, l)] += 2.0 * asm.lambda_bc * wp * d;
            adj.v[(row, r)] -= 2.0 * asm.lambda_bc * wp * d;
        }
    }

    // Radiation terms. Each harmonic residual is linear in the sampled
    // boundary values, rho_m = sum_i c_mi (uz_i + s i kz_m u_i) + const,
    // so the pullback onto sample i is sum_m conj(rho_m) c_mi (factors).
    let m_count = (2 * asm.m_b + 1) as f64;
    let n_b = asm.n_b;
    let radiation = |col0: usize,
                     kz: &[C64],
                     sign: f64,
                     inc: Option<(&[C64], &[C64])>,
                     adj: &mut Jet|
     -> f64 {
        let mut u = Vec::with_capacity(n_b);
        let mut uz = Vec::with_capacity(n_b);
        for i in 0..n_b {
            let c = col0 + i;
            u.push(c64(jet.v[(0, c)], jet.v[(1, c)]));
            uz.push(c64(jet.dz[(0, c)], jet.dz[(1, c)]) * asm.sz);
        }
        if let Some((iu, iuz)) = inc {
            for i in 0..n_b {
                u[i] -= iu[i];
                uz[i] -= iuz[i];
            }
        }
        let mut loss = 0.0;
        let wr = 2.0 * asm.lambda_bc / m_count;
        for (t, m) in (-(asm.m_b as i64)..=asm.m_b as i64).enumerate() {
            let um = dft_project(&u, &asm.top_x, asm.kappa_x, m);
            let uzm = dft_project(&uz, &asm.top_x, asm.kappa_x, m);
            let rho = uzm + c64(0.0, sign) * kz[t] * um;
            loss += rho.norm_sqr() / m_count;
            // For complex-linear rho = a u + b uz: dL/d(Re u) = Re(g),
            // dL/d(Im u) = -Im(g) with g = conj(rho) * a * weight.
            let rc = rho.conj() * wr;
            for i in 0..n_b {
                let cmi = c64(0.0, asm.kappa_x * m as f64 * asm.top_x[i]).exp()
                    / n_b as f64;
                let gu = rc * c64(0.0, sign) * kz[t] * cmi;
                let gz = rc * cmi;
                let c = col0 + i;
                adj.v[(0, c)] += gu.re;
                adj.v[(1, c)] -= gu.im;
                adj.dz[(0, c)] += gz.re * asm.sz;
                adj.dz[(1, c)] -= gz.im * asm.sz;
            }
        }
        loss
    };

    let l_top = radiation(
        asm.n_int,
        &asm.kz_top,
        1.0,
        Some((&asm.inc_u, &asm.inc_uz)),
        &mut adj,
    );
    let l_bot = radiation(asm.n_int + n_b, &asm.kz_bot, -1.0, None, &mut adj);

    let l_bc = l_per + l_top + l_bot;
    let total = asm.lambda_r * l_r + asm.lambda_bc * l_bc;
    let grads = net.backward_jet(&tape, &adj)?;
    Ok((
        LossParts {
            total,
            l_r,
            l_bc,
        },
        grads.flatten(),
    ))
}

/// Composite loss and its parameter gradient for one network state, with
/// the batch assembled from the given sample sets. The entry point for
/// custom training loops and for finite-difference checks of the analytic
/// gradient.
pub fn training_loss_and_grad(
    net: &Mlp,
    prob: &PinnProblem,
    colloc: &CollocationSet,
    config: &PinnConfig,
) -> Result<(LossParts, Vec<f64>)> {
    let asm = assemble(prob, colloc, config);
    loss_and_grad(net, &asm)
}

/// Trained field model over one period and the stack depth.
#[derive(Clone, Debug)]
pub struct PinnModel {
    pub net: Mlp,
    pub l_x: f64,
    pub depth: f64,
    pub fourier_features: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PinnCheckpoint {
    pub version: u32,
    pub kind: String,
    pub network: MlpCheckpoint,
    pub l_x: f64,
    pub depth: f64,
    /// Absent in checkpoints written before the feature map existed; those
    /// networks take the two coordinates directly.
    #[serde(default)]
    pub fourier_features: usize,
}

impl PinnModel {
    fn scaled_batch(&self, points: &[(f64, f64)]) -> Array2<f64> {
        let mut batch = Array2::zeros((2, points.len()));
        for (i, &(x, z)) in points.iter().enumerate() {
            batch[(0, i)] = 2.0 * x / self.l_x - 1.0;
            batch[(1, i)] = 2.0 * (z + self.depth) / self.depth - 1.0;
        }
        batch
    }

    /// Total complex field at one point of the trained domain.
    pub fn field_at(&self, x: f64, z: f64) -> Result<C64> {
        Ok(self.field_points(&[(x, z)])?[0])
    }

    pub fn field_points(&self, points: &[(f64, f64)]) -> Result<Vec<C64>> {
        let feats = feature_jet(&self.scaled_batch(points), self.fourier_features);
        let (y, _) = self.net.forward(&feats.v)?;
        Ok((0..points.len()).map(|i| c64(y[(0, i)], y[(1, i)])).collect())
    }

    /// Sample on a rectangle, x-fastest (matching `WgSolution::field_grid`).
    pub fn field_grid(&self, xs: &[f64], zs: &[f64]) -> Result<Vec<C64>> {
        let points: Vec<(f64, f64)> = zs
            .iter()
            .flat_map(|&z| xs.iter().map(move |&x| (x, z)))
            .collect();
        self.field_points(&points)
    }

    pub fn to_checkpoint(&self) -> PinnCheckpoint {
        PinnCheckpoint {
            version: 1,
            kind: "pinn".into(),
            network: self.net.to_checkpoint(),
            l_x: self.l_x,
            depth: self.depth,
            fourier_features: self.fourier_features,
        }
    }

    pub fn from_checkpoint(ck: &PinnCheckpoint) -> Result<PinnModel> {
        if ck.kind != "pinn" {
            return Err(Error::Config(format!(
                "checkpoint holds a {:?} model, not a pinn model",
                ck.kind
            )));
        }
        if ck.version != 1 {
            return Err(Error::Config(format!(
                "unsupported pinn checkpoint version {}",
                ck.version
            )));
        }
        let net = Mlp::from_checkpoint(&ck.network)?;
        let want = feature_count(ck.fourier_features);
        if net.sizes()[0] != want {
            return Err(Error::Config(format!(
                "checkpoint network takes {} inputs but its feature map produces {}",
                net.sizes()[0],
                want
            )));
        }
        Ok(PinnModel {
            net,
            l_x: ck.l_x,
            depth: ck.depth,
            fourier_features: ck.fourier_features,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| Error::Config(format!("checkpoint serialization: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PinnModel> {
        let text = fs::read_to_string(path)?;
        let ck: PinnCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("checkpoint parse: {e}")))?;
        PinnModel::from_checkpoint(&ck)
    }
}

/// Training record; the loss curve holds one entry per Adam epoch followed
/// by one entry per LBFGS round.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PinnReport {
    pub loss_curve: Vec<f64>,
    pub final_loss: LossParts,
    pub lambda_r: f64,
    pub lambda_bc: f64,
    /// Field error vs. a reference solution when one was supplied.
    pub field_rel_l2: Option<f64>,
    pub train_seconds: f64,
    pub seed: u64,
}

/// Field error against a solved reference on a cell-midpoint grid.
pub fn pinn_field_rel_l2(
    model: &PinnModel,
    reference: &WgSolution,
    nx: usize,
    nz: usize,
) -> Result<f64> {
    let xs: Vec<f64> = (0..nx)
        .map(|i| model.l_x * (i as f64 + 0.5) / nx as f64)
        .collect();
    let zs: Vec<f64> = (0..nz)
        .map(|k| -model.depth * (k as f64 + 0.5) / nz as f64)
        .collect();
    let got = model.field_grid(&xs, &zs)?;
    let want = reference.field_grid(&xs, &zs)?;
    Ok(relative_l2(&got, &want.values))
}

/// Two-stage training: full-batch Adam, then LBFGS rounds sharing one
/// curvature history. Divergence (non-finite loss) aborts with the epoch.
pub fn train_pinn(
    stack: &MaskStack,
    source: &PlaneWaveSource,
    config: &PinnConfig,
    reference: Option<&WgSolution>,
) -> Result<(PinnModel, PinnReport)> {
    config.validate()?;
    let start = Instant::now();
    let prob = pinn_problem(stack, source)?;
    let colloc = build_collocation(&prob.stack, config.intervals, config.interface_band_cells)?;
    let asm = assemble(&prob, &colloc, config);

    let mut sizes = vec![feature_count(config.fourier_features)];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(2);
    let mut net = Mlp::new(&sizes, config.seed)?;
    let mut params = net.params();
    let mut adam = Adam::new(params.len());
    let mut loss_curve = Vec::with_capacity(config.adam_epochs + config.lbfgs_epochs);

    for epoch in 0..config.adam_epochs {
        net.set_params(&params)?;
        let (parts, grad) = loss_and_grad(&net, &asm)?;
        if !parts.total.is_finite() {
            return Err(Error::Numerical(format!(
                "training diverged at epoch {epoch} (loss {})",
                parts.total
            )));
        }
        loss_curve.push(parts.total);
        adam.step(&mut params, &grad, config.adam_lr)?;
    }

    let mut lbfgs = Lbfgs::new(config.lbfgs_history);
    let mut scratch = net.clone();
    for _ in 0..config.lbfgs_epochs {
        let f = lbfgs.run(
            &mut params,
            |p| {
                scratch.set_params(p)?;
                let (parts, grad) = loss_and_grad(&scratch, &asm)?;
                Ok((parts.total, grad))
            },
            config.lbfgs_iters,
        )?;
        loss_curve.push(f);
    }

    net.set_params(&params)?;
    let (final_loss, _) = loss_and_grad(&net, &asm)?;
    let model = PinnModel {
        net,
        l_x: prob.stack.l_x,
        depth: prob.depth,
        fourier_features: config.fourier_features,
    };
    let field_rel_l2 = match reference {
        Some(sol) => Some(pinn_field_rel_l2(&model, sol, 101, 101)?),
        None => None,
    };
    let report = PinnReport {
        loss_curve,
        final_loss,
        lambda_r: config.lambda_r,
        lambda_bc: config.lambda_bc,
        field_rel_l2,
        train_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
    };
    Ok((model, report))
}
