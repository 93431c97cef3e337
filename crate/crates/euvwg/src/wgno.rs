//! Neural operator over the assembled mode-matching system.
//!
//! An MLP maps the system right-hand side and the layer permittivity
//! spectra to the full amplitude vector. Training needs no solved
//! references: the loss is the residual norm ||M A - R||^2, whose gradient
//! with respect to the complex output is 2 M^H (M A - R), pulled back
//! through the network as interleaved real pairs. The trained network is a
//! drop-in replacement for the dense solve; everything downstream
//! (amplitude splitting, field synthesis, order tables) is unchanged.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_harmonics, fourier_coeffs, HarmonicGrid, LayerPattern, MaskStack, PlaneWaveSource,
};
use crate::matching::{assemble_global, layer_modes, operator_kind, GlobalSystem, PhaseRef};
use crate::modes::OperatorKind;
use crate::nn::{Adam, Mlp, MlpCheckpoint};
use crate::numerics::{c64, CMatrix, CVector, C64};

/// Shape fingerprint of the system a network was trained against. A
/// checkpoint carries it so that inference on a structurally different
/// system is rejected instead of silently misread.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemLayout {
    pub kind: String,
    pub n_x: usize,
    pub n_y: usize,
    pub n_layers: usize,
    pub dim: usize,
}

fn kind_tag(kind: OperatorKind) -> &'static str {
    match kind {
        OperatorKind::Te2d => "te2d",
        OperatorKind::Tm2d => "tm2d",
        OperatorKind::Vector3d => "vector3d",
    }
}

impl SystemLayout {
    pub fn of(sys: &GlobalSystem) -> SystemLayout {
        SystemLayout {
            kind: kind_tag(sys.kind).to_string(),
            n_x: sys.grid.n_x,
            n_y: sys.grid.n_y,
            n_layers: sys.layers.len(),
            dim: sys.dim(),
        }
    }
}

/// Permittivity Fourier coefficients of every layer, truncated to the
/// grid's own order range and flattened in grid order (m fastest).
pub fn layer_spectra(stack: &MaskStack, grid: &HarmonicGrid) -> Result<Vec<Vec<C64>>> {
    let mut out = Vec::with_capacity(stack.layers.len());
    for layer in &stack.layers {
        let four = fourier_coeffs(&layer.pattern, stack.l_x, stack.l_y, grid.n_x, grid.n_y)?;
        let mut spec = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let (m, n) = grid.order(idx);
            spec.push(four.eps.get(m, n));
        }
        out.push(spec);
    }
    Ok(out)
}

fn block_scale(vals: impl Iterator<Item = f64>) -> f64 {
    let m = vals.fold(0.0f64, |a, b| a.max(b.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Fixed input encoding bound to one system shape. The layout is
/// [Re R | Im R | layer 0: Re eps | Im eps | layer 1: ...], each block
/// divided by the scale captured at binding time (max-abs of the block;
/// all-zero blocks keep scale 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputEncoder {
    pub dim_r: usize,
    pub n_orders: usize,
    pub scales: Vec<f64>,
}

impl InputEncoder {
    pub fn bind(r: &CVector, spectra: &[Vec<C64>]) -> InputEncoder {
        let mut scales = vec![
            block_scale(r.data.iter().map(|z| z.re)),
            block_scale(r.data.iter().map(|z| z.im)),
        ];
        for spec in spectra {
            scales.push(block_scale(spec.iter().map(|z| z.re)));
            scales.push(block_scale(spec.iter().map(|z| z.im)));
        }
        InputEncoder {
            dim_r: r.len(),
            n_orders: spectra.first().map_or(0, |s| s.len()),
            scales,
        }
    }

    /// Replace the captured scales wholesale (layout must match).
    pub fn with_scales(mut self, scales: &[f64]) -> Result<InputEncoder> {
        if scales.len() != self.scales.len() {
            return Err(Error::Config(format!(
                "expected {} normalization scales, got {}",
                self.scales.len(),
                scales.len()
            )));
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(
                "normalization scales must be finite and positive".into(),
            ));
        }
        self.scales = scales.to_vec();
        Ok(self)
    }

    pub fn input_len(&self) -> usize {
        2 * self.dim_r + (self.scales.len() - 2) * self.n_orders
    }

    pub fn encode(&self, r: &CVector, spectra: &[Vec<C64>]) -> Result<Vec<f64>> {
        if r.len() != self.dim_r
            || 2 * spectra.len() + 2 != self.scales.len()
            || spectra.iter().any(|s| s.len() != self.n_orders)
        {
            return Err(Error::Shape(
                "encoder is bound to a different system shape".into(),
            ));
        }
        let mut x = Vec::with_capacity(self.input_len());
        x.extend(r.data.iter().map(|z| z.re / self.scales[0]));
        x.extend(r.data.iter().map(|z| z.im / self.scales[1]));
        for (j, spec) in spectra.iter().enumerate() {
            x.extend(spec.iter().map(|z| z.re / self.scales[2 + 2 * j]));
            x.extend(spec.iter().map(|z| z.im / self.scales[3 + 2 * j]));
        }
        Ok(x)
    }
}

/// Two-stage Adam schedule and network shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WgnoConfig {
    pub hidden: Vec<usize>,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    /// Overrides the encoder's captured max-abs block scales when set.
    pub scale_override: Option<Vec<f64>>,
}

impl Default for WgnoConfig {
    fn default() -> Self {
        WgnoConfig {
            hidden: vec![256, 256],
            stage1_epochs: 1000,
            stage2_epochs: 1000,
            stage1_lr: 1e-3,
            stage2_lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
            scale_override: None,
        }
    }
}

impl WgnoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.stage1_epochs == 0 || self.stage2_epochs == 0 {
            return Err(Error::Config("both stages need at least one epoch".into()));
        }
        if !(self.stage1_lr > 0.0 && self.stage2_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps_adam > 0.0)
        {
            return Err(Error::Config("invalid Adam constants".into()));
        }
        Ok(())
    }
}

/// Training record: one loss entry per epoch across both stages.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    /// ||M a - R|| / ||R|| of the trained prediction, averaged over the
    /// training pool.
    pub final_rel_residual: f64,
    /// Field error vs. the direct solve, filled in by callers that compute
    /// a reference field.
    pub field_rel_l2: Option<f64>,
    pub train_seconds: f64,
    pub seed: u64,
}

/// Interleaved real output column -> complex amplitudes, A_j from rows
/// (2j, 2j+1).
fn decode_amplitudes(y: &Array2<f64>) -> CVector {
    let d = y.nrows() / 2;
    CVector::from_vec((0..d).map(|j| c64(y[(2 * j, 0)], y[(2 * j + 1, 0)])).collect())
}

fn input_column(input: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((input.len(), 1), input.to_vec())
        .expect("column shape always matches the input length")
}

/// Loss ||M net(x) - r||^2 and its gradient in the network parameters,
/// flattened in the network's own parameter order.
pub fn residual_loss_grad(
    net: &Mlp,
    input: &[f64],
    m: &CMatrix,
    r: &CVector,
) -> Result<(f64, Vec<f64>)> {
    let (y, tape) = net.forward(&input_column(input))?;
    if y.nrows() != 2 * r.len() {
        return Err(Error::Shape(format!(
            "network emits {} reals but the system needs {}",
            y.nrows(),
            2 * r.len()
        )));
    }
    let a = decode_amplitudes(&y);
    let res = m.matvec(&a)?.sub(r);
    let loss = res.data.iter().map(|z| z.norm_sqr()).sum();
    let q = m.matvec_adjoint(&res)?;
    let mut adj = Array2::zeros((y.nrows(), 1));
    for (j, qj) in q.data.iter().enumerate() {
        adj[(2 * j, 0)] = 2.0 * qj.re;
        adj[(2 * j + 1, 0)] = 2.0 * qj.im;
    }
    let grads = net.backward(&tape, &adj)?;
    Ok((loss, grads.flatten()))
}

/// Trained operator plus the encoder and layout it is bound to.
#[derive(Clone, Debug)]
pub struct WgnoModel {
    pub net: Mlp,
    pub encoder: InputEncoder,
    pub layout: SystemLayout,
}

/// On-disk container. `kind` tags the model family so that checkpoint
/// files from other trainers are rejected on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WgnoCheckpoint {
    pub version: u32,
    pub kind: String,
    pub network: MlpCheckpoint,
    pub encoder: InputEncoder,
    pub layout: SystemLayout,
}

impl WgnoModel {
    pub fn check_layout(&self, sys: &GlobalSystem) -> Result<()> {
        let found = SystemLayout::of(sys);
        if found != self.layout {
            return Err(Error::Config(format!(
                "checkpoint was trained on {:?} but the system is {:?}",
                self.layout, found
            )));
        }
        Ok(())
    }

    fn infer_encoded(&self, x: &[f64]) -> Result<CVector> {
        let (y, _) = self.net.forward(&input_column(x))?;
        Ok(decode_amplitudes(&y))
    }

    /// One forward pass; the result slots into `GlobalSystem::interpret`.
    pub fn infer(&self, sys: &GlobalSystem, spectra: &[Vec<C64>]) -> Result<CVector> {
        self.check_layout(sys)?;
        let x = self.encoder.encode(&sys.rhs, spectra)?;
        self.infer_encoded(&x)
    }

    pub fn to_checkpoint(&self) -> WgnoCheckpoint {
        WgnoCheckpoint {
            version: 1,
            kind: "wgno".into(),
            network: self.net.to_checkpoint(),
            encoder: self.encoder.clone(),
            layout: self.layout.clone(),
        }
    }

    pub fn from_checkpoint(ck: &WgnoCheckpoint) -> Result<WgnoModel> {
        if ck.kind != "wgno" {
            return Err(Error::Config(format!(
                "checkpoint holds a {:?} model, not a wgno model",
                ck.kind
            )));
        }
        if ck.version != 1 {
            return Err(Error::Config(format!(
                "unsupported wgno checkpoint version {}",
                ck.version
            )));
        }
        Ok(WgnoModel {
            net: Mlp::from_checkpoint(&ck.network)?,
            encoder: ck.encoder.clone(),
            layout: ck.layout.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| Error::Config(format!("checkpoint serialization: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<WgnoModel> {
        let text = fs::read_to_string(path)?;
        let ck: WgnoCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("checkpoint parse: {e}")))?;
        WgnoModel::from_checkpoint(&ck)
    }
}

/// Shared training engine: full-batch over the given instances, two Adam
/// stages with one persistent moment state. Instances must already agree
/// in dimension and input length.
fn run_training(
    systems: &[&GlobalSystem],
    inputs: &[Vec<f64>],
    config: &WgnoConfig,
) -> Result<(Mlp, Vec<f64>)> {
    let dim = systems[0].dim();
    let mut sizes = vec![inputs[0].len()];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(2 * dim);
    let mut net = Mlp::new(&sizes, config.seed)?;
    let mut params = net.params();
    let mut adam = Adam::new(params.len());
    adam.beta1 = config.beta1;
    adam.beta2 = config.beta2;
    adam.eps = config.eps_adam;

    let k = systems.len() as f64;
    let mut loss_curve = Vec::with_capacity(config.stage1_epochs + config.stage2_epochs);
    let stages = [
        (config.stage1_epochs, config.stage1_lr),
        (config.stage2_epochs, config.stage2_lr),
    ];
    for (epochs, lr) in stages {
        for _ in 0..epochs {
            net.set_params(&params)?;
            let mut loss = 0.0;
            let mut grad = vec![0.0; params.len()];
            for (sys, x) in systems.iter().zip(inputs) {
                let (l, g) = residual_loss_grad(&net, x, &sys.matrix, &sys.rhs)?;
                loss += l / k;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += gi / k;
                }
            }
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training diverged at epoch {} (loss {loss})",
                    loss_curve.len()
                )));
            }
            loss_curve.push(loss);
            adam.step(&mut params, &grad, lr)?;
        }
    }
    net.set_params(&params)?;
    Ok((net, loss_curve))
}

fn finish_report(
    model: &WgnoModel,
    systems: &[&GlobalSystem],
    inputs: &[Vec<f64>],
    loss_curve: Vec<f64>,
    config: &WgnoConfig,
    start: Instant,
) -> Result<TrainReport> {
    let mut resid = 0.0;
    for (sys, x) in systems.iter().zip(inputs) {
        let a = model.infer_encoded(x)?;
        resid += sys.residual_of(&a)? / systems.len() as f64;
    }
    Ok(TrainReport {
        loss_curve,
        final_rel_residual: resid,
        field_rel_l2: None,
        train_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
    })
}

fn bind_encoder(
    r: &CVector,
    spectra: &[Vec<C64>],
    config: &WgnoConfig,
) -> Result<InputEncoder> {
    let enc = InputEncoder::bind(r, spectra);
    match &config.scale_override {
        Some(s) => enc.with_scales(s),
        None => Ok(enc),
    }
}

/// Fit the operator to one assembled system.
pub fn train_wgno(
    sys: &GlobalSystem,
    spectra: &[Vec<C64>],
    config: &WgnoConfig,
) -> Result<(WgnoModel, TrainReport)> {
    config.validate()?;
    let start = Instant::now();
    let encoder = bind_encoder(&sys.rhs, spectra, config)?;
    let inputs = vec![encoder.encode(&sys.rhs, spectra)?];
    let systems = [sys];
    let (net, loss_curve) = run_training(&systems, &inputs, config)?;
    let model = WgnoModel {
        net,
        encoder,
        layout: SystemLayout::of(sys),
    };
    let report = finish_report(&model, &systems, &inputs, loss_curve, config, start)?;
    Ok((model, report))
}

/// One member of a training family: the assembled system and the spectra
/// that encode it.
pub struct WgnoInstance {
    pub system: GlobalSystem,
    pub spectra: Vec<Vec<C64>>,
}

/// Assemble a stack into a trainable instance (stable phase referencing).
pub fn assemble_instance(
    stack: &MaskStack,
    source: &PlaneWaveSource,
    n_x: usize,
    n_y: usize,
) -> Result<WgnoInstance> {
    let grid = build_harmonics(stack, source, n_x, n_y)?;
    let kind = operator_kind(source);
    let layers = layer_modes(stack, &grid, kind)?;
    let spectra = layer_spectra(stack, &grid)?;
    let system = assemble_global(stack, source, &grid, layers, PhaseRef::Stable)?;
    Ok(WgnoInstance { system, spectra })
}

/// Fit one amortized operator to a pool of structurally identical systems:
/// every epoch takes the mean loss and gradient over the whole pool, in
/// pool order. The encoder binds to the first instance.
pub fn train_wgno_pool(
    pool: &[WgnoInstance],
    config: &WgnoConfig,
) -> Result<(WgnoModel, TrainReport)> {
    config.validate()?;
    let first = pool
        .first()
        .ok_or_else(|| Error::Config("training pool is empty".into()))?;
    let layout = SystemLayout::of(&first.system);
    if pool.iter().any(|i| SystemLayout::of(&i.system) != layout) {
        return Err(Error::Config(
            "training pool mixes different system shapes".into(),
        ));
    }
    let start = Instant::now();
    let encoder = bind_encoder(&first.system.rhs, &first.spectra, config)?;
    let inputs: Vec<Vec<f64>> = pool
        .iter()
        .map(|i| encoder.encode(&i.system.rhs, &i.spectra))
        .collect::<Result<_>>()?;
    let systems: Vec<&GlobalSystem> = pool.iter().map(|i| &i.system).collect();
    let (net, loss_curve) = run_training(&systems, &inputs, config)?;
    let model = WgnoModel {
        net,
        encoder,
        layout,
    };
    let report = finish_report(&model, &systems, &inputs, loss_curve, config, start)?;
    Ok((model, report))
}

/// Sampling ranges for family training around a base geometry.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySpec {
    pub pool: usize,
    /// Hole width as a fraction of the period, drawn per instance.
    pub hole_frac: (f64, f64),
    /// One thickness multiplier per instance, applied to every layer.
    pub thickness_scale: (f64, f64),
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec {
            pool: 8,
            hole_frac: (0.3, 0.7),
            thickness_scale: (0.9, 1.1),
        }
    }
}

fn scaled_pattern(p: &LayerPattern, frac: f64, l_x: f64, l_y: Option<f64>) -> LayerPattern {
    match p {
        LayerPattern::Uniform { .. } => p.clone(),
        LayerPattern::HoleInX {
            eps_background,
            eps_hole,
            center,
            ..
        } => LayerPattern::HoleInX {
            eps_background: *eps_background,
            eps_hole: *eps_hole,
            center: *center,
            width: frac * l_x,
        },
        LayerPattern::TanhPad {
            eps_background,
            eps_hole,
            b,
            d,
            ..
        } => LayerPattern::TanhPad {
            eps_background: *eps_background,
            eps_hole: *eps_hole,
            a: frac * l_x / 2.0,
            b: b.map(|_| frac * l_y.unwrap_or(l_x) / 2.0),
            d: *d,
        },
    }
}

/// Deterministically draw stacks around `base`: every patterned layer's
/// opening is rescaled to the drawn width fraction and all thicknesses
/// share one multiplier.
pub fn sample_family(base: &MaskStack, spec: &FamilySpec, seed: u64) -> Result<Vec<MaskStack>> {
    if spec.pool == 0 {
        return Err(Error::Config("family pool must be nonempty".into()));
    }
    let ok = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1;
    if !(ok(spec.hole_frac) && spec.hole_frac.1 <= 1.0 && ok(spec.thickness_scale)) {
        return Err(Error::Config("family sampling ranges are invalid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.pool);
    for _ in 0..spec.pool {
        let frac = rng.random_range(spec.hole_frac.0..=spec.hole_frac.1);
        let scale = rng.random_range(spec.thickness_scale.0..=spec.thickness_scale.1);
        let mut stack = base.clone();
        for layer in &mut stack.layers {
            layer.thickness *= scale;
            layer.pattern = scaled_pattern(&layer.pattern, frac, stack.l_x, stack.l_y);
        }
        stack.validate()?;
        out.push(stack);
    }
    Ok(out)
}
