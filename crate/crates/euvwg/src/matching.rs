//! Interface matching: the global dense system.
//!
//! Each layer contributes its modal basis twice, once travelling down
//! (referenced to the layer top) and once travelling up (referenced to the
//! bottom), so every stored amplitude multiplies a factor of modulus <= 1
//! anywhere inside its layer. The unknown vector is
//! [r | a_0_down a_0_up | ... | a_{J-1}_down a_{J-1}_up | t] with W entries
//! per block, W = N for scalar problems and 2N for the vector one. Rows come
//! in interface blocks: W field-continuity rows followed by W rows for the
//! matching tangential quantity (field derivative for TE, derivative over
//! eps for TM, tangential E for the vector problem).
//!
//! Orders at an exact propagation cutoff (|kz| ~ 0) make the outgoing-wave
//! rows degenerate; those coefficients are replaced by a unit-scale factor
//! so the system stays finite and solvable. Such configurations sit on a
//! measure-zero set and are excluded from validated setups.

use crate::error::{Error, Result};
use crate::geometry::{
    build_harmonics, fourier_coeffs, HarmonicGrid, MaskStack, PlaneWaveSource, Polarization,
};
use crate::modes::{
    build_layer_matrix, homogeneous_modes, solve_modes, ModalBasis, OperatorKind,
};
use crate::numerics::{c64, convolution_matrix, C64, CMatrix, CVector};

/// Relative cutoff below which a longitudinal wavenumber counts as grazing.
pub const GRAZING_RTOL: f64 = 1e-12;

/// Reference convention for up-going amplitudes. `Stable` references them to
/// the layer bottom so matrix entries never exceed unit modulus in phase
/// factors; `Flipped` references both directions to the layer top, which is
/// algebraically equivalent but overflows for thick absorbing layers. It
/// exists so tests can show the choice does not move the answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseRef {
    Stable,
    Flipped,
}

/// Operator kind implied by a source polarization.
pub fn operator_kind(source: &PlaneWaveSource) -> OperatorKind {
    match source.polarization {
        Polarization::Te => OperatorKind::Te2d,
        Polarization::Tm => OperatorKind::Tm2d,
        Polarization::Vector { .. } => OperatorKind::Vector3d,
    }
}

/// One layer's eigenbasis plus the pieces the assembly needs.
#[derive(Clone, Debug)]
pub struct LayerModes {
    pub basis: ModalBasis,
    /// exp(-i kz_p d) per mode, the decay across the layer.
    pub phi: Vec<C64>,
    /// Derivative-row columns for down-going modes; up-going columns are
    /// their negatives. Scalar kinds store q * i kz_p * B_p with q = T(1/eps)
    /// for TM and identity for TE; the vector kind stores tangential E
    /// stacked as [E_x rows; E_y rows].
    pub deriv: CMatrix,
    pub z_top: f64,
    pub thickness: f64,
}

fn kz_guard(kz: C64, k0: f64) -> C64 {
    if kz.norm() < GRAZING_RTOL * k0 {
        c64(k0, 0.0)
    } else {
        kz
    }
}

/// Solve each layer's modal problem and precompute its assembly data.
pub fn layer_modes(
    stack: &MaskStack,
    grid: &HarmonicGrid,
    kind: OperatorKind,
) -> Result<Vec<LayerModes>> {
    let n = grid.len();
    let idx = |i: usize| grid.order(i);
    let mut out = Vec::with_capacity(stack.layers.len());
    for (j, layer) in stack.layers.iter().enumerate() {
        let fourier = fourier_coeffs(&layer.pattern, stack.l_x, stack.l_y, grid.n_x, grid.n_y)?;
        let basis = match layer.pattern {
            crate::geometry::LayerPattern::Uniform { eps } => homogeneous_modes(grid, eps, kind),
            _ => {
                let m = build_layer_matrix(grid, &fourier, kind)?;
                solve_modes(&m, kind)?
            }
        };
        let phi: Vec<C64> = basis
            .kz
            .iter()
            .map(|&kz| (c64(0.0, -1.0) * kz * layer.thickness).exp())
            .collect();
        let deriv = match kind {
            OperatorKind::Te2d => {
                CMatrix::from_fn(n, n, |i, p| c64(0.0, 1.0) * basis.kz[p] * basis.vectors.get(i, p))
            }
            OperatorKind::Tm2d => {
                let t1e = convolution_matrix(n, idx, |dm, dn| fourier.inv_eps.get(dm, dn));
                let qb = t1e.matmul(&basis.vectors)?;
                CMatrix::from_fn(n, n, |i, p| c64(0.0, 1.0) * basis.kz[p] * qb.get(i, p))
            }
            OperatorKind::Vector3d => {
                let t1e = convolution_matrix(n, idx, |dm, dn| fourier.inv_eps.get(dm, dn));
                let mut deriv = CMatrix::zeros(2 * n, 2 * n);
                for p in 0..2 * n {
                    let lam = basis.lambda[p];
                    // Exact cutoff would zero both travel directions of this
                    // mode; substitute a unit-scale divisor (measure-zero).
                    let kzs = kz_guard(basis.kz[p], grid.k0);
                    let mut ux = CVector::zeros(n);
                    let mut uy = CVector::zeros(n);
                    for i in 0..n {
                        let (mi, ni) = grid.order(i);
                        let kx = grid.kx(mi);
                        let ky = grid.ky(ni);
                        let b = basis.vectors.get(i, p);
                        let cc = basis.vectors.get(n + i, p);
                        ux.data[i] = c64(kx * ky, 0.0) * b + (c64(ky * ky, 0.0) + lam) * cc;
                        uy.data[i] = (c64(kx * kx, 0.0) + lam) * b + c64(kx * ky, 0.0) * cc;
                    }
                    let ex = t1e.matvec(&ux)?;
                    let ey = t1e.matvec(&uy)?;
                    let sx = -(C64::ONE) / (grid.k0 * kzs);
                    let sy = C64::ONE / (grid.k0 * kzs);
                    for i in 0..n {
                        deriv.set(i, p, sx * ex.data[i]);
                        deriv.set(n + i, p, sy * ey.data[i]);
                    }
                }
                deriv
            }
        };
        out.push(LayerModes {
            basis,
            phi,
            deriv,
            z_top: stack.layer_top(j),
            thickness: layer.thickness,
        });
    }
    Ok(out)
}

/// Assembled global system M a = r plus everything needed to interpret a.
#[derive(Debug)]
pub struct GlobalSystem {
    pub kind: OperatorKind,
    pub grid: HarmonicGrid,
    pub phase_ref: PhaseRef,
    pub matrix: CMatrix,
    pub rhs: CVector,
    pub layers: Vec<LayerModes>,
    pub eps_substrate: C64,
    pub h0: [C64; 2],
}

/// Tangential-E coupling factors of a uniform medium for order (kx, ky):
/// E_x(down) = -(gxy h_x + gxx h_y), E_y(down) = gyy h_x + gxy h_y; up-going
/// waves flip both signs. kz enters only through the guarded divisor.
fn outer_e_factors(k0: f64, eps: C64, kx: f64, ky: f64, kz: C64) -> (C64, C64, C64) {
    let kzs = kz_guard(kz, k0);
    let den = k0 * eps * kzs;
    let gxx = (eps * k0 * k0 - kx * kx) / den;
    let gyy = (eps * k0 * k0 - ky * ky) / den;
    let gxy = kx * ky / den;
    (gxx, gyy, gxy)
}

/// Build the global system for a stack, source, and truncation.
pub fn assemble_global(
    stack: &MaskStack,
    source: &PlaneWaveSource,
    grid: &HarmonicGrid,
    layers: Vec<LayerModes>,
    phase_ref: PhaseRef,
) -> Result<GlobalSystem> {
    let kind = operator_kind(source);
    if let Some(first) = layers.first() {
        if first.basis.kind != kind {
            return Err(Error::Shape(format!(
                "layer bases built for {:?} but source implies {:?}",
                first.basis.kind, kind
            )));
        }
    }
    let h0 = match source.polarization {
        Polarization::Vector { h0 } => {
            if h0[0].norm() == 0.0 && h0[1].norm() == 0.0 {
                return Err(Error::Config("incident h0 must be nonzero".into()));
            }
            h0
        }
        _ => [C64::ONE, C64::ZERO],
    };

    let n = grid.len();
    let w = kind.dim(n);
    let nl = layers.len();
    let dim = w * (2 * nl + 2);
    let mut m = CMatrix::zeros(dim, dim);
    let mut rhs = CVector::zeros(dim);
    let col_t = w + 2 * w * nl;
    let k0 = grid.k0;
    let (k0x, k0y, k0z) = source.k_components();

    // One block of 2W rows per interface: W value rows then W tangential
    // rows. Convention: (side below) - (side above) = 0, incident terms
    // moved to the right-hand side.
    for interface in 0..=nl {
        let row_v = 2 * w * interface;
        let row_d = row_v + w;

        // Side below the interface.
        if interface < nl {
            let lm = &layers[interface];
            let col = w + 2 * w * interface;
            add_layer_side(&mut m, row_v, row_d, col, lm, phase_ref, true, C64::ONE);
        } else {
            // Substrate: one down-going wave per order.
            match kind {
                OperatorKind::Te2d | OperatorKind::Tm2d => {
                    let q_sub = if kind == OperatorKind::Tm2d {
                        C64::ONE / stack.eps_substrate
                    } else {
                        C64::ONE
                    };
                    for i in 0..n {
                        let (mi, ni) = grid.order(i);
                        let kzt = grid.kz_in(stack.eps_substrate, mi, ni);
                        m.add_assign_at(row_v + i, col_t + i, C64::ONE);
                        let kzs = kz_guard(kzt, k0);
                        m.add_assign_at(row_d + i, col_t + i, c64(0.0, 1.0) * kzs * q_sub);
                    }
                }
                OperatorKind::Vector3d => {
                    for i in 0..n {
                        let (mi, ni) = grid.order(i);
                        let kx = grid.kx(mi);
                        let ky = grid.ky(ni);
                        let kzt = grid.kz_in(stack.eps_substrate, mi, ni);
                        let (gxx, gyy, gxy) =
                            outer_e_factors(k0, stack.eps_substrate, kx, ky, kzt);
                        m.add_assign_at(row_v + i, col_t + i, C64::ONE);
                        m.add_assign_at(row_v + n + i, col_t + n + i, C64::ONE);
                        m.add_assign_at(row_d + i, col_t + i, -gxy);
                        m.add_assign_at(row_d + i, col_t + n + i, -gxx);
                        m.add_assign_at(row_d + n + i, col_t + i, gyy);
                        m.add_assign_at(row_d + n + i, col_t + n + i, gxy);
                    }
                }
            }
        }

        // Side above the interface, entering with a minus sign.
        if interface > 0 {
            let lm = &layers[interface - 1];
            let col = w + 2 * w * (interface - 1);
            add_layer_side(&mut m, row_v, row_d, col, lm, phase_ref, false, -C64::ONE);
        } else {
            // Vacuum: reflected orders go up; the incident wave fills the rhs.
            match kind {
                OperatorKind::Te2d | OperatorKind::Tm2d => {
                    for i in 0..n {
                        let kz = grid.kz_flat(i);
                        let kzs = kz_guard(kz, k0);
                        m.add_assign_at(row_v + i, i, -C64::ONE);
                        // -(-i kz r) from the up-going derivative
                        m.add_assign_at(row_d + i, i, c64(0.0, 1.0) * kzs);
                    }
                    let i0 = grid.incident_index();
                    rhs.data[row_v + i0] += C64::ONE;
                    rhs.data[row_d + i0] += c64(0.0, k0z);
                }
                OperatorKind::Vector3d => {
                    for i in 0..n {
                        let (mi, ni) = grid.order(i);
                        let kx = grid.kx(mi);
                        let ky = grid.ky(ni);
                        let kz = grid.kz_flat(i);
                        let (gxx, gyy, gxy) = outer_e_factors(k0, C64::ONE, kx, ky, kz);
                        m.add_assign_at(row_v + i, i, -C64::ONE);
                        m.add_assign_at(row_v + n + i, n + i, -C64::ONE);
                        // Up-going waves flip the E signs; the leading side
                        // sign flips them back for E_x.
                        m.add_assign_at(row_d + i, i, -gxy);
                        m.add_assign_at(row_d + i, n + i, -gxx);
                        m.add_assign_at(row_d + n + i, i, gyy);
                        m.add_assign_at(row_d + n + i, n + i, gxy);
                    }
                    let i0 = grid.incident_index();
                    let (g0xx, g0yy, g0xy) = outer_e_factors(k0, C64::ONE, k0x, k0y, c64(k0z, 0.0));
                    rhs.data[row_v + i0] += h0[0];
                    rhs.data[row_v + n + i0] += h0[1];
                    rhs.data[row_d + i0] += -(g0xy * h0[0] + g0xx * h0[1]);
                    rhs.data[row_d + n + i0] += g0yy * h0[0] + g0xy * h0[1];
                }
            }
        }
    }

    Ok(GlobalSystem {
        kind,
        grid: grid.clone(),
        phase_ref,
        matrix: m,
        rhs,
        layers,
        eps_substrate: stack.eps_substrate,
        h0,
    })
}

/// Write one layer's two mode families into an interface row block.
/// `at_top` selects which end of the layer touches the interface.
fn add_layer_side(
    m: &mut CMatrix,
    row_v: usize,
    row_d: usize,
    col: usize,
    lm: &LayerModes,
    phase_ref: PhaseRef,
    at_top: bool,
    sign: C64,
) {
    let w = lm.basis.vectors.nrows();
    for p in 0..w {
        let phi = lm.phi[p];
        let (f_down, f_up) = match (phase_ref, at_top) {
            (PhaseRef::Stable, true) => (C64::ONE, phi),
            (PhaseRef::Stable, false) => (phi, C64::ONE),
            (PhaseRef::Flipped, true) => (C64::ONE, C64::ONE),
            (PhaseRef::Flipped, false) => (phi, C64::ONE / phi),
        };
        let (cd, cu) = (col + p, col + w + p);
        for i in 0..w {
            let v = lm.basis.vectors.get(i, p);
            let d = lm.deriv.get(i, p);
            m.add_assign_at(row_v + i, cd, sign * f_down * v);
            m.add_assign_at(row_v + i, cu, sign * f_up * v);
            m.add_assign_at(row_d + i, cd, sign * f_down * d);
            m.add_assign_at(row_d + i, cu, -sign * f_up * d);
        }
    }
}

/// Amplitudes and basis of one layer in a solved problem.
#[derive(Clone, Debug)]
pub struct LayerField {
    pub kz: Vec<C64>,
    pub vectors: CMatrix,
    pub phi: Vec<C64>,
    pub down: Vec<C64>,
    pub up: Vec<C64>,
    pub z_top: f64,
    pub thickness: f64,
}

/// Solved diffraction problem: outgoing amplitudes per order plus the
/// internal modal amplitudes for field reconstruction.
#[derive(Clone, Debug)]
pub struct WgSolution {
    pub kind: OperatorKind,
    pub grid: HarmonicGrid,
    pub phase_ref: PhaseRef,
    pub eps_substrate: C64,
    pub h0: [C64; 2],
    /// Reflected amplitudes, one per order (vector problems stack h_x then
    /// h_y components).
    pub r: CVector,
    pub t: CVector,
    pub layers: Vec<LayerField>,
    /// ||M a - rhs||_2 / ||rhs||_2 of the returned solution.
    pub rel_residual: f64,
}

impl GlobalSystem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Relative residual of a candidate amplitude vector.
    pub fn residual_of(&self, a: &CVector) -> Result<f64> {
        let r = self.matrix.matvec(a)?.sub(&self.rhs);
        Ok(r.norm2() / self.rhs.norm2())
    }

    /// Split a raw solution vector into (r, per-layer (down, up), t).
    pub fn split(&self, a: &CVector) -> (CVector, Vec<(Vec<C64>, Vec<C64>)>, CVector) {
        let n = self.grid.len();
        let w = self.kind.dim(n);
        let nl = self.layers.len();
        let r = CVector::from_vec(a.data[..w].to_vec());
        let mut per_layer = Vec::with_capacity(nl);
        for j in 0..nl {
            let base = w + 2 * w * j;
            per_layer.push((
                a.data[base..base + w].to_vec(),
                a.data[base + w..base + 2 * w].to_vec(),
            ));
        }
        let t = CVector::from_vec(a.data[w + 2 * w * nl..].to_vec());
        (r, per_layer, t)
    }

    /// Factor and solve for the raw amplitude vector.
    pub fn solve_raw(&self) -> Result<CVector> {
        self.matrix.lu()?.solve(&self.rhs)
    }

    /// Factor and solve the system, returning the interpreted solution.
    pub fn solve(&self) -> Result<WgSolution> {
        let a = self.solve_raw()?;
        self.interpret(&a)
    }

    /// Wrap a raw amplitude vector (from the direct solve or a surrogate)
    /// into a full solution.
    pub fn interpret(&self, a: &CVector) -> Result<WgSolution> {
        if a.len() != self.dim() {
            return Err(Error::Shape(format!(
                "solution length {} != system dim {}",
                a.len(),
                self.dim()
            )));
        }
        let rel_residual = self.residual_of(a)?;
        let (r, per_layer, t) = self.split(a);
        let layers = self
            .layers
            .iter()
            .zip(per_layer)
            .map(|(lm, (down, up))| LayerField {
                kz: lm.basis.kz.clone(),
                vectors: lm.basis.vectors.clone(),
                phi: lm.phi.clone(),
                down,
                up,
                z_top: lm.z_top,
                thickness: lm.thickness,
            })
            .collect();
        Ok(WgSolution {
            kind: self.kind,
            grid: self.grid.clone(),
            phase_ref: self.phase_ref,
            eps_substrate: self.eps_substrate,
            h0: self.h0,
            r,
            t,
            layers,
            rel_residual,
        })
    }
}

/// Solve a stack end to end with the stable phase referencing.
pub fn solve_stack(
    stack: &MaskStack,
    source: &PlaneWaveSource,
    n_x: usize,
    n_y: usize,
) -> Result<WgSolution> {
    let grid = build_harmonics(stack, source, n_x, n_y)?;
    let kind = operator_kind(source);
    let layers = layer_modes(stack, &grid, kind)?;
    let sys = assemble_global(stack, source, &grid, layers, PhaseRef::Stable)?;
    sys.solve()
}

/// Relative L2 distance between two solutions' fields, sampled on an
/// `nx` by `nz` grid of cell midpoints covering one x period and the
/// reference stack's depth. The reference supplies the normalization.
pub fn field_rel_l2(
    candidate: &WgSolution,
    reference: &WgSolution,
    nx: usize,
    nz: usize,
) -> Result<f64> {
    if nx == 0 || nz == 0 {
        return Err(Error::Config("field comparison needs a nonempty grid".into()));
    }
    let l_x = std::f64::consts::TAU / reference.grid.kappa_x;
    let depth = reference.total_thickness();
    if depth <= 0.0 {
        return Err(Error::Config("field comparison needs a stack with depth".into()));
    }
    let xs: Vec<f64> = (0..nx)
        .map(|i| l_x * (i as f64 + 0.5) / nx as f64)
        .collect();
    let zs: Vec<f64> = (0..nz)
        .map(|k| -depth * (k as f64 + 0.5) / nz as f64)
        .collect();
    let a = candidate.field_grid(&xs, &zs)?;
    let b = reference.field_grid(&xs, &zs)?;
    Ok(crate::oracles::relative_l2(&a.values, &b.values))
}

impl WgSolution {
    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }

    /// Total scalar field (incident included) at a point. Available for the
    /// scalar kinds; vector solutions are evaluated through their order
    /// amplitudes instead.
    pub fn field_at(&self, x: f64, z: f64) -> Result<C64> {
        if self.kind == OperatorKind::Vector3d {
            return Err(Error::Config(
                "field maps are available for scalar problems only".into(),
            ));
        }
        let g = &self.grid;
        let n = g.len();
        let i1 = c64(0.0, 1.0);
        let psi = |m: i64| (-i1 * g.kx(m) * x).exp();
        if z >= 0.0 {
            let mut u = psi(g.m0) * (i1 * g.k0z * z).exp();
            for i in 0..n {
                let (mi, _) = g.order(i);
                u += self.r.data[i] * psi(mi) * (-i1 * g.kz_flat(i) * z).exp();
            }
            return Ok(u);
        }
        let depth = self.total_thickness();
        if z <= -depth {
            let mut u = C64::ZERO;
            for i in 0..n {
                let (mi, ni) = g.order(i);
                let kzt = g.kz_in(self.eps_substrate, mi, ni);
                u += self.t.data[i] * psi(mi) * (i1 * kzt * (z + depth)).exp();
            }
            return Ok(u);
        }
        for lf in &self.layers {
            let z_bot = lf.z_top - lf.thickness;
            if z >= z_bot || std::ptr::eq(lf, self.layers.last().unwrap()) {
                // Per-order coefficients at this depth, then synthesis in x.
                let mut coeff = vec![C64::ZERO; n];
                for (p, &kz) in lf.kz.iter().enumerate() {
                    let f_down = (i1 * kz * (z - lf.z_top)).exp();
                    let f_up = match self.phase_ref {
                        PhaseRef::Stable => (-i1 * kz * (z - z_bot)).exp(),
                        PhaseRef::Flipped => (-i1 * kz * (z - lf.z_top)).exp(),
                    };
                    let amp = lf.down[p] * f_down + lf.up[p] * f_up;
                    for (i, c) in coeff.iter_mut().enumerate() {
                        *c += lf.vectors.get(i, p) * amp;
                    }
                }
                let mut u = C64::ZERO;
                for (i, c) in coeff.iter().enumerate() {
                    let (mi, _) = g.order(i);
                    u += c * psi(mi);
                }
                return Ok(u);
            }
        }
        unreachable!("z lies in one of the regions");
    }

    /// Sample the field over a rectangle; values are x-fastest.
    pub fn field_grid(&self, xs: &[f64], zs: &[f64]) -> Result<FieldGrid> {
        let mut values = Vec::with_capacity(xs.len() * zs.len());
        for &z in zs {
            for &x in xs {
                values.push(self.field_at(x, z)?);
            }
        }
        Ok(FieldGrid {
            xs: xs.to_vec(),
            zs: zs.to_vec(),
            values,
        })
    }

    /// Diffraction efficiencies of every retained order.
    pub fn efficiencies(&self) -> OrderTable {
        let g = &self.grid;
        let n = g.len();
        let k0 = g.k0;
        let mut orders = Vec::with_capacity(n);
        let mut reflectance = Vec::with_capacity(n);
        let mut transmittance = Vec::with_capacity(n);
        match self.kind {
            OperatorKind::Te2d | OperatorKind::Tm2d => {
                for i in 0..n {
                    let (mi, ni) = g.order(i);
                    orders.push((mi, ni));
                    let kz = g.kz_flat(i);
                    let kzt = g.kz_in(self.eps_substrate, mi, ni);
                    // Flux factor Re(kz) for E_y amplitudes, Re(kz/eps) for
                    // H_y; vacuum's factor divides out.
                    let (fr, ft) = match self.kind {
                        OperatorKind::Te2d => (kz.re, kzt.re),
                        _ => (kz.re, (kzt / self.eps_substrate).re),
                    };
                    reflectance.push(fr * self.r.data[i].norm_sqr() / g.k0z);
                    transmittance.push(ft * self.t.data[i].norm_sqr() / g.k0z);
                }
            }
            OperatorKind::Vector3d => {
                // |S_z| of a transverse-H pair in a uniform medium:
                // Re[k0 P / kz - Q / (k0 eps kz)], P = |hx|^2 + |hy|^2,
                // Q = |ky hx - kx hy|^2. Exactly zero for evanescent orders
                // in lossless media.
                let flux = |hx: C64, hy: C64, kx: f64, ky: f64, kz: C64, eps: C64| -> f64 {
                    let p = hx.norm_sqr() + hy.norm_sqr();
                    let q = (ky * hx - kx * hy).norm_sqr();
                    (k0 * p / kz).re - (q / (k0 * eps * kz)).re
                };
                let (k0x, k0y, _) = (g.kx(g.m0), g.ky(g.n0), ());
                let inc = flux(self.h0[0], self.h0[1], k0x, k0y, c64(g.k0z, 0.0), C64::ONE);
                for i in 0..n {
                    let (mi, ni) = g.order(i);
                    orders.push((mi, ni));
                    let kx = g.kx(mi);
                    let ky = g.ky(ni);
                    reflectance.push(
                        flux(self.r.data[i], self.r.data[n + i], kx, ky, g.kz_flat(i), C64::ONE)
                            / inc,
                    );
                    let kzt = g.kz_in(self.eps_substrate, mi, ni);
                    transmittance.push(
                        flux(
                            self.t.data[i],
                            self.t.data[n + i],
                            kx,
                            ky,
                            kzt,
                            self.eps_substrate,
                        ) / inc,
                    );
                }
            }
        }
        OrderTable {
            orders,
            reflectance,
            transmittance,
        }
    }
}

/// Sampled complex field over a rectangle, x varying fastest.
#[derive(Clone, Debug)]
pub struct FieldGrid {
    pub xs: Vec<f64>,
    pub zs: Vec<f64>,
    pub values: Vec<C64>,
}

/// Per-order power fractions relative to the incident wave.
#[derive(Clone, Debug)]
pub struct OrderTable {
    pub orders: Vec<(i64, i64)>,
    pub reflectance: Vec<f64>,
    pub transmittance: Vec<f64>,
}

impl OrderTable {
    pub fn total_reflectance(&self) -> f64 {
        self.reflectance.iter().sum()
    }

    pub fn total_transmittance(&self) -> f64 {
        self.transmittance.iter().sum()
    }

    pub fn get(&self, m: i64, n: i64) -> Option<(f64, f64)> {
        self.orders
            .iter()
            .position(|&o| o == (m, n))
            .map(|i| (self.reflectance[i], self.transmittance[i]))
    }
}
