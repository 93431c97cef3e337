//! Closed-form and independent reference solutions for unpatterned problems.
//!
//! Everything here treats a single transverse wavenumber kx, so it covers
//! plane waves, single interfaces (Fresnel), and uniform multilayers
//! (transfer-matrix recursion with interface-referenced phases, stable for
//! thick absorbing films). A second-order finite-difference solver for the
//! same 1-D Helmholtz problem acts as an independent cross-check on the
//! transfer-matrix path: it shares no formulas with it beyond the equation.
//!
//! Amplitude conventions match the modal solver: the incident wave is
//! exp(-i(kx x - kz z)) with unit amplitude at z = 0, the reflected
//! amplitude multiplies exp(-i kz z) referenced to z = 0, the transmitted
//! amplitude multiplies exp(+i kz_sub (z + D)) referenced to z = -D.

use crate::error::{Error, Result};
use crate::modes::{branch_sqrt, OperatorKind};
use crate::numerics::{c64, C64};

/// Downward plane wave exp(-i kx x) exp(+i kz z).
pub fn plane_wave_field(kx: f64, kz: C64, x: f64, z: f64) -> C64 {
    (c64(0.0, -kx * x) + c64(0.0, 1.0) * kz * z).exp()
}

/// Wave admittance entering the interface formulas: kz for TE (E_y
/// amplitudes), kz/eps for TM (H_y amplitudes).
fn admittance(eps: C64, k0: f64, kx: f64, kind: OperatorKind) -> Result<(C64, C64)> {
    let kz = branch_sqrt(eps * k0 * k0 - c64(kx * kx, 0.0));
    let q = match kind {
        OperatorKind::Te2d => kz,
        OperatorKind::Tm2d => kz / eps,
        OperatorKind::Vector3d => {
            return Err(Error::Config(
                "oracles cover scalar TE/TM problems only".into(),
            ))
        }
    };
    Ok((kz, q))
}

/// Fresnel amplitudes for a single interface between uniform half-spaces.
pub fn fresnel_rt(eps1: C64, eps2: C64, k0: f64, kx: f64, kind: OperatorKind) -> Result<(C64, C64)> {
    let (_, q1) = admittance(eps1, k0, kx, kind)?;
    let (_, q2) = admittance(eps2, k0, kx, kind)?;
    let denom = q1 + q2;
    if denom.norm() == 0.0 {
        return Err(Error::Numerical("fresnel: degenerate interface".into()));
    }
    Ok(((q1 - q2) / denom, 2.0 * q1 / denom))
}

/// Down/up amplitudes inside one film; `down` is referenced to the film's
/// top, `up` to its bottom, so stored values never grow along the film.
#[derive(Clone, Debug)]
pub struct FilmAmps {
    pub down: C64,
    pub up: C64,
}

/// Transfer-matrix solution of an unpatterned multilayer.
#[derive(Clone, Debug)]
pub struct TmmSolution {
    pub kind: OperatorKind,
    pub k0: f64,
    pub kx: f64,
    /// Longitudinal wavenumbers of media 0 (vacuum above), 1..=J (films),
    /// J+1 (substrate).
    pub kz: Vec<C64>,
    pub eps: Vec<C64>,
    pub thickness: Vec<f64>,
    pub r: C64,
    pub t: C64,
    pub reflectance: f64,
    pub transmittance: f64,
    pub amps: Vec<FilmAmps>,
}

/// Solve a stack of uniform films `(eps, thickness)` between vacuum above
/// and a uniform substrate below, at a single transverse wavenumber.
pub fn tmm_multilayer(
    films: &[(C64, f64)],
    eps_sub: C64,
    k0: f64,
    kx: f64,
    kind: OperatorKind,
) -> Result<TmmSolution> {
    if films.iter().any(|(_, d)| !(*d > 0.0)) {
        return Err(Error::Config("film thickness must be positive".into()));
    }
    let j = films.len();
    let mut eps = Vec::with_capacity(j + 2);
    eps.push(C64::ONE);
    eps.extend(films.iter().map(|(e, _)| *e));
    eps.push(eps_sub);

    let mut kz = Vec::with_capacity(j + 2);
    let mut q = Vec::with_capacity(j + 2);
    for &e in &eps {
        let (kzi, qi) = admittance(e, k0, kx, kind)?;
        kz.push(kzi);
        q.push(qi);
    }

    // Interface Fresnel coefficients: interface i sits between media i, i+1.
    let mut rf = Vec::with_capacity(j + 1);
    let mut tf = Vec::with_capacity(j + 1);
    for i in 0..=j {
        let denom = q[i] + q[i + 1];
        if denom.norm() == 0.0 {
            return Err(Error::Numerical(format!("tmm: degenerate interface {i}")));
        }
        rf.push((q[i] - q[i + 1]) / denom);
        tf.push(2.0 * q[i] / denom);
    }

    // phi[i] = exp(-i kz_i d_i) for films i = 1..=J; |phi| <= 1 by branch.
    let mut phi = vec![C64::ONE; j + 2];
    for i in 1..=j {
        phi[i] = (c64(0.0, -1.0) * kz[i] * films[i - 1].1).exp();
    }

    // Reflection seen looking down from just above interface i.
    let mut gamma = vec![C64::ZERO; j + 1];
    gamma[j] = rf[j];
    for i in (0..j).rev() {
        let g = gamma[i + 1] * phi[i + 1] * phi[i + 1];
        gamma[i] = (rf[i] + g) / (C64::ONE + rf[i] * g);
    }
    let r = gamma[0];

    // Forward substitution for film amplitudes: `down` at each film's top.
    let mut amps = Vec::with_capacity(j);
    let mut down_at_interface = C64::ONE; // incident amplitude at interface 0
    for i in 0..j {
        let g = gamma[i + 1] * phi[i + 1] * phi[i + 1];
        let a = tf[i] * down_at_interface / (C64::ONE + rf[i] * g);
        let b = gamma[i + 1] * phi[i + 1] * a;
        amps.push(FilmAmps { down: a, up: b });
        down_at_interface = a * phi[i + 1];
    }
    let t = tf[j] * down_at_interface;

    // Reflected order lives in the incidence medium, so its flux factor
    // cancels against the incident one.
    let reflectance = r.norm_sqr();
    let flux = |kz_m: C64, e: C64, amp: C64| -> f64 {
        let factor = match kind {
            OperatorKind::Te2d => kz_m.re,
            OperatorKind::Tm2d => (kz_m / e).re,
            OperatorKind::Vector3d => unreachable!(),
        };
        factor * amp.norm_sqr()
    };
    let inc_flux = flux(kz[0], C64::ONE, C64::ONE);
    let transmittance = flux(kz[j + 1], eps[j + 1], t) / inc_flux;

    Ok(TmmSolution {
        kind,
        k0,
        kx,
        kz,
        eps,
        thickness: films.iter().map(|(_, d)| *d).collect(),
        r,
        t,
        reflectance,
        transmittance,
        amps,
    })
}

impl TmmSolution {
    pub fn total_thickness(&self) -> f64 {
        self.thickness.iter().sum()
    }

    /// Total field (incident included) at a point; x enters through the
    /// common transverse phase.
    pub fn field_at(&self, x: f64, z: f64) -> C64 {
        let i = c64(0.0, 1.0);
        let transverse = (-i * self.kx * x).exp();
        let d_total = self.total_thickness();
        if z >= 0.0 {
            let kz0 = self.kz[0];
            return transverse * ((i * kz0 * z).exp() + self.r * (-i * kz0 * z).exp());
        }
        if z <= -d_total {
            let kzs = self.kz[self.kz.len() - 1];
            return transverse * self.t * (i * kzs * (z + d_total)).exp();
        }
        let mut top = 0.0;
        for (idx, &d) in self.thickness.iter().enumerate() {
            let bottom = top - d;
            if z >= bottom {
                let kzf = self.kz[idx + 1];
                let a = self.amps[idx].down * (i * kzf * (z - top)).exp();
                let b = self.amps[idx].up * (-i * kzf * (z - bottom)).exp();
                return transverse * (a + b);
            }
            top = bottom;
        }
        unreachable!("z covered by one of the regions");
    }

    /// d(field)/dz at a point, for continuity checks.
    pub fn dz_field_at(&self, x: f64, z: f64) -> C64 {
        let i = c64(0.0, 1.0);
        let transverse = (-i * self.kx * x).exp();
        let d_total = self.total_thickness();
        if z >= 0.0 {
            let kz0 = self.kz[0];
            return transverse
                * (i * kz0 * (i * kz0 * z).exp() - i * kz0 * self.r * (-i * kz0 * z).exp());
        }
        if z <= -d_total {
            let kzs = self.kz[self.kz.len() - 1];
            return transverse * i * kzs * self.t * (i * kzs * (z + d_total)).exp();
        }
        let mut top = 0.0;
        for (idx, &d) in self.thickness.iter().enumerate() {
            let bottom = top - d;
            if z >= bottom {
                let kzf = self.kz[idx + 1];
                let a = self.amps[idx].down * (i * kzf * (z - top)).exp();
                let b = self.amps[idx].up * (-i * kzf * (z - bottom)).exp();
                return transverse * i * kzf * (a - b);
            }
            top = bottom;
        }
        unreachable!("z covered by one of the regions");
    }
}

/// Independent second-order finite-difference solve of
/// u'' + (k0^2 eps(z) - kx^2) u = 0 on [z_min, z_max] with outgoing
/// conditions: incident unit wave enters from above, only outgoing waves
/// leave. `eps` is sampled at (z - h/4, z + h/4) and averaged, so profile
/// jumps that land on nodes are treated symmetrically. Returns the nodes
/// and the total field on them.
pub fn fd_helmholtz_1d(
    eps: impl Fn(f64) -> C64,
    k0: f64,
    kx: f64,
    z_min: f64,
    z_max: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<C64>)> {
    if n < 3 {
        return Err(Error::Config("fd grid needs at least 3 nodes".into()));
    }
    if !(z_max > z_min) {
        return Err(Error::Config("fd needs z_max > z_min".into()));
    }
    let h = (z_max - z_min) / (n - 1) as f64;
    let zs: Vec<f64> = (0..n).map(|i| z_min + h * i as f64).collect();
    let i1 = c64(0.0, 1.0);

    let kz_top = branch_sqrt(eps(z_max) * k0 * k0 - c64(kx * kx, 0.0));
    let kz_bot = branch_sqrt(eps(z_min) * k0 * k0 - c64(kx * kx, 0.0));

    // Tridiagonal system: sub[i] u_{i-1} + diag[i] u_i + sup[i] u_{i+1} = rhs[i]
    let mut sub = vec![C64::ZERO; n];
    let mut diag = vec![C64::ZERO; n];
    let mut sup = vec![C64::ZERO; n];
    let mut rhs = vec![C64::ZERO; n];
    let h2 = h * h;

    let coeff = |z: f64| -> C64 {
        let e = (eps(z - 0.25 * h) + eps(z + 0.25 * h)) * 0.5;
        e * k0 * k0 - c64(kx * kx, 0.0)
    };

    for idx in 1..n - 1 {
        sub[idx] = c64(1.0 / h2, 0.0);
        sup[idx] = c64(1.0 / h2, 0.0);
        diag[idx] = c64(-2.0 / h2, 0.0) + coeff(zs[idx]);
    }
    // Bottom (z_min): radiation u' - i kz_bot u = 0, ghost node eliminated
    // through the PDE row.
    diag[0] = c64(-2.0 / h2, 0.0) - 2.0 * i1 * kz_bot / h + coeff(zs[0]);
    sup[0] = c64(2.0 / h2, 0.0);
    // Top (z_max): u' + i kz_top u = g with g from the incident wave
    // u_inc = exp(+i kz_top z).
    let u_inc = (i1 * kz_top * z_max).exp();
    let g = 2.0 * i1 * kz_top * u_inc;
    diag[n - 1] = c64(-2.0 / h2, 0.0) - 2.0 * i1 * kz_top / h + coeff(zs[n - 1]);
    sub[n - 1] = c64(2.0 / h2, 0.0);
    rhs[n - 1] = -2.0 * g / h;

    // Thomas sweep.
    let mut cp = vec![C64::ZERO; n];
    let mut dp = vec![C64::ZERO; n];
    let mut denom = diag[0];
    if denom.norm() == 0.0 {
        return Err(Error::Numerical("fd: zero pivot".into()));
    }
    cp[0] = sup[0] / denom;
    dp[0] = rhs[0] / denom;
    for idx in 1..n {
        denom = diag[idx] - sub[idx] * cp[idx - 1];
        if denom.norm() == 0.0 {
            return Err(Error::Numerical("fd: zero pivot".into()));
        }
        if idx < n - 1 {
            cp[idx] = sup[idx] / denom;
        }
        dp[idx] = (rhs[idx] - sub[idx] * dp[idx - 1]) / denom;
    }
    let mut u = vec![C64::ZERO; n];
    u[n - 1] = dp[n - 1];
    for idx in (0..n - 1).rev() {
        u[idx] = dp[idx] - cp[idx] * u[idx + 1];
    }
    if u.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numerical("fd: non-finite solution".into()));
    }
    Ok((zs, u))
}

/// Relative L2 distance between two complex sample sets.
pub fn relative_l2(u: &[C64], reference: &[C64]) -> f64 {
    assert_eq!(u.len(), reference.len(), "relative_l2: length mismatch");
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in u.iter().zip(reference) {
        num += (a - b).norm_sqr();
        den += b.norm_sqr();
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn fresnel_te_frozen_values() {
        // k0 = 1, 45 degrees, eps = 4 below.
        let (r, t) = fresnel_rt(C64::ONE, c64(4.0, 0.0), 1.0, FRAC_1_SQRT_2, OperatorKind::Te2d)
            .unwrap();
        assert!((r - c64(-0.4514162296451364, 0.0)).norm() < 1e-15);
        assert!((t - c64(0.5485837703548635, 0.0)).norm() < 1e-15);
        // 1 + r = t for TE amplitudes
        assert!((C64::ONE + r - t).norm() < 1e-15);
    }

    #[test]
    fn fresnel_energy_balance_lossless() {
        let kz1 = branch_sqrt(c64(1.0 - 0.5, 0.0));
        let kz2 = branch_sqrt(c64(4.0 - 0.5, 0.0));
        let (r, t) = fresnel_rt(C64::ONE, c64(4.0, 0.0), 1.0, FRAC_1_SQRT_2, OperatorKind::Te2d)
            .unwrap();
        let big_r = r.norm_sqr();
        let big_t = (kz2.re / kz1.re) * t.norm_sqr();
        assert!((big_r - 0.20377661238703051).abs() < 1e-15);
        assert!((big_t - 0.7962233876129693).abs() < 1e-14);
        assert!((big_r + big_t - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fresnel_tm_brewster_angle() {
        // eps2 = 3 at 60 degrees: q1 = q2, so the TM reflection vanishes.
        let k0 = 1.0;
        let kx = (60f64).to_radians().sin();
        let (r, _) = fresnel_rt(C64::ONE, c64(3.0, 0.0), k0, kx, OperatorKind::Tm2d).unwrap();
        assert!(r.norm() < 1e-15);
    }

    #[test]
    fn tmm_single_interface_reduces_to_fresnel() {
        // A film of the substrate material changes nothing but a phase on t.
        let sol = tmm_multilayer(
            &[(c64(4.0, 0.0), 1.25)],
            c64(4.0, 0.0),
            1.0,
            FRAC_1_SQRT_2,
            OperatorKind::Te2d,
        )
        .unwrap();
        let (r, t) = fresnel_rt(C64::ONE, c64(4.0, 0.0), 1.0, FRAC_1_SQRT_2, OperatorKind::Te2d)
            .unwrap();
        assert!((sol.r - r).norm() < 1e-14);
        let phase = (c64(0.0, 1.0) * sol.kz[1] * 1.25).exp();
        assert!((sol.t * phase - t).norm() < 1e-14, "t up to propagation phase");
        assert!((sol.reflectance + sol.transmittance - 1.0).abs() < 1e-13);
    }

    #[test]
    fn tmm_half_wave_film_is_transparent() {
        let eps = c64(4.0, 0.0);
        let kzf = branch_sqrt(eps - c64(0.5, 0.0));
        let d = std::f64::consts::PI / kzf.re;
        let sol = tmm_multilayer(&[(eps, d)], C64::ONE, 1.0, FRAC_1_SQRT_2, OperatorKind::Te2d)
            .unwrap();
        assert!(sol.r.norm() < 1e-14, "half-wave film reflects: {:?}", sol.r);
        assert!((sol.t.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tmm_vacuum_films_reproduce_plane_wave() {
        let sol = tmm_multilayer(
            &[(C64::ONE, 0.7), (C64::ONE, 1.3)],
            C64::ONE,
            1.0,
            FRAC_1_SQRT_2,
            OperatorKind::Te2d,
        )
        .unwrap();
        assert!(sol.r.norm() < 1e-15);
        let kz = sol.kz[0];
        for z in [-1.9, -1.0, -0.3, 0.0, 0.8] {
            for x in [0.0, 0.4] {
                let got = sol.field_at(x, z);
                let want = plane_wave_field(FRAC_1_SQRT_2, kz, x, z);
                assert!((got - want).norm() < 1e-13, "z={z}");
            }
        }
    }

    #[test]
    fn tmm_field_is_continuous_at_interfaces() {
        let films = [
            (c64(2.0, -0.4), 0.8),
            (c64(5.5, 0.0), 0.35),
            (c64(1.2, -0.02), 1.1),
        ];
        for kind in [OperatorKind::Te2d, OperatorKind::Tm2d] {
            let sol = tmm_multilayer(&films, c64(3.0, -1.0), 1.1, 0.6, kind).unwrap();
            let mut z = 0.0;
            let mut depths = vec![0.0];
            for (_, d) in &films {
                z -= d;
                depths.push(z);
            }
            for &zi in &depths {
                let above = sol.field_at(0.3, zi + 1e-9);
                let below = sol.field_at(0.3, zi - 1e-9);
                assert!(
                    (above - below).norm() < 1e-7 * above.norm().max(1e-30),
                    "field jump at z={zi}: {above:?} vs {below:?}"
                );
                // TE: du/dz continuous; TM: (1/eps) du/dz continuous.
                let eps_of = |zz: f64| -> C64 {
                    if zz > 0.0 {
                        C64::ONE
                    } else if zz <= *depths.last().unwrap() {
                        c64(3.0, -1.0)
                    } else {
                        let mut top = 0.0;
                        for (e, d) in &films {
                            if zz > top - d {
                                return *e;
                            }
                            top -= d;
                        }
                        unreachable!()
                    }
                };
                let qa = match kind {
                    OperatorKind::Te2d => sol.dz_field_at(0.3, zi + 1e-9),
                    _ => sol.dz_field_at(0.3, zi + 1e-9) / eps_of(zi + 1e-9),
                };
                let qb = match kind {
                    OperatorKind::Te2d => sol.dz_field_at(0.3, zi - 1e-9),
                    _ => sol.dz_field_at(0.3, zi - 1e-9) / eps_of(zi - 1e-9),
                };
                assert!(
                    (qa - qb).norm() < 1e-6 * qa.norm().max(1e-30),
                    "derivative jump at z={zi}"
                );
            }
        }
    }

    #[test]
    fn tmm_lossless_multilayer_conserves_energy() {
        let films = [
            (c64(2.25, 0.0), 0.6),
            (c64(6.0, 0.0), 0.22),
            (c64(1.8, 0.0), 0.9),
        ];
        for kind in [OperatorKind::Te2d, OperatorKind::Tm2d] {
            let sol = tmm_multilayer(&films, c64(2.0, 0.0), 1.3, 0.5, kind).unwrap();
            assert!(
                (sol.reflectance + sol.transmittance - 1.0).abs() < 1e-13,
                "{kind:?}: R+T = {}",
                sol.reflectance + sol.transmittance
            );
        }
    }

    #[test]
    fn fd_matches_tmm_on_single_interface() {
        // Thick eps = 4 region below z = 0 (the substrate handles the rest).
        let k0 = 1.0;
        let kx = FRAC_1_SQRT_2;
        let kz1 = branch_sqrt(c64(k0 * k0 - kx * kx, 0.0));
        let zspan = std::f64::consts::PI / kz1.re;
        let films = [(c64(4.0, 0.0), zspan)];
        let sol = tmm_multilayer(&films, c64(4.0, 0.0), k0, kx, OperatorKind::Te2d).unwrap();
        let eps = |z: f64| if z > 0.0 { C64::ONE } else { c64(4.0, 0.0) };
        let n = 2 * 4096 + 1;
        let (zs, u) = fd_helmholtz_1d(eps, k0, kx, -zspan, zspan, n).unwrap();
        let reference: Vec<C64> = zs.iter().map(|&z| sol.field_at(0.0, z)).collect();
        let err = relative_l2(&u, &reference);
        assert!(err < 1e-4, "fd vs tmm: {err}");
    }

    #[test]
    fn relative_l2_matches_perturbation_scale() {
        let reference: Vec<C64> = (0..50).map(|i| c64((i as f64 * 0.3).cos(), (i as f64 * 0.17).sin())).collect();
        let norm = reference.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let delta = 1e-6;
        let mut u = reference.clone();
        u[7] += c64(delta, 0.0); // unit-direction perturbation scaled by delta
        let got = relative_l2(&u, &reference);
        // Adding delta to an O(1) component rounds, so recovery is only
        // good to ~eps/delta relative.
        assert!((got - delta / norm).abs() < 1e-8 * (delta / norm));
        assert_eq!(relative_l2(&reference, &reference), 0.0);
    }
}
