//! Per-layer modal bases.
//!
//! Within one layer the permittivity does not depend on z, so the field
//! separates into Fourier-space eigenmodes exp(+-i k_z z). The layer
//! operator acting on the transverse Fourier coefficients is assembled from
//! the convolution matrices of the profile; its eigenvalues are k_z^2 and
//! the branch k_z = sqrt(lambda) with Im <= 0 (ties toward Re >= 0) selects
//! modes that decay in their direction of travel.
//!
//! Scalar 2-D problems use one N x N operator (TE acts on E_y, TM on H_y);
//! the 3-D vector problem couples (h_x, h_y) into a 2N x 2N operator with
//! h_z eliminated through div H = 0.


use crate::error::{Error, Result};
use crate::geometry::{HarmonicGrid, PermittivityFourier};
use crate::numerics::{c64, convolution_matrix, C64, CMatrix};

/// Square root on the decaying branch: Im <= 0, ties broken toward Re >= 0.
pub fn branch_sqrt(z: C64) -> C64 {
    let s = z.sqrt();
    if s.im > 0.0 {
        -s
    } else {
        s
    }
}

/// Which field formulation a layer operator (and its downstream system) uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// 2-D, field E_y.
    Te2d,
    /// 2-D, field H_y.
    Tm2d,
    /// 3-D, fields (H_x, H_y).
    Vector3d,
}

impl OperatorKind {
    /// Operator dimension for a grid of N harmonics.
    pub fn dim(&self, n_orders: usize) -> usize {
        match self {
            OperatorKind::Te2d | OperatorKind::Tm2d => n_orders,
            OperatorKind::Vector3d => 2 * n_orders,
        }
    }
}

/// Modal basis of one layer: `vectors` holds eigenvector columns (transverse
/// Fourier coefficients; for the vector operator h_x rows come first), `kz`
/// the matching branch-selected wavenumbers.
#[derive(Clone, Debug)]
pub struct ModalBasis {
    pub kind: OperatorKind,
    pub lambda: Vec<C64>,
    pub kz: Vec<C64>,
    pub vectors: CMatrix,
    /// Worst eigenpair residual ||Mv - lambda v||_2 reported by the solve;
    /// zero for bases built analytically.
    pub eig_residual: f64,
}

/// Assemble the Fourier-space layer operator M with M h = k_z^2 h.
pub fn build_layer_matrix(
    grid: &HarmonicGrid,
    fourier: &PermittivityFourier,
    kind: OperatorKind,
) -> Result<CMatrix> {
    let n = grid.len();
    let k0sq = grid.k0 * grid.k0;
    let idx = |i: usize| grid.order(i);
    let need_m = 2 * grid.n_x as i64;
    let need_n = 2 * grid.n_y as i64;
    if fourier.eps.m_max < need_m || fourier.eps.n_max < need_n {
        return Err(Error::Shape(format!(
            "fourier table covers |m| <= {}, |n| <= {}; grid needs {need_m}, {need_n}",
            fourier.eps.m_max, fourier.eps.n_max
        )));
    }

    match kind {
        OperatorKind::Te2d | OperatorKind::Tm2d => {
            let mut m = convolution_matrix(n, idx, |dm, dn| fourier.eps.get(dm, dn)).scale(c64(k0sq, 0.0));
            for i in 0..n {
                let (mi, _) = idx(i);
                let kx = grid.kx(mi);
                m.add_assign_at(i, i, c64(-kx * kx, 0.0));
            }
            if kind == OperatorKind::Tm2d {
                // extra term: - T(g_x) d/dx, with d/dx = -i k_x per harmonic
                let gx = convolution_matrix(n, idx, |dm, dn| fourier.g_x.get(dm, dn));
                for j in 0..n {
                    let (mj, _) = idx(j);
                    let dxj = c64(0.0, -grid.kx(mj));
                    for i in 0..n {
                        m.add_assign_at(i, j, -gx.get(i, j) * dxj);
                    }
                }
            }
            Ok(m)
        }
        OperatorKind::Vector3d => {
            let te = convolution_matrix(n, idx, |dm, dn| fourier.eps.get(dm, dn));
            let gx = convolution_matrix(n, idx, |dm, dn| fourier.g_x.get(dm, dn));
            let gy = convolution_matrix(n, idx, |dm, dn| fourier.g_y.get(dm, dn));
            let mut m = CMatrix::zeros(2 * n, 2 * n);
            for j in 0..n {
                let (mj, nj) = idx(j);
                let dxj = c64(0.0, -grid.kx(mj));
                let dyj = c64(0.0, -grid.ky(nj));
                for i in 0..n {
                    let base = te.get(i, j) * k0sq;
                    // xx block: K + k0^2 T(eps) - T(g_y) D_y
                    m.set(i, j, base - gy.get(i, j) * dyj);
                    // xy block: T(g_y) D_x
                    m.set(i, j + n, gy.get(i, j) * dxj);
                    // yx block: T(g_x) D_y
                    m.set(i + n, j, gx.get(i, j) * dyj);
                    // yy block: K + k0^2 T(eps) - T(g_x) D_x
                    m.set(i + n, j + n, base - gx.get(i, j) * dxj);
                }
            }
            for i in 0..n {
                let (mi, ni) = idx(i);
                let ksq = grid.kx(mi) * grid.kx(mi) + grid.ky(ni) * grid.ky(ni);
                m.add_assign_at(i, i, c64(-ksq, 0.0));
                m.add_assign_at(i + n, i + n, c64(-ksq, 0.0));
            }
            Ok(m)
        }
    }
}

/// Eigendecompose a layer operator into its modal basis.
pub fn solve_modes(matrix: &CMatrix, kind: OperatorKind) -> Result<ModalBasis> {
    let eig = matrix.eig()?;
    let kz: Vec<C64> = eig.values.iter().map(|&l| branch_sqrt(l)).collect();
    let eig_residual = eig.max_residual();
    Ok(ModalBasis {
        kind,
        lambda: eig.values,
        kz,
        vectors: eig.vectors,
        eig_residual,
    })
}

/// Modal basis of a uniform layer, built without an eigensolve: every
/// harmonic is its own mode with k_z^2 = eps k0^2 - kx^2 - ky^2. For the
/// vector operator the basis holds N x-polarized then N y-polarized modes.
pub fn homogeneous_modes(grid: &HarmonicGrid, eps: C64, kind: OperatorKind) -> ModalBasis {
    let n = grid.len();
    let dim = kind.dim(n);
    let mut lambda = Vec::with_capacity(dim);
    let mut kz = Vec::with_capacity(dim);
    let vectors = CMatrix::identity(dim);
    for block in 0..dim / n {
        let _ = block;
        for i in 0..n {
            let (m, nn) = grid.order(i);
            let kx = grid.kx(m);
            let ky = grid.ky(nn);
            let l = eps * grid.k0 * grid.k0 - c64(kx * kx + ky * ky, 0.0);
            lambda.push(l);
            kz.push(branch_sqrt(l));
        }
    }
    ModalBasis {
        kind,
        lambda,
        kz,
        vectors,
        eig_residual: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        build_harmonics, fourier_coeffs, LayerPattern, LayerSpec, MaskStack, PlaneWaveSource,
    };
    use proptest::prelude::*;

    const TAU: f64 = std::f64::consts::TAU;

    fn grid_45deg(n_x: usize) -> HarmonicGrid {
        // k0 = 1, theta = 45 deg, L_x = 2 pi / k_x so m0 = 1.
        let kx = std::f64::consts::FRAC_1_SQRT_2;
        let stack = MaskStack::new_2d(
            vec![LayerSpec {
                thickness: 1.0,
                pattern: LayerPattern::Uniform { eps: c64(4.0, 0.0) },
            }],
            TAU / kx,
        )
        .unwrap();
        let src = PlaneWaveSource::te(TAU, 45.0);
        build_harmonics(&stack, &src, n_x, 0).unwrap()
    }

    #[test]
    fn branch_sqrt_frozen_examples() {
        assert!((branch_sqrt(c64(0.25, 0.0)) - c64(0.5, 0.0)).norm() < 1e-16);
        assert!((branch_sqrt(c64(-1.0, 0.0)) - c64(0.0, -1.0)).norm() < 1e-16);
        assert!((branch_sqrt(c64(4.0, 0.0)) - c64(2.0, 0.0)).norm() < 1e-16);
        // lossy medium: decaying root has Re > 0, Im < 0
        let s = branch_sqrt(c64(3.0, -0.4));
        assert!(s.re > 0.0 && s.im < 0.0);
    }

    #[test]
    fn te_uniform_operator_is_diagonal() {
        let g = grid_45deg(2);
        let l_x = TAU / g.kappa_x;
        let f = fourier_coeffs(&LayerPattern::Uniform { eps: c64(4.0, 0.0) }, l_x, None, 2, 0).unwrap();
        let m = build_layer_matrix(&g, &f, OperatorKind::Te2d).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                let (mi, _) = g.order(i);
                let want = if i == j {
                    c64(4.0 - g.kx(mi) * g.kx(mi), 0.0)
                } else {
                    C64::ZERO
                };
                assert!((m.get(i, j) - want).norm() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn te_hole_operator_couples_by_coefficient_difference() {
        let g = grid_45deg(2);
        let l_x = TAU / g.kappa_x;
        let pat = LayerPattern::HoleInX {
            eps_background: c64(4.0, 0.0),
            eps_hole: C64::ONE,
            center: 0.0,
            width: l_x / 2.0,
        };
        let f = fourier_coeffs(&pat, l_x, None, 2, 0).unwrap();
        let m = build_layer_matrix(&g, &f, OperatorKind::Te2d).unwrap();
        // off-diagonal (m=1, m'=0) = k0^2 eps_1 = (1-4)/pi
        let i = g.flat(1, 0);
        let j = g.flat(0, 0);
        let want = c64((1.0 - 4.0) / std::f64::consts::PI, 0.0);
        assert!((m.get(i, j) - want).norm() < 1e-14);
        // diagonal keeps the propagation term
        let want_d = f.eps.get(0, 0) - c64(g.kx(1) * g.kx(1), 0.0);
        assert!((m.get(i, i) - want_d).norm() < 1e-14);
    }

    #[test]
    fn uniform_modes_match_homogeneous_closed_form() {
        let g = grid_45deg(1);
        let l_x = TAU / g.kappa_x;
        let f = fourier_coeffs(&LayerPattern::Uniform { eps: c64(4.0, 0.0) }, l_x, None, 1, 0).unwrap();
        let m = build_layer_matrix(&g, &f, OperatorKind::Te2d).unwrap();
        let basis = solve_modes(&m, OperatorKind::Te2d).unwrap();
        let homo = homogeneous_modes(&g, c64(4.0, 0.0), OperatorKind::Te2d);
        // kz multiset: {sqrt(3.5), 2, sqrt(3.5)}
        let mut got: Vec<f64> = basis.kz.iter().map(|z| z.re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<f64> = homo.kz.iter().map(|z| z.re).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((want[0] - 3.5f64.sqrt()).abs() < 1e-14);
        assert!((want[2] - 2.0).abs() < 1e-14);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(basis.kz.iter().all(|z| z.im.abs() < 1e-12));
        // eigenvectors of the diagonal operator are (up to phase) the
        // harmonic basis: each column overlaps one delta vector fully
        for p in 0..3 {
            let mut best = 0.0f64;
            for i in 0..3 {
                best = best.max(basis.vectors.get(i, p).norm());
            }
            assert!((best - 1.0).abs() < 1e-10, "mode {p} not a delta");
        }
    }

    #[test]
    fn tm_uniform_has_same_eigenvalues_as_te() {
        let g = grid_45deg(2);
        let l_x = TAU / g.kappa_x;
        let f = fourier_coeffs(&LayerPattern::Uniform { eps: c64(2.0, -0.3) }, l_x, None, 2, 0).unwrap();
        let mte = build_layer_matrix(&g, &f, OperatorKind::Te2d).unwrap();
        let mtm = build_layer_matrix(&g, &f, OperatorKind::Tm2d).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert!((mte.get(i, j) - mtm.get(i, j)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn vector_uniform_operator_duplicates_scalar_spectrum() {
        let kx = std::f64::consts::FRAC_1_SQRT_2;
        let stack = MaskStack::new_3d(
            vec![LayerSpec {
                thickness: 1.0,
                pattern: LayerPattern::Uniform { eps: c64(4.0, 0.0) },
            }],
            TAU / kx,
            TAU / kx,
        )
        .unwrap();
        let src = PlaneWaveSource::vector(TAU, 45.0, 0.0, [C64::ONE, C64::ZERO]);
        let g = build_harmonics(&stack, &src, 1, 1).unwrap();
        let f = fourier_coeffs(
            &LayerPattern::Uniform { eps: c64(4.0, 0.0) },
            TAU / kx,
            Some(TAU / kx),
            1,
            1,
        )
        .unwrap();
        let m = build_layer_matrix(&g, &f, OperatorKind::Vector3d).unwrap();
        assert_eq!(m.nrows(), 2 * g.len());
        let basis = solve_modes(&m, OperatorKind::Vector3d).unwrap();
        let homo = homogeneous_modes(&g, c64(4.0, 0.0), OperatorKind::Vector3d);
        let mut got: Vec<f64> = basis.lambda.iter().map(|z| z.re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<f64> = homo.lambda.iter().map(|z| z.re).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn patterned_vector_operator_has_small_eig_residual() {
        let stack = MaskStack::new_3d(
            vec![LayerSpec {
                thickness: 1.0,
                pattern: LayerPattern::TanhPad {
                    eps_background: c64(0.9, -0.06),
                    eps_hole: C64::ONE,
                    a: 2.5,
                    b: Some(2.5),
                    d: 0.2,
                },
            }],
            10.0,
            10.0,
        )
        .unwrap();
        let src = PlaneWaveSource::vector(10.0 / 7.0, 0.0, 0.0, [C64::ONE, C64::ZERO]);
        let g = build_harmonics(&stack, &src, 2, 2).unwrap();
        let f = fourier_coeffs(&stack.layers[0].pattern, 10.0, Some(10.0), 2, 2).unwrap();
        let m = build_layer_matrix(&g, &f, OperatorKind::Vector3d).unwrap();
        let basis = solve_modes(&m, OperatorKind::Vector3d).unwrap();
        assert!(
            basis.eig_residual <= 1e-12 * m.frobenius_norm(),
            "residual {} vs {}",
            basis.eig_residual,
            1e-12 * m.frobenius_norm()
        );
        for (p, kz) in basis.kz.iter().enumerate() {
            assert!(kz.im <= 1e-14, "mode {p} grows in its travel direction");
            let back = kz * kz;
            assert!((back - basis.lambda[p]).norm() <= 1e-12 * basis.lambda[p].norm().max(1.0));
        }
    }

    #[test]
    fn lossless_te_spectrum_is_real() {
        let g = grid_45deg(3);
        let l_x = TAU / g.kappa_x;
        let pat = LayerPattern::HoleInX {
            eps_background: c64(6.0, 0.0),
            eps_hole: c64(2.0, 0.0),
            center: 0.3,
            width: l_x / 3.0,
        };
        let f = fourier_coeffs(&pat, l_x, None, 3, 0).unwrap();
        let m = build_layer_matrix(&g, &f, OperatorKind::Te2d).unwrap();
        let basis = solve_modes(&m, OperatorKind::Te2d).unwrap();
        let scale = m.frobenius_norm();
        for l in &basis.lambda {
            assert!(l.im.abs() <= 1e-10 * scale, "lambda {l:?}");
        }
    }

    proptest! {
        #[test]
        fn branch_sqrt_squares_back_and_decays(re in -10.0f64..10.0, im in -10.0f64..0.0) {
            let z = c64(re, im);
            let s = branch_sqrt(z);
            prop_assert!(s.im <= 0.0);
            if s.im == 0.0 {
                prop_assert!(s.re >= 0.0);
            }
            prop_assert!((s * s - z).norm() <= 1e-14 * z.norm().max(1.0));
        }
    }
}
