//! Dense complex linear algebra used by the modal solvers.
//!
//! Everything here is double-precision and sequential: results must be
//! bitwise reproducible across runs, so the backing kernels are pinned to a
//! single worker regardless of `EUVWG_THREADS`. Matrices are column-major.
//!
//! The systems we factor are small by dense-solver standards (a few thousand
//! unknowns), dominated by one LU per diffraction problem and one
//! eigendecomposition per layer.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Shorthand complex constructor.
#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn ensure_sequential() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        // EUVWG_THREADS is an upper bound on workers. We always run the
        // kernels sequentially (1 <= any valid cap), which keeps reductions
        // in a fixed order and results bitwise stable.
        faer::set_global_parallelism(faer::Par::Seq);
    });
}

/// Worker-thread cap from `EUVWG_THREADS`. Defaults to all cores; values
/// below 1 or unparseable strings are rejected.
pub fn thread_cap() -> Result<usize> {
    match std::env::var("EUVWG_THREADS") {
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!(
                "EUVWG_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}

/// Dense column-major complex matrix.
#[derive(Clone, Debug)]
pub struct CMatrix {
    inner: Mat<C64>,
}

/// Dense complex vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CVector {
    pub data: Vec<C64>,
}

impl CVector {
    pub fn zeros(n: usize) -> Self {
        CVector {
            data: vec![C64::ZERO; n],
        }
    }

    pub fn from_vec(data: Vec<C64>) -> Self {
        CVector { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Conjugate-linear in `self`: sum conj(self_i) * other_i.
    pub fn conj_dot(&self, other: &CVector) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn sub(&self, other: &CVector) -> CVector {
        CVector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &CVector) -> CVector {
        CVector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scale(&self, s: C64) -> CVector {
        CVector {
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl CMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        ensure_sequential();
        CMatrix {
            inner: Mat::zeros(nrows, ncols),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, C64::ONE);
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        ensure_sequential();
        CMatrix {
            inner: Mat::from_fn(nrows, ncols, |i, j| f(i, j)),
        }
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.inner[(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.inner[(i, j)] = v;
    }

    #[inline]
    pub fn add_assign_at(&mut self, i: usize, j: usize, v: C64) {
        self.inner[(i, j)] += v;
    }

    pub fn is_finite(&self) -> bool {
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                let z = self.inner[(i, j)];
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return false;
                }
            }
        }
        true
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                s += self.inner[(i, j)].norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.ncols() != other.nrows() {
            return Err(Error::Shape(format!(
                "matmul: {}x{} * {}x{}",
                self.nrows(),
                self.ncols(),
                other.nrows(),
                other.ncols()
            )));
        }
        ensure_sequential();
        Ok(CMatrix {
            inner: &self.inner * &other.inner,
        })
    }

    pub fn matvec(&self, v: &CVector) -> Result<CVector> {
        if self.ncols() != v.len() {
            return Err(Error::Shape(format!(
                "matvec: {}x{} * {}",
                self.nrows(),
                self.ncols(),
                v.len()
            )));
        }
        let (nr, nc) = (self.nrows(), self.ncols());
        let mut out = vec![C64::ZERO; nr];
        // Column-major traversal: one pass over the matrix, fixed summation order.
        for j in 0..nc {
            let x = v.data[j];
            if x == C64::ZERO {
                continue;
            }
            let col = self.inner.col_as_slice(j);
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * x;
            }
        }
        Ok(CVector { data: out })
    }

    /// y = A^H x without materializing the adjoint.
    pub fn matvec_adjoint(&self, v: &CVector) -> Result<CVector> {
        if self.nrows() != v.len() {
            return Err(Error::Shape(format!(
                "matvec_adjoint: ({}x{})^H * {}",
                self.nrows(),
                self.ncols(),
                v.len()
            )));
        }
        let nc = self.ncols();
        let mut out = vec![C64::ZERO; nc];
        for (j, o) in out.iter_mut().enumerate() {
            let col = self.inner.col_as_slice(j);
            let mut acc = C64::ZERO;
            for (c, x) in col.iter().zip(&v.data) {
                acc += c.conj() * x;
            }
            *o = acc;
        }
        Ok(CVector { data: out })
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix {
            inner: Mat::from_fn(self.nrows(), self.ncols(), |i, j| self.inner[(i, j)] * s),
        }
    }

    pub fn sub(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.nrows() != other.nrows() || self.ncols() != other.ncols() {
            return Err(Error::Shape("sub: shape mismatch".into()));
        }
        Ok(CMatrix {
            inner: &self.inner - &other.inner,
        })
    }

    /// Conjugate transpose as a new matrix.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix {
            inner: Mat::from_fn(self.ncols(), self.nrows(), |i, j| self.inner[(j, i)].conj()),
        }
    }

    /// LU-factor the matrix (partial pivoting). The factorization borrows the
    /// matrix so solves can run iterative refinement against the original.
    pub fn lu(&self) -> Result<Lu<'_>> {
        if self.nrows() != self.ncols() {
            return Err(Error::Shape(format!(
                "lu: matrix must be square, got {}x{}",
                self.nrows(),
                self.ncols()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Numerical("lu: non-finite matrix entry".into()));
        }
        ensure_sequential();
        Ok(Lu {
            a: self,
            f: self.inner.partial_piv_lu(),
        })
    }

    /// Eigendecomposition of a general square matrix. Eigenvectors are
    /// returned as unit-norm columns; residuals `||Av - lambda v||_2` are
    /// reported per pair so callers can check them against tolerance.
    pub fn eig(&self) -> Result<Eigen> {
        let n = self.nrows();
        if n != self.ncols() {
            return Err(Error::Shape(format!(
                "eig: matrix must be square, got {}x{}",
                n,
                self.ncols()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Numerical("eig: non-finite matrix entry".into()));
        }
        if n == 0 {
            return Ok(Eigen {
                values: vec![],
                vectors: CMatrix::zeros(0, 0),
                residuals: vec![],
            });
        }
        ensure_sequential();
        let evd = self
            .inner
            .eigen()
            .map_err(|e| Error::Numerical(format!("eig: QR iteration failed: {e:?}")))?;
        let values: Vec<C64> = evd.S().column_vector().iter().copied().collect();
        let u = evd.U();
        let mut vectors = CMatrix::zeros(n, n);
        for p in 0..n {
            let mut nrm = 0.0;
            for i in 0..n {
                nrm += u[(i, p)].norm_sqr();
            }
            let nrm = nrm.sqrt();
            if nrm == 0.0 {
                return Err(Error::Numerical(format!("eig: zero eigenvector {p}")));
            }
            for i in 0..n {
                vectors.set(i, p, u[(i, p)] / nrm);
            }
        }
        let mut residuals = Vec::with_capacity(n);
        for p in 0..n {
            let mut r2 = 0.0;
            for i in 0..n {
                let mut av = C64::ZERO;
                for k in 0..n {
                    av += self.inner[(i, k)] * vectors.get(k, p);
                }
                r2 += (av - values[p] * vectors.get(i, p)).norm_sqr();
            }
            residuals.push(r2.sqrt());
        }
        Ok(Eigen {
            values,
            vectors,
            residuals,
        })
    }
}

/// Eigendecomposition result. `vectors` holds unit-norm eigenvector columns
/// in the same order as `values`.
pub struct Eigen {
    pub values: Vec<C64>,
    pub vectors: CMatrix,
    pub residuals: Vec<f64>,
}

impl Eigen {
    /// Largest residual relative to tol * ||M||_F, for gate checks.
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// LU factorization with partial pivoting, borrowing the factored matrix.
pub struct Lu<'a> {
    a: &'a CMatrix,
    f: faer::linalg::solvers::PartialPivLu<C64>,
}

impl Lu<'_> {
    /// Solve A x = b with one pass of iterative refinement in working
    /// precision. Singularity shows up as a non-finite or non-improving
    /// solution and is reported as an error.
    pub fn solve(&self, b: &CVector) -> Result<CVector> {
        let n = self.a.nrows();
        if b.len() != n {
            return Err(Error::Shape(format!("lu solve: rhs len {} != {n}", b.len())));
        }
        if n == 0 {
            return Ok(CVector::zeros(0));
        }
        let bm = Mat::from_fn(n, 1, |i, _| b.data[i]);
        let xm = self.f.solve(&bm);
        let mut x = CVector {
            data: (0..n).map(|i| xm[(i, 0)]).collect(),
        };
        if !x.is_finite() {
            return Err(Error::Numerical(
                "lu solve: singular or extremely ill-conditioned system".into(),
            ));
        }
        let bnorm = b.norm2();
        if bnorm == 0.0 {
            return Ok(CVector::zeros(n));
        }
        // Refinement contracts while cond(A) stays well below 1/eps; two
        // rounds put the residual at the round-off floor for our systems.
        for _ in 0..2 {
            let r = b.sub(&self.a.matvec(&x)?);
            let rnorm = r.norm2();
            if rnorm <= 1e-15 * bnorm {
                break;
            }
            let rm = Mat::from_fn(n, 1, |i, _| r.data[i]);
            let dm = self.f.solve(&rm);
            for i in 0..n {
                x.data[i] += dm[(i, 0)];
            }
            if !x.is_finite() {
                return Err(Error::Numerical(
                    "lu solve: refinement diverged (singular system)".into(),
                ));
            }
        }
        Ok(x)
    }
}

/// Convolution (Toeplitz) matrix from Fourier coefficients:
/// `T[i, j] = coeff(index(i) - index(j))` where `index` maps a row to its
/// 2-D harmonic order. Truncation follows the caller's index map; the
/// coefficient table must cover the doubled order range.
pub fn convolution_matrix(
    n: usize,
    index: impl Fn(usize) -> (i64, i64),
    coeff: impl Fn(i64, i64) -> C64,
) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| {
        let (mi, ni) = index(i);
        let (mj, nj) = index(j);
        coeff(mi - mj, ni - nj)
    })
}

/// 1-D Toeplitz builder over orders `-n_max..=n_max`. `coeffs[k + 2*n_max]`
/// holds the coefficient of order `k`, `k` in `-2*n_max..=2*n_max`.
/// Power-iteration estimate of the 2-norm condition number, deterministic
/// from a fixed start vector. The largest singular value comes from
/// iterating A^H A, the smallest from iterating (A A^H)^{-1} through the LU
/// factors, so the cost is two factorizations plus `iters` matvec pairs.
/// Accuracy is a few percent on spectra with separated extremes, which is
/// all the residual-to-error bound needs.
pub fn cond2_estimate(m: &CMatrix, iters: usize) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "cond2: matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let start = CVector::from_vec(
        (0..n)
            .map(|j| c64((j as f64 + 1.0).sin(), (2.0 * j as f64 + 0.5).cos()))
            .collect(),
    );
    let normalize = |v: &CVector| -> Result<CVector> {
        let norm = v.norm2();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical("cond2: iteration vector degenerated".into()));
        }
        Ok(v.scale(c64(1.0 / norm, 0.0)))
    };
    let mut v = normalize(&start)?;
    let mut sigma_max = 0.0;
    for _ in 0..iters {
        let w = m.matvec_adjoint(&m.matvec(&v)?)?;
        sigma_max = w.norm2().sqrt();
        v = normalize(&w)?;
    }
    let lu = m.lu()?;
    let adj = m.adjoint();
    let lu_adj = adj.lu()?;
    let mut u = normalize(&start)?;
    let mut inv_sigma_min = 0.0;
    for _ in 0..iters {
        let w = lu_adj.solve(&lu.solve(&u)?)?;
        inv_sigma_min = w.norm2().sqrt();
        u = normalize(&w)?;
    }
    Ok(sigma_max * inv_sigma_min)
}

pub fn toeplitz_1d(coeffs: &[C64], n_max: usize) -> Result<CMatrix> {
    let need = 4 * n_max + 1;
    if coeffs.len() != need {
        return Err(Error::Shape(format!(
            "toeplitz_1d: need {need} coefficients for n_max={n_max}, got {}",
            coeffs.len()
        )));
    }
    let n = 2 * n_max + 1;
    Ok(convolution_matrix(
        n,
        |i| (i as i64 - n_max as i64, 0),
        |dm, _| coeffs[(dm + 2 * n_max as i64) as usize],
    ))
}
