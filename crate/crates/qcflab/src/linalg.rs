//! Dense and banded kernels: Thomas solve, banded-aware LU and Cholesky,
//! symmetric (generalized) eigensolvers, matrix p-norms, power iteration and
//! bisection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent of an ℓ^p norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum P {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl P {
    pub const ALL: [P; 3] = [P::One, P::Two, P::Inf];

    pub fn label(self) -> &'static str {
        match self {
            P::One => "1",
            P::Two => "2",
            P::Inf => "inf",
        }
    }

    pub fn parse(s: &str) -> Option<P> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Some(P::One),
            "2" => Some(P::Two),
            "inf" | "infinity" | "∞" => Some(P::Inf),
            _ => None,
        }
    }
}

const PIVOT_FLOOR: f64 = 1e-300;

/// Solves a symmetric tridiagonal system (Thomas algorithm).
pub fn solve_tridiagonal(diag: &[f64], off: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    if n > 0 && off.len() + 1 != n {
        return Err(Error::DimensionMismatch { expected: n - 1, got: off.len() });
    }
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut prev_c = 0.0;
    let mut prev_x = 0.0;
    for i in 0..n {
        let sub = if i > 0 { off[i - 1] } else { 0.0 };
        let m = diag[i] - sub * prev_c;
        if m == 0.0 || !m.is_finite() {
            return Err(Error::ZeroPivot(i));
        }
        c[i] = if i + 1 < n { off[i] / m } else { 0.0 };
        x[i] = (b[i] - sub * prev_x) / m;
        prev_c = c[i];
        prev_x = x[i];
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Lower and upper bandwidth of a square matrix.
pub fn bandwidth(m: &DMatrix<f64>) -> (usize, usize) {
    let (mut kl, mut ku) = (0, 0);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
    }
    (kl, ku)
}

/// LU factorization with partial pivoting, PA = LU.
///
/// Row interchanges are applied to the trailing columns only (LAPACK `gbtrf`
/// convention), so banded matrices stay banded and factor in O(n·kl·(kl+ku)).
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    kl: usize,
    ku: usize,
    a: Vec<f64>, // row-major
    piv: Vec<usize>,
}

impl Lu {
    pub fn factor(m: &DMatrix<f64>) -> Result<Lu> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
        }
        let (kl, ku) = bandwidth(m);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = m[(i, j)];
            }
        }
        let mut piv = vec![0; n];
        let uw = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..=last {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best >= PIVOT_FLOOR) {
                return Err(Error::Singular { col: k, pivot: best });
            }
            piv[k] = p;
            let jend = (k + uw).min(n - 1);
            if p != k {
                for j in k..=jend {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let pivot = a[k * n + k];
            for i in k + 1..=last {
                let l = a[i * n + k] / pivot;
                a[i * n + k] = l;
                if l != 0.0 {
                    let (top, bot) = a.split_at_mut(i * n);
                    let rk = &top[k * n + k + 1..k * n + jend + 1];
                    let ri = &mut bot[k + 1..jend + 1];
                    for (x, y) in ri.iter_mut().zip(rk) {
                        *x -= l * y;
                    }
                }
            }
        }
        Ok(Lu { n, kl, ku, a, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let a = &self.a;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= a[i * n + k] * bk;
                }
            }
        }
        let uw = self.kl + self.ku;
        for i in (0..n).rev() {
            let jend = (i + uw).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=jend {
                s -= a[i * n + j] * b[j];
            }
            b[i] = s / a[i * n + i];
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        Ok(x)
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.nrows() });
        }
        let mut x = b.clone();
        let n = self.n;
        x.as_mut_slice().chunks_mut(n).for_each(|col| self.solve_in_place(col));
        Ok(x)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_matrix(&DMatrix::identity(self.n, self.n)).expect("square")
    }
}

/// Solves Mx = b by LU with partial pivoting.
pub fn lu_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Lu::factor(m)?.solve(b)
}

/// Lower Cholesky factor L with B = L Lᵀ (bandwidth-aware).
pub fn cholesky(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.ncols() });
    }
    let (kl, _) = bandwidth(b);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let j0 = j.saturating_sub(kl);
        let mut d = b[(j, j)];
        for k in j0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::BNotSpd);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..(j + kl + 1).min(n) {
            let mut s = b[(i, j)];
            for k in i.saturating_sub(kl).max(j0)..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves L X = B in place for lower-triangular L with lower bandwidth `kl`.
fn lower_solve_in_place(l: &DMatrix<f64>, kl: usize, x: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..x.ncols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in i.saturating_sub(kl)..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Solves Lᵀ X = B in place.
fn upper_t_solve_in_place(l: &DMatrix<f64>, kl: usize, x: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..x.ncols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..(i + kl + 1).min(n) {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
    }
    let scale = m.amax();
    let mut asym = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    check_symmetric(m)?;
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::try_new(symmetrized(m), f64::EPSILON, 0)
        .ok_or(Error::NoConvergence(0))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        eigenvectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let mut v: Vec<f64> = symmetrized(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// R⁻ᵀ A R⁻¹ for B = RᵀR, together with the Cholesky factor L = Rᵀ.
fn reduce_generalized(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, usize)> {
    check_symmetric(a)?;
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.nrows() });
    }
    check_symmetric(b).map_err(|_| Error::BNotSpd)?;
    let l = cholesky(b)?;
    let (kl, _) = bandwidth(&l);
    // C = L⁻¹ A L⁻ᵀ
    let mut x = a.clone();
    lower_solve_in_place(&l, kl, &mut x);
    let mut c = x.transpose();
    lower_solve_in_place(&l, kl, &mut c);
    Ok((symmetrized(&c), l, kl))
}

/// Generalized problem A v = λ B v; vectors satisfy vᵀBv = 1.
pub fn gen_sym_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let (c, l, kl) = reduce_generalized(a, b)?;
    let mut e = sym_eigen(&c)?;
    upper_t_solve_in_place(&l, kl, &mut e.eigenvectors);
    Ok(e)
}

/// Generalized eigenvalues only, ascending.
pub fn gen_sym_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (c, _, _) = reduce_generalized(a, b)?;
    sym_eigenvalues(&c)
}

/// Normalized (1, 1+10⁻³, 1+2·10⁻³, …).
pub fn start_vector(n: usize) -> DVector<f64> {
    let v = DVector::from_iterator(n, (0..n).map(|i| 1.0 + 1e-3 * i as f64));
    let nrm = v.norm();
    v / nrm
}

pub const PNORM_TOL: f64 = 1e-11;
pub const PNORM_MAX_ITER: usize = 50_000;

/// Largest singular value by power iteration on MᵀM.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let mut x = start_vector(m.ncols());
    let mut y = DVector::zeros(m.nrows());
    let mut z = DVector::zeros(m.ncols());
    let mut lam_old = 0.0;
    for _ in 0..PNORM_MAX_ITER {
        y.gemv(1.0, m, &x, 0.0);
        z.gemv_tr(1.0, m, &y, 0.0);
        let lam = x.dot(&z);
        let nz = z.norm();
        if nz == 0.0 {
            return Ok(0.0);
        }
        x.copy_from(&z);
        x /= nz;
        if (lam - lam_old).abs() <= PNORM_TOL * lam.abs() {
            // one more Rayleigh step at the converged vector
            y.gemv(1.0, m, &x, 0.0);
            return Ok(y.norm().max(lam.max(0.0).sqrt()));
        }
        lam_old = lam;
    }
    Err(Error::NoConvergence(PNORM_MAX_ITER))
}

/// Induced matrix p-norm.
pub fn matrix_pnorm(m: &DMatrix<f64>, p: P) -> Result<f64> {
    Ok(match p {
        P::One => m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max),
        P::Inf => {
            let mut rows = vec![0.0; m.nrows()];
            for c in m.column_iter() {
                for (r, x) in rows.iter_mut().zip(c.iter()) {
                    *r += x.abs();
                }
            }
            rows.into_iter().fold(0.0, f64::max)
        }
        P::Two => spectral_norm(m)?,
    })
}

/// 2-norm condition number with the inverse formed by LU.
pub fn cond2(m: &DMatrix<f64>) -> Result<f64> {
    let inv = Lu::factor(m)?.inverse();
    Ok(matrix_pnorm(m, P::Two)? * matrix_pnorm(&inv, P::Two)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    pub value: f64,
    pub converged: bool,
}

/// Power-iteration estimate of max|λ|.
///
/// Uses the geometric mean of the growth factor over blocks of two steps so
/// that ±λ pairs and real 2-cycles do not prevent stabilization. Converged when
/// the estimate changes by less than 1e−9 (relative) over 100 consecutive steps.
pub fn power_spectral_radius(m: &DMatrix<f64>, max_iter: usize) -> SpectralRadius {
    let n = m.nrows();
    if n == 0 {
        return SpectralRadius { value: 0.0, converged: true };
    }
    let mut x = start_vector(n);
    let mut y = DVector::zeros(n);
    let mut prev = f64::NAN;
    let mut stable = 0usize;
    let mut est = 0.0;
    for _ in 0..max_iter {
        y.gemv(1.0, m, &x, 0.0);
        let n1 = y.norm();
        if n1 == 0.0 {
            return SpectralRadius { value: 0.0, converged: false };
        }
        x.gemv(1.0 / n1, m, &y, 0.0);
        let n2 = x.norm();
        if n2 == 0.0 {
            return SpectralRadius { value: 0.0, converged: false };
        }
        x /= n2;
        // |M x| · |M (Mx/|Mx|)| is the two-step growth
        est = (n1 * n2).sqrt();
        if prev.is_finite() && (est - prev).abs() <= 1e-9 * est {
            stable += 2;
            if stable >= 100 {
                return SpectralRadius { value: est, converged: true };
            }
        } else {
            stable = 0;
        }
        prev = est;
    }
    SpectralRadius { value: est, converged: false }
}

/// Evaluates a polynomial with coefficients in descending degree.
pub fn polyval(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().fold(0.0, |acc, c| acc * x + c)
}

/// Root of `f` on `[a, b]` by bisection to an interval below `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange(a, b));
    }
    while (b - a).abs() >= tol {
        let mid = 0.5 * (a + b);
        if mid <= a.min(b) || mid >= a.max(b) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Real root of a polynomial (descending coefficients) on a sign-change bracket.
pub fn largest_real_root(coefficients: &[f64], bracket: (f64, f64)) -> Result<f64> {
    bisect(|x| polyval(coefficients, x), bracket.0, bracket.1, 1e-13)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap(n: usize, e2: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 * e2
            } else if i.abs_diff(j) == 1 {
                -e2
            } else {
                0.0
            }
        })
    }

    #[test]
    fn tridiagonal_identity_and_zero() {
        let b = [1.0, -2.0, 3.0];
        assert_eq!(solve_tridiagonal(&[1.0; 3], &[0.0; 2], &b).unwrap(), b.to_vec());
        assert_eq!(solve_tridiagonal(&[2.0; 3], &[-1.0; 2], &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn tridiagonal_matches_lu() {
        let l = lap(3, 4.0);
        let b = DVector::from_vec(vec![1.0, 0.5, -2.0]);
        let x = solve_tridiagonal(&[8.0; 3], &[-4.0; 2], b.as_slice()).unwrap();
        let y = lu_solve(&l, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - y[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn tridiagonal_zero_pivot() {
        assert_eq!(solve_tridiagonal(&[0.0, 1.0], &[1.0], &[1.0, 1.0]), Err(Error::ZeroPivot(0)));
    }

    #[test]
    fn lu_permutation() {
        let m = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = lu_solve(&m, &b).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 1.0, 2.0]);
    }

    #[test]
    fn lu_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1., 2., 2., 4.]);
        assert!(matches!(Lu::factor(&m), Err(Error::Singular { .. })));
    }

    #[test]
    fn lu_banded_pivoting() {
        // banded matrix that needs pivoting
        let n = 9;
        let m = DMatrix::from_fn(n, n, |i, j| match j as isize - i as isize {
            0 => 1e-3 * (i as f64 + 1.0),
            -2..=2 => 1.0 + (i * 7 + j * 3) as f64 % 5.0,
            _ => 0.0,
        });
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let x = lu_solve(&m, &b).unwrap();
        assert!((&m * &x - &b).amax() < 1e-12);
    }

    #[test]
    fn eigen_diag_and_zero() {
        let e = sym_eigen(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]))).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 2.0, 3.0]);
        let z = sym_eigen(&DMatrix::zeros(4, 4)).unwrap();
        assert!(z.eigenvalues.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn eigen_rejects_nonsymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1., 2., 0., 1.]);
        assert!(matches!(sym_eigen(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn gen_eigen_identity_and_same() {
        let a = lap(5, 1.0);
        let e = gen_sym_eigen(&a, &a).unwrap();
        assert!(e.eigenvalues.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        let e0 = sym_eigen(&a).unwrap();
        let e1 = gen_sym_eigen(&a, &DMatrix::identity(5, 5)).unwrap();
        assert!((e0.eigenvalues - e1.eigenvalues).amax() < 1e-12);
    }

    #[test]
    fn gen_eigen_b_normalized() {
        let a = DMatrix::from_fn(6, 6, |i, j| ((i + j) as f64).cos());
        let b = lap(6, 3.0);
        let e = gen_sym_eigen(&a, &b).unwrap();
        for c in 0..6 {
            let v = e.eigenvectors.column(c);
            assert!(((v.transpose() * &b * v)[(0, 0)] - 1.0).abs() < 1e-10);
            let r = &a * v - &b * v * e.eigenvalues[c];
            assert!(r.amax() < 1e-9);
        }
    }

    #[test]
    fn gen_eigen_b_not_spd() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(gen_sym_eigen(&DMatrix::identity(2, 2), &b).unwrap_err(), Error::BNotSpd);
    }

    #[test]
    fn pnorms_trivial() {
        let i = DMatrix::<f64>::identity(5, 5);
        for p in P::ALL {
            assert!((matrix_pnorm(&i, p).unwrap() - 1.0).abs() < 1e-14);
        }
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 2.0]));
        assert!((matrix_pnorm(&d, P::Two).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn cond2_trivial() {
        assert!((cond2(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0]));
        assert!((cond2(&d).unwrap() - 10.0).abs() < 1e-9);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!((cond2(&q).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_cases() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9]));
        let r = power_spectral_radius(&d, 100_000);
        assert!(r.converged && (r.value - 0.9).abs() < 1e-8);
        let nil = DMatrix::from_row_slice(2, 2, &[0., 1., 0., 0.]);
        let r = power_spectral_radius(&nil, 1000);
        assert!(!r.converged && r.value.abs() < 1e-12);
    }

    #[test]
    fn roots() {
        assert!((largest_real_root(&[1.0, 0.0, -4.0], (1.0, 3.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((largest_real_root(&[1.0, -1.0], (0.0, 2.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(largest_real_root(&[1.0, 0.0, 1.0], (-1.0, 1.0)), Err(Error::NoSignChange(..))));
    }
}
