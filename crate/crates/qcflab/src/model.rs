//! Parameters, the displacement space and its discrete Sobolev norms.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::linalg::P;

/// Interior displacements `u_j`, `j = -N+1..N-1`, stored at `j + N - 1`.
pub type Displacement = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub phi2_f: f64,
    pub phi2_2f: f64,
}

/// Validates the chain size, atomistic half-width and φ″_F > 0.
pub fn make_params(n: usize, k: usize, phi2_f: f64, phi2_2f: f64) -> Result<ModelParams> {
    if n < 4 {
        return Err(Error::Reject(format!("N = {n} < 4")));
    }
    if k < 1 || k > n - 2 {
        return Err(Error::Reject(format!("K = {k} outside 1..={}", n - 2)));
    }
    if !(phi2_f > 0.0) || !phi2_f.is_finite() {
        return Err(Error::Reject(format!("phi2_F = {phi2_f} must be > 0")));
    }
    if !phi2_2f.is_finite() {
        return Err(Error::Reject(format!("phi2_2F = {phi2_2f} is not finite")));
    }
    Ok(ModelParams { n, k, phi2_f, phi2_2f })
}

impl ModelParams {
    /// Parameters from (φ″_F, A_F) with φ″_2F = (A_F − φ″_F)/4.
    pub fn with_af(n: usize, k: usize, phi2_f: f64, a_f: f64) -> Result<ModelParams> {
        make_params(n, k, phi2_f, (a_f - phi2_f) / 4.0)
    }

    pub fn eps(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn a_f(&self) -> f64 {
        self.phi2_f + 4.0 * self.phi2_2f
    }

    /// Number of interior degrees of freedom, 2N − 1.
    pub fn dim(&self) -> usize {
        2 * self.n - 1
    }

    /// Number of strain entries, 2N.
    pub fn strain_dim(&self) -> usize {
        2 * self.n
    }

    /// Storage index of site `j`.
    pub fn idx(&self, j: isize) -> usize {
        (j + self.n as isize - 1) as usize
    }

    pub fn site(&self, i: usize) -> isize {
        i as isize - self.n as isize + 1
    }

    pub fn check(&self, v: &Displacement) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }
}

/// A discrete Sobolev norm U^{k,p}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormKind {
    pub k: u8,
    pub p: P,
}

impl NormKind {
    pub const fn new(k: u8, p: P) -> NormKind {
        assert!(k <= 2);
        NormKind { k, p }
    }

    pub fn all() -> Vec<NormKind> {
        (0..=2).flat_map(|k| P::ALL.into_iter().map(move |p| NormKind { k, p })).collect()
    }

    /// Parses `"k,p"`, e.g. `"1,inf"`.
    pub fn parse(s: &str) -> Result<NormKind> {
        let bad = || Error::Usage(format!("invalid norm kind '{s}', expected K,P with K in 0..=2 and P in 1,2,inf"));
        let (k, p) = s.split_once(',').ok_or_else(bad)?;
        let k: u8 = k.trim().parse().map_err(|_| bad())?;
        if k > 2 {
            return Err(bad());
        }
        Ok(NormKind { k, p: P::parse(p).ok_or_else(bad)? })
    }

    /// Column suffix, e.g. `1_inf`.
    pub fn tag(&self) -> String {
        format!("{}_{}", self.k, self.p.label())
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.k, self.p.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifferences {
    /// u′_ℓ, ℓ = −N+1..N.
    pub strain: DVector<f64>,
    /// u″_ℓ, ℓ = −N+1..N−1.
    pub curvature: DVector<f64>,
    /// u″_ℓ, ℓ = −N..N, using the ghost zeros u_{±(N+1)} = 0.
    pub extended_curvature: DVector<f64>,
}

/// Strain of a displacement (boundary zeros included).
pub fn strain(params: &ModelParams, v: &Displacement) -> DVector<f64> {
    let n = params.dim();
    let inv = params.n as f64;
    DVector::from_fn(n + 1, |l, _| {
        let hi = if l < n { v[l] } else { 0.0 };
        let lo = if l > 0 { v[l - 1] } else { 0.0 };
        inv * (hi - lo)
    })
}

pub fn finite_differences(params: &ModelParams, v: &Displacement) -> Result<FiniteDifferences> {
    params.check(v)?;
    let n = params.dim();
    let e2 = (params.n * params.n) as f64;
    let at = |i: isize| if i >= 0 && (i as usize) < n { v[i as usize] } else { 0.0 };
    let curv = |i: isize| e2 * (at(i + 1) - 2.0 * at(i) + at(i - 1));
    Ok(FiniteDifferences {
        strain: strain(params, v),
        curvature: DVector::from_fn(n, |i, _| curv(i as isize)),
        extended_curvature: DVector::from_fn(n + 2, |i, _| curv(i as isize - 1)),
    })
}

/// ε-weighted ℓ^p norm; the ∞-norm carries no weight.
pub fn lp_eps(x: &[f64], p: P, eps: f64) -> f64 {
    match p {
        P::One => eps * x.iter().map(|v| v.abs()).sum::<f64>(),
        P::Two => (eps * x.iter().map(|v| v * v).sum::<f64>()).sqrt(),
        P::Inf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

pub fn vector_norm(params: &ModelParams, v: &Displacement, kind: NormKind) -> f64 {
    let eps = params.eps();
    match kind.k {
        0 => lp_eps(v.as_slice(), kind.p, eps),
        1 => lp_eps(strain(params, v).as_slice(), kind.p, eps),
        _ => {
            let fd = finite_differences(params, v).expect("conforming displacement");
            lp_eps(fd.curvature.as_slice(), kind.p, eps)
        }
    }
}

pub fn inner_product(params: &ModelParams, v: &Displacement, w: &Displacement) -> Result<f64> {
    params.check(v)?;
    params.check(w)?;
    Ok(params.eps() * v.dot(w))
}

/// sqrt(⟨Mv, v⟩) in the ε-weighted inner product.
pub fn weighted_norm(params: &ModelParams, v: &Displacement, m: &DMatrix<f64>) -> Result<f64> {
    params.check(v)?;
    if m.shape() != (params.dim(), params.dim()) {
        return Err(Error::DimensionMismatch { expected: params.dim(), got: m.nrows() });
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let q = inner_product(params, &(m * v), v)?;
    if !(q > 0.0) {
        return Err(Error::NotSpd);
    }
    Ok(q.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    // N = 2 is below the model minimum but the views are well defined.
    fn p2() -> ModelParams {
        ModelParams { n: 2, k: 1, phi2_f: 1.0, phi2_2f: 0.0 }
    }

    #[test]
    fn params_examples() {
        let p = make_params(4, 1, 1.0, -0.125).unwrap();
        assert_eq!(p.eps(), 0.25);
        assert_eq!(p.a_f(), 0.5);
        assert!(make_params(4, 3, 1.0, -0.125).is_err());
        assert!(make_params(3, 1, 1.0, -0.125).is_err());
        assert!(make_params(8, 0, 1.0, -0.125).is_err());
        assert!(make_params(8, 2, 0.0, -0.125).is_err());
        assert_eq!(make_params(200, 8, 1.0, -0.125).unwrap().a_f(), 0.5);
    }

    #[test]
    fn differences_small_chain() {
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let fd = finite_differences(&p2(), &v).unwrap();
        assert_eq!(fd.strain.as_slice(), &[0.0, 2.0, -2.0, 0.0]);
        assert_eq!(fd.curvature.as_slice(), &[4.0, -8.0, 4.0]);
        assert_eq!(fd.extended_curvature.as_slice(), &[0.0, 4.0, -8.0, 4.0, 0.0]);
        let z = finite_differences(&p2(), &DVector::zeros(3)).unwrap();
        assert!(z.strain.iter().chain(z.curvature.iter()).all(|&x| x == 0.0));
        assert!(finite_differences(&p2(), &DVector::zeros(4)).is_err());
    }

    #[test]
    fn norms_small_chain() {
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(vector_norm(&p2(), &v, NormKind::new(1, P::Inf)), 2.0);
        assert!((vector_norm(&p2(), &v, NormKind::new(1, P::Two)) - 2.0).abs() < 1e-15);
        assert!((vector_norm(&p2(), &v, NormKind::new(0, P::Two)) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn inner_products() {
        let p = p2();
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(inner_product(&p, &v, &v).unwrap(), 0.5);
        let a = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        assert_eq!(inner_product(&p, &a, &b).unwrap(), 0.5);
        let e0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert_eq!(inner_product(&p, &e0, &e2).unwrap(), 0.0);
    }

    #[test]
    fn weighted_norm_identity_and_spd() {
        let p = p2();
        let v = DVector::from_vec(vec![0.3, 1.0, -0.2]);
        let i = DMatrix::identity(3, 3);
        let a = weighted_norm(&p, &v, &i).unwrap();
        assert!((a - vector_norm(&p, &v, NormKind::new(0, P::Two))).abs() < 1e-15);
        assert_eq!(weighted_norm(&p, &DVector::zeros(3), &i).unwrap(), 0.0);
        assert_eq!(weighted_norm(&p, &v, &(-i)), Err(Error::NotSpd));
    }

    #[test]
    fn norm_kind_parse() {
        assert_eq!(NormKind::parse("1,inf").unwrap(), NormKind::new(1, P::Inf));
        assert_eq!(NormKind::parse("2, 1").unwrap(), NormKind::new(2, P::One));
        assert!(NormKind::parse("3,1").is_err());
        assert!(NormKind::parse("1;2").is_err());
        assert_eq!(NormKind::all().len(), 9);
    }
}
