//! Closed-form spectra, the QCF/QNL similarity, eigenbasis conditioning,
//! stability constants and the critical strain.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelParams;
use crate::operators::{assemble, OperatorKind};

/// Orthonormal Dirichlet sine basis of the discrete Laplacian.
#[derive(Debug, Clone)]
pub struct LaplacianFactors {
    /// λ_j = 4ε⁻² sin²(jπ/(4N)), j = 1..2N−1.
    pub eigenvalues: Vec<f64>,
    /// Symmetric orthogonal matrix, column j−1 is the j-th sine vector.
    pub basis: DMatrix<f64>,
}

pub fn laplacian_spectral_factors(params: &ModelParams) -> LaplacianFactors {
    let n = params.dim();
    let m = (n + 1) as f64;
    let e2 = (params.n * params.n) as f64;
    let eigenvalues = (1..=n).map(|j| 4.0 * e2 * (j as f64 * PI / (2.0 * m)).sin().powi(2)).collect();
    let s = (2.0 / m).sqrt();
    let basis = DMatrix::from_fn(n, n, |i, j| s * (((i + 1) * (j + 1)) as f64 * PI / m).sin());
    LaplacianFactors { eigenvalues, basis }
}

impl LaplacianFactors {
    fn apply_power(&self, v: &DVector<f64>, power: f64) -> DVector<f64> {
        let mut c = self.basis.tr_mul(v);
        for (x, l) in c.iter_mut().zip(&self.eigenvalues) {
            *x *= l.powf(power);
        }
        &self.basis * c
    }

    /// (L¹)^{1/2} v
    pub fn apply_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_power(v, 0.5)
    }

    /// (L¹)^{−1/2} v
    pub fn apply_inv_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_power(v, -0.5)
    }

    /// Dense (L¹)^s.
    pub fn power_matrix(&self, power: f64) -> DMatrix<f64> {
        let mut scaled = self.basis.clone();
        for (j, l) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l.powf(power));
        }
        scaled * self.basis.transpose()
    }
}

/// Spectrum of L^qnl relative to L¹ (unordered).
pub fn qnl_u12_spectrum(params: &ModelParams) -> Vec<f64> {
    let af = params.a_f();
    let k = params.k;
    (1..=params.dim())
        .map(|j| {
            if j <= 2 * k + 1 {
                af - 4.0 * params.phi2_2f * (j as f64 * PI / (4.0 * k as f64 + 4.0)).sin().powi(2)
            } else {
                af
            }
        })
        .collect()
}

/// ‖L¹L^qcf − L^qnl L¹‖_F / ‖L^qnl L¹‖_F.
pub fn similarity_residual(params: &ModelParams) -> f64 {
    let l1 = assemble(params, OperatorKind::Laplacian).matrix;
    let qcf = assemble(params, OperatorKind::Qcf).matrix;
    let qnl = assemble(params, OperatorKind::Qnl).matrix;
    let rhs = &qnl * &l1;
    let den = rhs.norm();
    if den == 0.0 {
        return 0.0;
    }
    (&l1 * &qcf - rhs).norm() / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenbasisCond {
    pub cond_v: f64,
    pub cond_w: f64,
}

fn require_positive_af(params: &ModelParams) -> Result<()> {
    let af = params.a_f();
    if af == 0.0 {
        return Err(Error::Singular { col: 0, pivot: 0.0 });
    }
    if af < 0.0 {
        return Err(Error::UnstableParams(af));
    }
    Ok(())
}

/// Conditioning of the L^qcf eigenbasis V = (L¹)⁻¹Q (unit ℓ²_ε columns) and of
/// W = Q̃ᵀL¹ for the preconditioned problem.
pub fn qcf_eigenbasis_cond(params: &ModelParams) -> Result<EigenbasisCond> {
    require_positive_af(params)?;
    let qnl = assemble(params, OperatorKind::Qnl).matrix;
    let q = linalg::sym_eigen(&qnl)?.eigenvectors;
    let mut v = q.clone();
    let eps = params.eps();
    for c in 0..v.ncols() {
        let col = crate::operators::solve_laplacian(params, q.column(c).as_slice())?;
        let nrm = (eps * col.iter().map(|x| x * x).sum::<f64>()).sqrt();
        v.set_column(c, &(DVector::from_vec(col) / nrm));
    }
    let cond_v = linalg::cond2(&v)?;

    let f = laplacian_spectral_factors(params);
    let x = f.power_matrix(-0.5);
    let mut m = &x * &qnl * &x;
    m = (&m + m.transpose()) * 0.5;
    let qt = linalg::sym_eigen(&m)?.eigenvectors;
    let l1 = assemble(params, OperatorKind::Laplacian).matrix;
    let w = qt.transpose() * l1;
    let cond_w = linalg::cond2(&w)?;
    Ok(EigenbasisCond { cond_v, cond_w })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StabilityKind {
    Atom,
    Qnl,
    Qce,
    QcfSym,
}

impl fmt::Display for StabilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StabilityKind::Atom => "ATOM",
            StabilityKind::Qnl => "QNL",
            StabilityKind::Qce => "QCE",
            StabilityKind::QcfSym => "QCF_SYM",
        })
    }
}

impl FromStr for StabilityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "atom" => Ok(StabilityKind::Atom),
            "qnl" => Ok(StabilityKind::Qnl),
            "qce" => Ok(StabilityKind::Qce),
            "qcf_sym" | "qcf" => Ok(StabilityKind::QcfSym),
            _ => Err(Error::InvalidKind(s.to_string())),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub kind: StabilityKind,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub phi2_F: f64,
    pub phi2_2F: f64,
    pub inf_u12: f64,
    /// Only defined for QCE with φ″_2F < 0.
    pub lambda_K: Option<f64>,
    pub nu_eps: f64,
}

/// Smallest generalized eigenvalue of (M, L¹).
pub fn inf_u12(params: &ModelParams, m: &DMatrix<f64>) -> Result<f64> {
    let l1 = assemble(params, OperatorKind::Laplacian).matrix;
    let sym = (m + m.transpose()) * 0.5;
    Ok(linalg::gen_sym_eigenvalues(&sym, &l1)?[0])
}

/// ν_ε = inf ‖u″‖²/‖u′‖² with the extended (ghost-zero) curvature.
pub fn nu_eps(params: &ModelParams) -> Result<f64> {
    let n = params.dim();
    let e2 = (params.n * params.n) as f64;
    // D₂ᵀD₂ with rows ℓ = −N..N is pentadiagonal
    let d2 = DMatrix::from_fn(n + 2, n, |r, c| match r as isize - 1 - c as isize {
        0 => -2.0 * e2,
        1 | -1 => e2,
        _ => 0.0,
    });
    // ε‖u″‖² over ε‖u′‖² = uᵀD₂ᵀD₂u over uᵀL¹u
    let a = d2.tr_mul(&d2);
    let b = assemble(params, OperatorKind::Laplacian).matrix;
    Ok(linalg::gen_sym_eigenvalues(&a, &b)?[0])
}

pub fn stability_constants(params: &ModelParams, kind: StabilityKind) -> Result<StabilityReport> {
    let op = match kind {
        StabilityKind::Atom => OperatorKind::Atom,
        StabilityKind::Qnl => OperatorKind::Qnl,
        StabilityKind::Qce => OperatorKind::Qce,
        StabilityKind::QcfSym => OperatorKind::Qcf,
    };
    let m = assemble(params, op).matrix;
    let inf = inf_u12(params, &m)?;
    let lambda_k = (kind == StabilityKind::Qce && params.phi2_2f < 0.0).then(|| (params.a_f() - inf) / -params.phi2_2f);
    Ok(StabilityReport {
        kind,
        n: params.n,
        k: params.k,
        phi2_F: params.phi2_f,
        phi2_2F: params.phi2_2f,
        inf_u12: inf,
        lambda_K: lambda_k,
        nu_eps: nu_eps(params)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaStar {
    pub z_hat: f64,
    pub lambda_hat: f64,
    pub lambda_star: f64,
    pub c: f64,
}

/// q(z) = 4z⁵ − 12z⁴ + 9z³ − 3z² − 4z + 2.
pub const INTERFACE_QUINTIC: [f64; 6] = [4.0, -12.0, 9.0, -3.0, -4.0, 2.0];

pub fn lambda_star() -> LambdaStar {
    let z = linalg::largest_real_root(&INTERFACE_QUINTIC, (2.0, 3.0)).expect("sign change on [2, 3]");
    let lambda_hat = z + 1.0 / z + 2.0;
    LambdaStar { z_hat: z, lambda_hat, lambda_star: lambda_hat - 4.0, c: 2.0 * z.ln() }
}

/// The interface block H̄₂ on strains ℓ = −K−1..K+2.
pub fn interface_matrix(k: usize) -> DMatrix<f64> {
    let n = 2 * k + 4;
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = 2.0;
    }
    for (i, d) in [(0, 4.5), (1, 3.0), (2, 1.5), (n - 3, 1.5), (n - 2, 3.0), (n - 1, 4.5)] {
        h[(i, i)] = d;
    }
    for i in 0..n - 1 {
        let o = if i < 2 || i >= n - 3 { 0.5 } else { 1.0 };
        h[(i, i + 1)] = o;
        h[(i + 1, i)] = o;
    }
    h
}

/// λ̂_K = max σ(H̄₂).
pub fn interface_eigen_direct(k: usize) -> f64 {
    let ev = linalg::sym_eigenvalues(&interface_matrix(k.max(1))).expect("symmetric");
    ev[ev.len() - 1]
}

/// Second derivative of a pair potential and its ground-state strain.
pub struct PotentialSpec {
    pub second_derivative: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub f0: f64,
}

impl PotentialSpec {
    /// Normalized Lennard-Jones φ(r) = r⁻¹² − 2r⁻⁶.
    pub fn lennard_jones() -> PotentialSpec {
        PotentialSpec { second_derivative: Box::new(|r: f64| 156.0 * r.powi(-14) - 84.0 * r.powi(-8)), f0: 1.0 }
    }

    pub fn a_f(&self, f: f64) -> f64 {
        (self.second_derivative)(f) + 4.0 * (self.second_derivative)(2.0 * f)
    }
}

pub const SCAN_STEP: f64 = 1e-3;

/// Smallest F > F₀ with A_F = 0: outward scan, then bisection.
pub fn critical_strain(potential: &PotentialSpec) -> Result<f64> {
    let f0 = potential.f0;
    let a0 = potential.a_f(f0);
    if !(a0 > 0.0) {
        return Err(Error::Reject(format!("A_F0 = {a0} is not positive")));
    }
    let limit = 10.0 * f0;
    let mut i = 1u64;
    let mut lo = f0;
    loop {
        let hi = f0 + i as f64 * SCAN_STEP;
        if hi > limit {
            return Err(Error::NoRoot(limit));
        }
        if potential.a_f(hi) <= 0.0 {
            return linalg::bisect(|f| potential.a_f(f), lo, hi, 1e-12);
        }
        lo = hi;
        i += 1;
    }
}
