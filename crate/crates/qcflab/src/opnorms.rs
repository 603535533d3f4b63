//! Iteration matrices and their U^{k,p} operator norms.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iteration::{fmt_f64, io_err, step_size, PreconditionerKind, StepRule};
use crate::linalg::{self, matrix_pnorm, Lu};
use crate::model::{ModelParams, NormKind, P};
use crate::operators::{assemble, conjugate_matrix, conjugate_strain_operator, solve_laplacian, ConjugateKind, OperatorKind};
use crate::spectral::laplacian_spectral_factors;

/// G = I − αP⁻¹L^qcf together with its provenance.
#[derive(Debug, Clone)]
pub struct IterationMatrix {
    pub g: DMatrix<f64>,
    /// `None` for a matrix of unknown origin.
    pub precond: Option<PreconditionerKind>,
    pub alpha: f64,
}

impl IterationMatrix {
    pub fn raw(g: DMatrix<f64>) -> IterationMatrix {
        IterationMatrix { g, precond: None, alpha: f64::NAN }
    }
}

/// Product of a sparse (banded) matrix with a dense one.
fn sparse_mul(a: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), x.ncols());
    let mut nz: Vec<Vec<(usize, f64)>> = vec![Vec::new(); a.nrows()];
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != 0.0 {
                nz[i].push((j, v));
            }
        }
    }
    for c in 0..x.ncols() {
        let xc = x.column(c);
        for (i, row) in nz.iter().enumerate() {
            out[(i, c)] = row.iter().map(|&(j, v)| v * xc[j]).sum();
        }
    }
    out
}

/// (L¹)⁻¹ X, columnwise tridiagonal solves.
fn inv_lap_mul(params: &ModelParams, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = x.clone();
    let n = x.nrows();
    for (c, col) in out.as_mut_slice().chunks_mut(n).enumerate() {
        col.copy_from_slice(&solve_laplacian(params, x.column(c).as_slice())?);
    }
    Ok(out)
}

pub fn iteration_matrix(params: &ModelParams, precond: PreconditionerKind, alpha: f64) -> Result<IterationMatrix> {
    let n = params.dim();
    let l = assemble(params, OperatorKind::Qcf).matrix;
    let id = DMatrix::<f64>::identity(n, n);
    let g = if alpha == 0.0 {
        id
    } else {
        match precond {
            PreconditionerKind::Identity => id - l * alpha,
            PreconditionerKind::Qcl => {
                let af = params.a_f();
                if af == 0.0 {
                    return Err(Error::SingularPreconditioner);
                }
                id - inv_lap_mul(params, &l)? * (alpha / af)
            }
            PreconditionerKind::Qce => {
                let lu = Lu::factor(&assemble(params, OperatorKind::Qce).matrix).map_err(|_| Error::SingularPreconditioner)?;
                id - lu.solve_matrix(&l)? * alpha
            }
        }
    };
    Ok(IterationMatrix { g, precond: Some(precond), alpha })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    MatrixPnorm,
    ConjugateBracket,
    GenEig,
    SimilarityTransform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpNormResult {
    pub value: f64,
    pub bracket_low: f64,
    pub bracket_high: f64,
    pub method: Method,
    pub kind: NormKind,
}

impl OpNormResult {
    fn exact(value: f64, method: Method, kind: NormKind) -> Self {
        OpNormResult { value, bracket_low: value, bracket_high: value, method, kind }
    }

    fn conjugate(m_hat: f64, kind: NormKind) -> Self {
        OpNormResult { value: m_hat, bracket_low: 0.5 * m_hat, bracket_high: m_hat, method: Method::ConjugateBracket, kind }
    }

    pub fn contains(&self, x: f64, rel_slack: f64) -> bool {
        let s = rel_slack * self.bracket_high.abs().max(1.0);
        x >= self.bracket_low - s && x <= self.bracket_high + s
    }
}

/// L¹ G (L¹)⁻¹, formed with solves.
pub fn laplacian_similarity(params: &ModelParams, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l1 = assemble(params, OperatorKind::Laplacian).matrix;
    let a = sparse_mul(&l1, g);
    // (A L⁻¹)ᵀ = L⁻¹ Aᵀ
    Ok(inv_lap_mul(params, &a.transpose())?.transpose())
}

/// (L¹)⁻¹ from its Green's function ε²·min(i,c)(2N − max(i,c))/(2N), 1-based.
pub fn laplacian_inverse(params: &ModelParams) -> DMatrix<f64> {
    let n = params.dim();
    let (m1, e2) = (2.0 * params.n as f64, params.eps() * params.eps());
    DMatrix::from_fn(n, n, |a, b| {
        let (i, c) = ((a.min(b) + 1) as f64, (a.max(b) + 1) as f64);
        e2 * (i * (m1 - c) / m1)
    })
}

/// L¹ G^qcl (L¹)⁻¹ = (1 − α)I − (α/A_F)·Δ(L¹)⁻¹ with Δ = L^qcf − A_F L¹,
/// which vanishes outside the atomistic rows. Avoids the O(ε⁻²) cancellation
/// of the generic similarity.
fn qcl_laplacian_similarity(params: &ModelParams, alpha: f64) -> DMatrix<f64> {
    let n = params.dim();
    let af = params.a_f();
    let l = assemble(params, OperatorKind::Qcf).matrix;
    let l1 = assemble(params, OperatorKind::Laplacian).matrix;
    let mut delta = DMatrix::zeros(n, n);
    let k = params.k as isize;
    for j in -k..=k {
        let r = params.idx(j);
        for c in r.saturating_sub(2)..(r + 3).min(n) {
            delta[(r, c)] = l[(r, c)] - af * l1[(r, c)];
        }
    }
    let mut m = sparse_mul(&delta, &laplacian_inverse(params)) * (-alpha / af);
    for i in 0..n {
        m[(i, i)] += 1.0 - alpha;
    }
    m
}

/// Rᵀ G R⁻ᵀ with L¹ = R Rᵀ: its 2-norm squared is max σ(GᵀL¹G, L¹).
fn cholesky_similarity(params: &ModelParams, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l1 = assemble(params, OperatorKind::Laplacian).matrix;
    let r = linalg::cholesky(&l1)?;
    let n = g.nrows();
    let m = sparse_mul(&r.transpose(), g);
    // (M R⁻ᵀ)ᵀ = R⁻¹ Mᵀ, R lower bidiagonal
    let mut x = m.transpose();
    for c in 0..n {
        for i in 0..n {
            let mut s = x[(i, c)];
            if i > 0 {
                s -= r[(i, i - 1)] * x[(i - 1, c)];
            }
            x[(i, c)] = s / r[(i, i)];
        }
    }
    Ok(x.transpose())
}

/// Strain-space conjugate Ĝ of an iteration matrix.
///
/// QCL uses the variational representation of (L¹)⁻¹L^qcf; QCE and identity
/// preconditioning use D G D⁺ P plus the constant-mode action (1 − α) implied by
/// extending each factor as the identity on constants; matrices without
/// provenance map constants to themselves.
pub fn conjugate_iteration_matrix(params: &ModelParams, g: &IterationMatrix) -> DMatrix<f64> {
    let n2 = params.strain_dim();
    match g.precond {
        _ if g.alpha == 0.0 => DMatrix::identity(n2, n2),
        Some(PreconditionerKind::Qcl) => {
            let h = conjugate_strain_operator(params, ConjugateKind::QcfPreconl).matrix;
            DMatrix::identity(n2, n2) - h * (g.alpha / params.a_f())
        }
        Some(PreconditionerKind::Qce) => conjugate_matrix(params, &g.g, 1.0 - g.alpha),
        Some(PreconditionerKind::Identity) | None => conjugate_matrix(params, &g.g, 1.0),
    }
}

pub fn opnorm(params: &ModelParams, g: &IterationMatrix, kind: NormKind) -> Result<OpNormResult> {
    let n = params.dim();
    if g.g.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, got: g.g.nrows() });
    }
    Ok(match kind.k {
        0 => OpNormResult::exact(matrix_pnorm(&g.g, kind.p)?, Method::MatrixPnorm, kind),
        2 => {
            let m = match g.precond {
                Some(PreconditionerKind::Qcl) if g.alpha != 0.0 => qcl_laplacian_similarity(params, g.alpha),
                _ => laplacian_similarity(params, &g.g)?,
            };
            OpNormResult::exact(matrix_pnorm(&m, kind.p)?, Method::SimilarityTransform, kind)
        }
        _ => match kind.p {
            P::Two => {
                let m = cholesky_similarity(params, &g.g)?;
                OpNormResult::exact(matrix_pnorm(&m, P::Two)?, Method::GenEig, kind)
            }
            p => {
                let gh = conjugate_iteration_matrix(params, g);
                OpNormResult::conjugate(matrix_pnorm(&gh, p)?, kind)
            }
        },
    })
}

/// (1,2) norm through the full generalized eigensolve (second route).
pub fn opnorm_u12_gen_eig(params: &ModelParams, g: &DMatrix<f64>) -> Result<f64> {
    let l1 = assemble(params, OperatorKind::Laplacian).matrix;
    let a = g.transpose() * &l1 * g;
    let a = (&a + a.transpose()) * 0.5;
    let ev = linalg::gen_sym_eigenvalues(&a, &l1)?;
    Ok(ev[ev.len() - 1].max(0.0).sqrt())
}

/// ‖L^qcf‖ from U^{1,p} to U^{−1,p}.
pub fn qcf_dual_opnorm(params: &ModelParams, p: P) -> Result<OpNormResult> {
    let kind = NormKind::new(1, p);
    match p {
        P::Two => {
            let x = laplacian_spectral_factors(params).power_matrix(-0.5);
            let l = assemble(params, OperatorKind::Qcf).matrix;
            let m = &x * sparse_mul(&l, &x);
            Ok(OpNormResult::exact(matrix_pnorm(&m, P::Two)?, Method::SimilarityTransform, kind))
        }
        p => {
            let h = conjugate_strain_operator(params, ConjugateKind::QcfPreconl).matrix;
            Ok(OpNormResult::conjugate(matrix_pnorm(&h, p)?, kind))
        }
    }
}

/// ‖(L^qcf)⁻¹‖ from U^{0,∞} to U^{2,∞} = ‖L¹(L^qcf)⁻¹‖_∞.
pub fn inv_qcf_02inf_to_2inf(params: &ModelParams) -> Result<f64> {
    let af = params.a_f();
    if !(af > 0.0) {
        return Err(Error::UnstableParams(af));
    }
    let lu = Lu::factor(&assemble(params, OperatorKind::Qcf).matrix)?;
    let l1 = assemble(params, OperatorKind::Laplacian).matrix;
    matrix_pnorm(&sparse_mul(&l1, &lu.inverse()), P::Inf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    /// K = ⌈√N⌉ − 1
    SqrtCeilMinusOne,
    /// K = N / d
    Fraction(usize),
    Fixed(usize),
}

impl KRule {
    pub fn k(&self, n: usize) -> usize {
        match *self {
            KRule::SqrtCeilMinusOne => ((n as f64).sqrt().ceil() as usize).saturating_sub(1),
            KRule::Fraction(d) => n / d,
            KRule::Fixed(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kinds: Vec<NormKind>,
    pub n_list: Vec<usize>,
    pub k_rule: KRule,
    pub phi2_f: f64,
    /// A_F/φ″_F
    pub af_ratio: f64,
    pub precond: PreconditionerKind,
    pub alpha_rule: StepRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub kind: NormKind,
    pub value: f64,
    pub bracket_low: f64,
    pub bracket_high: f64,
    /// `None` when the cell failed.
    pub method: Option<Method>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares log–log slope per kind, smallest N excluded.
    pub slopes: Vec<(NormKind, Option<f64>)>,
}

fn sweep_cell(spec: &SweepSpec, n: usize) -> Vec<SweepRow> {
    let k = spec.k_rule.k(n);
    let failed = |kind: NormKind| SweepRow {
        n,
        k,
        kind,
        value: f64::NAN,
        bracket_low: f64::NAN,
        bracket_high: f64::NAN,
        method: None,
    };
    let setup = ModelParams::with_af(n, k, spec.phi2_f, spec.af_ratio * spec.phi2_f)
        .and_then(|p| Ok((p, step_size(&p, spec.alpha_rule)?)))
        .and_then(|(p, a)| Ok((p, iteration_matrix(&p, spec.precond, a)?)));
    let (p, g) = match setup {
        Ok(x) => x,
        Err(_) => return spec.kinds.iter().map(|&kd| failed(kd)).collect(),
    };
    spec.kinds
        .par_iter()
        .map(|&kind| match opnorm(&p, &g, kind) {
            Ok(r) => SweepRow {
                n,
                k,
                kind,
                value: r.value,
                bracket_low: r.bracket_low,
                bracket_high: r.bracket_high,
                method: Some(r.method),
            },
            Err(_) => failed(kind),
        })
        .collect()
}

/// Least-squares slope of ln y against ln x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite()).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx).powi(2)));
    (den > 0.0).then(|| num / den)
}

pub fn scaling_sweep(spec: &SweepSpec) -> SweepTable {
    let mut ns = spec.n_list.clone();
    ns.sort_unstable();
    let cells: Vec<Vec<SweepRow>> = ns.par_iter().map(|&n| sweep_cell(spec, n)).collect();
    let rows: Vec<SweepRow> = cells.into_iter().flatten().collect();
    let n_min = ns.first().copied().unwrap_or(0);
    let slopes = spec
        .kinds
        .iter()
        .map(|&kind| {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                rows.iter().filter(|r| r.kind == kind && r.n != n_min).map(|r| (r.n as f64, r.value)).unzip();
            (kind, loglog_slope(&xs, &ys))
        })
        .collect();
    SweepTable { rows, slopes }
}

impl SweepTable {
    pub fn slope(&self, kind: NormKind) -> Option<f64> {
        self.slopes.iter().find(|(k, _)| *k == kind).and_then(|(_, s)| *s)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["N", "K", "k", "p", "value", "bracket_low", "bracket_high", "method"]).map_err(io_err)?;
        for r in &self.rows {
            let method = match r.method {
                Some(m) => serde_json::to_value(m).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
                None => "FAILED".to_string(),
            };
            wr.write_record([
                r.n.to_string(),
                r.k.to_string(),
                r.kind.k.to_string(),
                r.kind.p.label().to_string(),
                fmt_f64(r.value),
                fmt_f64(r.bracket_low),
                fmt_f64(r.bracket_high),
                method,
            ])
            .map_err(io_err)?;
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Applies G to a vector (convenience for recursion checks).
pub fn apply(g: &IterationMatrix, e: &DVector<f64>) -> DVector<f64> {
    &g.g * e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iteration::predicted_rate;
    use crate::model::make_params;

    #[test]
    fn green_function_inverts_laplacian() {
        let p = make_params(7, 2, 1.0, -0.1).unwrap();
        let r = assemble(&p, OperatorKind::Laplacian).matrix * laplacian_inverse(&p);
        assert!((r - DMatrix::identity(13, 13)).amax() < 1e-13);
    }

    #[test]
    fn structured_qcl_similarity_matches_generic() {
        let p = ModelParams::with_af(12, 3, 1.0, 0.3).unwrap();
        let g = iteration_matrix(&p, PreconditionerKind::Qcl, 0.4).unwrap();
        let generic = laplacian_similarity(&p, &g.g).unwrap();
        assert!((qcl_laplacian_similarity(&p, 0.4) - generic).amax() < 1e-10);
    }

    #[test]
    fn identity_norms_are_one() {
        let p = ModelParams::with_af(8, 2, 1.0, 0.5).unwrap();
        let g = iteration_matrix(&p, PreconditionerKind::Qcl, 0.0).unwrap();
        for kind in NormKind::all() {
            let r = opnorm(&p, &g, kind).unwrap();
            assert!((r.value - 1.0).abs() < 1e-10, "{kind}: {}", r.value);
        }
    }

    #[test]
    fn qcl_unit_step_without_second_neighbours_is_zero() {
        let p = make_params(8, 2, 1.0, 0.0).unwrap();
        let g = iteration_matrix(&p, PreconditionerKind::Qcl, 1.0).unwrap();
        assert!(g.g.amax() < 1e-13);
    }

    #[test]
    fn qcl_2inf_closed_form() {
        for af in [0.3, 0.5, 0.8] {
            let p = ModelParams::with_af(16, 4, 1.0, af).unwrap();
            for a in [0.2, 0.6, 1.0] {
                let g = iteration_matrix(&p, PreconditionerKind::Qcl, a).unwrap();
                let r = opnorm(&p, &g, NormKind::new(2, P::Inf)).unwrap();
                let want = predicted_rate(&p, PreconditionerKind::Qcl, a, NormKind::new(2, P::Inf)).unwrap().unwrap();
                assert!((r.value - want).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn u12_routes_agree() {
        let p = ModelParams::with_af(12, 3, 1.0, 0.6).unwrap();
        for pk in [PreconditionerKind::Identity, PreconditionerKind::Qcl, PreconditionerKind::Qce] {
            let a = if pk == PreconditionerKind::Identity { 1e-3 } else { 0.7 };
            let g = iteration_matrix(&p, pk, a).unwrap();
            let x = opnorm(&p, &g, NormKind::new(1, P::Two)).unwrap().value;
            let y = opnorm_u12_gen_eig(&p, &g.g).unwrap();
            assert!((x - y).abs() < 1e-9 * y, "{pk}: {x} vs {y}");
        }
    }

    #[test]
    fn dual_norm_without_second_neighbours() {
        let p = make_params(16, 4, 1.3, 0.0).unwrap();
        for q in P::ALL {
            let r = qcf_dual_opnorm(&p, q).unwrap();
            assert!((r.value - 1.3).abs() < 1e-10, "{q:?}");
        }
    }

    #[test]
    fn inverse_bound_trivial() {
        let p = make_params(16, 4, 1.5, 0.0).unwrap();
        assert!((inv_qcf_02inf_to_2inf(&p).unwrap() - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn k_rules() {
        assert_eq!(KRule::SqrtCeilMinusOne.k(64), 7);
        assert_eq!(KRule::SqrtCeilMinusOne.k(128), 11);
        assert_eq!(KRule::Fraction(4).k(64), 16);
    }

    #[test]
    fn slope_fit() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sweep_csv_and_failed_cells() {
        let spec = SweepSpec {
            kinds: vec![NormKind::new(2, P::Inf)],
            n_list: vec![8, 16, 3],
            k_rule: KRule::Fixed(2),
            phi2_f: 1.0,
            af_ratio: 0.5,
            precond: PreconditionerKind::Qcl,
            alpha_rule: StepRule::QclOpt2inf,
        };
        let t = scaling_sweep(&spec);
        assert_eq!(t.rows.len(), 3);
        assert!(t.rows[0].method.is_none());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("N,K,k,p,value,bracket_low,bracket_high,method\n"));
        assert!(s.contains("FAILED"));
        assert!(t.slope(NormKind::new(2, P::Inf)).unwrap().abs() < 1e-9);
    }
}
