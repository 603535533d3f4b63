//! Stationary iteration P(u⁽ⁿ⁺¹⁾ − u⁽ⁿ⁾) = α(f − L^qcf u⁽ⁿ⁾), step-size rules and
//! contraction rates.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Lu};
use crate::model::{vector_norm, Displacement, ModelParams, NormKind, P};
use crate::operators::{assemble, solve_laplacian, OperatorKind};
use crate::spectral::qnl_u12_spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PreconditionerKind {
    Identity,
    Qcl,
    Qce,
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreconditionerKind::Identity => "id",
            PreconditionerKind::Qcl => "qcl",
            PreconditionerKind::Qce => "qce",
        })
    }
}

impl FromStr for PreconditionerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "id" | "identity" => Ok(PreconditionerKind::Identity),
            "qcl" => Ok(PreconditionerKind::Qcl),
            "qce" | "gfc" => Ok(PreconditionerKind::Qce),
            _ => Err(Error::Usage(format!("unknown preconditioner '{s}' (expected id, qcl or qce)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepRule {
    Fixed(f64),
    RichMax,
    RichOpt,
    QclOpt2inf,
    QclMax2inf,
    QclOpt1inf,
    QclMax1inf,
    QclOpt12,
    QclMax12,
    GfcUnit,
}

impl StepRule {
    pub const NAMED: [(&'static str, StepRule); 9] = [
        ("rich_max", StepRule::RichMax),
        ("rich_opt", StepRule::RichOpt),
        ("qcl_opt_2inf", StepRule::QclOpt2inf),
        ("qcl_max_2inf", StepRule::QclMax2inf),
        ("qcl_opt_1inf", StepRule::QclOpt1inf),
        ("qcl_max_1inf", StepRule::QclMax1inf),
        ("qcl_opt_12", StepRule::QclOpt12),
        ("qcl_max_12", StepRule::QclMax12),
        ("gfc_unit", StepRule::GfcUnit),
    ];
}

impl FromStr for StepRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        if let Some((_, r)) = StepRule::NAMED.iter().find(|(n, _)| *n == key) {
            return Ok(*r);
        }
        key.parse::<f64>()
            .map(StepRule::Fixed)
            .map_err(|_| Error::Usage(format!("unknown step rule '{s}'")))
    }
}

fn require_stable(params: &ModelParams) -> Result<f64> {
    let af = params.a_f();
    if !(af > 0.0) {
        return Err(Error::UnstableParams(af));
    }
    Ok(af)
}

/// Extreme eigenvalues of L^qnl.
fn qnl_extremes(params: &ModelParams) -> Result<(f64, f64)> {
    let ev = linalg::sym_eigenvalues(&assemble(params, OperatorKind::Qnl).matrix)?;
    Ok((ev[0], ev[ev.len() - 1]))
}

fn mu_extremes(params: &ModelParams) -> (f64, f64) {
    qnl_u12_spectrum(params).into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| (a.min(m), b.max(m)))
}

pub fn step_size(params: &ModelParams, rule: StepRule) -> Result<f64> {
    let (p1, p2) = (params.phi2_f, params.phi2_2f);
    let (eps, k) = (params.eps(), params.k as f64);
    Ok(match rule {
        StepRule::Fixed(a) => a,
        StepRule::GfcUnit => 1.0,
        other => {
            let af = require_stable(params)?;
            let r = (p2 / af).abs();
            match other {
                StepRule::RichMax => 2.0 / qnl_extremes(params)?.1,
                StepRule::RichOpt => {
                    let (lo, hi) = qnl_extremes(params)?;
                    2.0 / (lo + hi)
                }
                StepRule::QclOpt2inf => 2.0 * af / (p1 + af),
                StepRule::QclMax2inf => 2.0 * af / p1,
                StepRule::QclOpt1inf => 1.0 / (1.0 + (2.0 + eps - 2.0 * eps * k) * r),
                StepRule::QclMax1inf => 2.0 * af / (af + (8.0 + 2.0 * eps - 4.0 * eps * k) * p2.abs()),
                StepRule::QclOpt12 => {
                    let (lo, hi) = mu_extremes(params);
                    2.0 * af / (lo + hi)
                }
                StepRule::QclMax12 => 2.0 * af / mu_extremes(params).1,
                StepRule::Fixed(_) | StepRule::GfcUnit => unreachable!(),
            }
        }
    })
}

/// Closed-form contraction factor where one is known; `None` otherwise.
pub fn predicted_rate(params: &ModelParams, precond: PreconditionerKind, alpha: f64, kind: NormKind) -> Result<Option<f64>> {
    if alpha == 0.0 {
        return Ok(Some(1.0));
    }
    let (p2, af) = (params.phi2_2f, params.a_f());
    let (eps, k) = (params.eps(), params.k as f64);
    Ok(match (precond, kind.k, kind.p) {
        (PreconditionerKind::Identity, 0, P::Two) => {
            let ev = linalg::sym_eigenvalues(&assemble(params, OperatorKind::Qnl).matrix)?;
            Some(ev.iter().map(|l| (1.0 - alpha * l).abs()).fold(0.0, f64::max))
        }
        (PreconditionerKind::Qcl, 2, P::Inf) => {
            let af = require_stable(params)?;
            Some((1.0 - alpha * (1.0 - 2.0 * p2 / af)).abs() + alpha * (2.0 * p2 / af).abs())
        }
        (PreconditionerKind::Qcl, 1, P::Inf) => {
            require_stable(params)?;
            let r = (p2 / af).abs();
            let breakpoint = 1.0 / (1.0 + (2.0 + eps - 2.0 * eps * k) * r);
            Some(if alpha <= breakpoint {
                (1.0 - alpha).abs() + 4.0 * alpha * r
            } else {
                (1.0 - alpha * (1.0 - 2.0 * p2 / af)).abs() + alpha * (6.0 + 2.0 * eps - 4.0 * eps * k) * r
            })
        }
        (PreconditionerKind::Qcl, 1, P::Two) => {
            let af = require_stable(params)?;
            Some(qnl_u12_spectrum(params).iter().map(|m| (1.0 - alpha / af * m).abs()).fold(0.0, f64::max))
        }
        _ => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Converged,
    Diverged,
    Maxiter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    /// Per kind, in `IterationTrace::kinds` order.
    pub residual: Vec<f64>,
    pub error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub kinds: Vec<NormKind>,
    pub records: Vec<StepRecord>,
    pub alpha: f64,
    pub precond: PreconditionerKind,
    pub verdict: Verdict,
}

pub const DEFAULT_KINDS: [NormKind; 4] =
    [NormKind::new(0, P::Two), NormKind::new(1, P::Two), NormKind::new(1, P::Inf), NormKind::new(2, P::Inf)];

#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    pub max_iter: usize,
    /// Relative residual tolerance; 0 disables the convergence test.
    pub tol: f64,
    /// Requested kinds; the first one drives the stopping tests.
    pub kinds: Vec<NormKind>,
}

impl Default for Controls {
    fn default() -> Self {
        Controls { max_iter: 1000, tol: 1e-10, kinds: vec![] }
    }
}

pub const DIVERGENCE_FACTOR: f64 = 1e12;

impl IterationTrace {
    fn column(&self, kind: NormKind) -> Option<usize> {
        self.kinds.iter().position(|k| *k == kind)
    }

    pub fn errors(&self, kind: NormKind) -> Option<Vec<f64>> {
        let c = self.column(kind)?;
        Some(self.records.iter().map(|r| r.error[c]).collect())
    }

    pub fn residuals(&self, kind: NormKind) -> Option<Vec<f64>> {
        let c = self.column(kind)?;
        Some(self.records.iter().map(|r| r.residual[c]).collect())
    }

    /// CSV with columns n, res_k_p…, err_k_p…; 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["n".to_string()];
        header.extend(self.kinds.iter().map(|k| format!("res_{}", k.tag())));
        header.extend(self.kinds.iter().map(|k| format!("err_{}", k.tag())));
        wr.write_record(&header).map_err(io_err)?;
        for r in &self.records {
            let mut row = vec![r.n.to_string()];
            row.extend(r.residual.iter().chain(&r.error).map(|x| fmt_f64(*x)));
            wr.write_record(&row).map_err(io_err)?;
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

pub(crate) fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

enum Precond {
    Identity,
    Qcl(f64),
    Qce(Lu),
}

impl Precond {
    fn solve(&self, params: &ModelParams, r: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(match self {
            Precond::Identity => r.clone(),
            Precond::Qcl(af) => DVector::from_vec(solve_laplacian(params, r.as_slice())?) / *af,
            Precond::Qce(lu) => {
                let mut x = r.clone();
                lu.solve_in_place(x.as_mut_slice());
                x
            }
        })
    }
}

fn build_precond(params: &ModelParams, kind: PreconditionerKind) -> Result<Precond> {
    Ok(match kind {
        PreconditionerKind::Identity => Precond::Identity,
        PreconditionerKind::Qcl => {
            let af = params.a_f();
            if af == 0.0 {
                return Err(Error::SingularPreconditioner);
            }
            Precond::Qcl(af)
        }
        PreconditionerKind::Qce => Precond::Qce(
            Lu::factor(&assemble(params, OperatorKind::Qce).matrix).map_err(|_| Error::SingularPreconditioner)?,
        ),
    })
}

/// Solution of L^qcf u = f by dense LU.
pub fn reference_solution(params: &ModelParams, f: &Displacement) -> Result<Displacement> {
    let lu = Lu::factor(&assemble(params, OperatorKind::Qcf).matrix).map_err(|_| Error::UnstableParams(params.a_f()))?;
    lu.solve(f)
}

pub fn run_iteration(
    params: &ModelParams,
    precond: PreconditionerKind,
    alpha: f64,
    f: &Displacement,
    u0: &Displacement,
    controls: &Controls,
) -> Result<IterationTrace> {
    params.check(f)?;
    params.check(u0)?;
    if params.a_f() == 0.0 {
        return Err(Error::UnstableParams(0.0));
    }
    if !(alpha > 0.0) {
        return Err(Error::Usage(format!("alpha must be positive, got {alpha}")));
    }
    let l = assemble(params, OperatorKind::Qcf).matrix;
    let u_ref = reference_solution(params, f)?;
    let p = build_precond(params, precond)?;

    let mut kinds = controls.kinds.clone();
    for k in DEFAULT_KINDS {
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    let stop = kinds[0];
    let f_norm = vector_norm(params, f, stop);

    let mut u = u0.clone();
    let mut records = Vec::new();
    let mut err0 = f64::NAN;
    let mut verdict = Verdict::Maxiter;
    for n in 0..=controls.max_iter {
        // recomputed from scratch every step, never accumulated
        let r = f - &l * &u;
        let e = &u - &u_ref;
        let residual: Vec<f64> = kinds.iter().map(|k| vector_norm(params, &r, *k)).collect();
        let error: Vec<f64> = kinds.iter().map(|k| vector_norm(params, &e, *k)).collect();
        let (rs, es) = (residual[0], error[0]);
        records.push(StepRecord { n, residual, error });
        if n == 0 {
            err0 = es;
        }
        if rs < controls.tol * f_norm || (rs == 0.0 && controls.tol > 0.0) {
            verdict = Verdict::Converged;
            break;
        }
        if es > DIVERGENCE_FACTOR * err0 || !es.is_finite() {
            verdict = Verdict::Diverged;
            break;
        }
        if n == controls.max_iter {
            break;
        }
        let d = p.solve(params, &r)?;
        u.axpy(alpha, &d, 1.0);
    }
    Ok(IterationTrace { kinds, records, alpha, precond, verdict })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRate {
    pub rate: f64,
    pub nonmonotone: bool,
}

/// Geometric mean of the ratios e_{i+1}/e_i for i in `from..to`.
pub fn geometric_rate(series: &[f64], from: usize, to: usize) -> MeasuredRate {
    let ratios: Vec<f64> = (from..to).map(|i| series[i + 1] / series[i]).collect();
    let nonmonotone = ratios.iter().any(|&q| q > 1.0);
    let log_mean = ratios.iter().map(|q| q.ln()).sum::<f64>() / ratios.len() as f64;
    MeasuredRate { rate: log_mean.exp(), nonmonotone }
}

pub const RATE_WINDOW: usize = 10;
pub const RATE_MIN_STEPS: usize = 20;

/// Asymptotic rate from the last ten error ratios.
pub fn measured_rate(trace: &IterationTrace, kind: NormKind) -> Result<MeasuredRate> {
    let e = trace.errors(kind).ok_or_else(|| Error::InvalidKind(kind.to_string()))?;
    measured_rate_of(&e)
}

pub fn measured_rate_of(errors: &[f64]) -> Result<MeasuredRate> {
    if errors.len() < RATE_MIN_STEPS {
        return Err(Error::InsufficientData { need: RATE_MIN_STEPS, have: errors.len() });
    }
    let last = errors.len() - 1;
    Ok(geometric_rate(errors, last - RATE_WINDOW, last))
}
