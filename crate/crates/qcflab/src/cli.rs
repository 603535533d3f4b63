//! Command-line front end: configuration, presets for the four experiments,
//! and table emission.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iteration::{
    fmt_f64, io_err, measured_rate, run_iteration, step_size, Controls, IterationTrace, PreconditionerKind, StepRule,
    Verdict,
};
use crate::linalg;
use crate::model::{make_params, Displacement, ModelParams, NormKind, P};
use crate::operators::{assemble, OperatorKind};
use crate::opnorms::{iteration_matrix, opnorm, scaling_sweep, KRule, OpNormResult, SweepSpec, SweepTable};
use crate::spectral::{self, critical_strain, PotentialSpec, StabilityKind};

/// f_j = h(x_j) cos(3πx_j), h = 1 for x ≥ 0 and −1 otherwise.
pub fn rhs_vector(params: &ModelParams) -> Displacement {
    DVector::from_fn(params.dim(), |i, _| {
        let x = params.site(i) as f64 * params.eps();
        let h = if x >= 0.0 { 1.0 } else { -1.0 };
        h * (3.0 * std::f64::consts::PI * x).cos()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Effective settings of one invocation; round-trips through JSON.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub command: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub phi2_F: f64,
    /// φ″_2F; ignored when `A_F` is set.
    pub phi2_2F: Option<f64>,
    pub A_F: Option<f64>,
    pub precond: PreconditionerKind,
    pub alpha: Option<f64>,
    pub alpha_rule: Option<String>,
    pub norms: Vec<String>,
    pub kind: Option<String>,
    pub tol: f64,
    pub max_iter: usize,
    pub n_list: Vec<usize>,
    pub k_rule: Option<String>,
    pub figure: Option<u8>,
    pub potential: String,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: String::new(),
            n: 64,
            k: 8,
            phi2_F: 1.0,
            phi2_2F: None,
            A_F: Some(0.5),
            precond: PreconditionerKind::Qcl,
            alpha: None,
            alpha_rule: None,
            norms: vec![],
            kind: None,
            tol: 1e-10,
            max_iter: 1000,
            n_list: vec![64, 128, 256, 512, 1024],
            k_rule: None,
            figure: None,
            potential: "lj".into(),
            out: None,
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qcflab", version, about = "Quasicontinuum operators, iterative solvers and operator norms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form and numerical U^{1,2} spectrum of L^qnl.
    Spectrum(Flags),
    /// Stability constants (--kind atom|qnl|qce|qcf_sym), JSON.
    Stability(Flags),
    /// Run the stationary iteration with the standard right-hand side.
    Iterate(Flags),
    /// Operator norms of the iteration matrix (--kind K,P or --norm, default all).
    Opnorm(Flags),
    /// Critical strain of a pair potential (--potential lj).
    CriticalStrain(Flags),
    /// Scaling sweep over --n-list.
    Sweep(Flags),
    /// Dense operator dump (--kind atom|laplacian|qcl|qnl|qce|qcf).
    DumpOperator(Flags),
    /// Reproduce one of the four experiments (--figure 1..4).
    Figure(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// φ″_F
    #[arg(long)]
    pub phi2: Option<f64>,
    /// φ″_2F
    #[arg(long, conflicts_with = "af", allow_hyphen_values = true)]
    pub phi22: Option<f64>,
    /// A_F; sets φ″_2F = (A_F − φ″_F)/4
    #[arg(long, allow_hyphen_values = true)]
    pub af: Option<f64>,
    #[arg(long)]
    pub precond: Option<String>,
    #[arg(long, conflicts_with = "alpha_rule")]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub alpha_rule: Option<String>,
    /// Norm kind K,P; repeatable.
    #[arg(long)]
    pub norm: Vec<String>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Comma-separated N values for sweeps.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<usize>,
    /// sqrt | frac:D | fixed:K
    #[arg(long)]
    pub k_rule: Option<String>,
    #[arg(long)]
    pub figure: Option<u8>,
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the effective configuration to this path.
    #[arg(long)]
    pub emit_config: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &PathBuf) -> Result<ExperimentConfig> {
        let s = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&s).map_err(|e| Error::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(command: &str, flags: &Flags) -> Result<ExperimentConfig> {
        let mut c = match &flags.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        c.command = command.to_string();
        if let Some(v) = flags.n {
            c.n = v;
        }
        if let Some(v) = flags.k {
            c.k = v;
        }
        if let Some(v) = flags.phi2 {
            c.phi2_F = v;
        }
        if let Some(v) = flags.phi22 {
            c.phi2_2F = Some(v);
            c.A_F = None;
        }
        if let Some(v) = flags.af {
            c.A_F = Some(v);
            c.phi2_2F = None;
        }
        if let Some(v) = &flags.precond {
            c.precond = v.parse()?;
        }
        if let Some(v) = flags.alpha {
            c.alpha = Some(v);
            c.alpha_rule = None;
        }
        if let Some(v) = &flags.alpha_rule {
            v.parse::<StepRule>()?;
            c.alpha_rule = Some(v.clone());
            c.alpha = None;
        }
        if !flags.norm.is_empty() {
            c.norms = flags.norm.clone();
        }
        if let Some(v) = &flags.kind {
            c.kind = Some(v.clone());
        }
        if let Some(v) = flags.tol {
            c.tol = v;
        }
        if let Some(v) = flags.max_iter {
            c.max_iter = v;
        }
        if !flags.n_list.is_empty() {
            c.n_list = flags.n_list.clone();
        }
        if let Some(v) = &flags.k_rule {
            c.k_rule = Some(v.clone());
        }
        if let Some(v) = flags.figure {
            c.figure = Some(v);
        }
        if let Some(v) = &flags.potential {
            c.potential = v.clone();
        }
        if let Some(v) = &flags.out {
            c.out = Some(v.clone());
        }
        if let Some(v) = flags.format {
            c.format = v;
        }
        Ok(c)
    }

    pub fn params(&self) -> Result<ModelParams> {
        match (self.A_F, self.phi2_2F) {
            (Some(af), _) => ModelParams::with_af(self.n, self.k, self.phi2_F, af),
            (None, Some(p)) => make_params(self.n, self.k, self.phi2_F, p),
            (None, None) => Err(Error::Usage("one of --phi22 or --af is required".into())),
        }
    }

    pub fn norm_kinds(&self) -> Result<Vec<NormKind>> {
        self.norms.iter().map(|s| NormKind::parse(s)).collect()
    }

    fn step_rule(&self) -> Result<StepRule> {
        match (&self.alpha_rule, self.alpha) {
            (Some(r), _) => r.parse(),
            (None, Some(a)) => Ok(StepRule::Fixed(a)),
            (None, None) => Ok(match self.precond {
                PreconditionerKind::Identity => StepRule::RichOpt,
                PreconditionerKind::Qcl => StepRule::QclOpt2inf,
                PreconditionerKind::Qce => StepRule::GfcUnit,
            }),
        }
    }

    fn k_rule(&self) -> Result<KRule> {
        let Some(s) = &self.k_rule else { return Ok(KRule::Fixed(self.k)) };
        let bad = || Error::Usage(format!("bad --k-rule '{s}' (sqrt | frac:D | fixed:K)"));
        match s.split_once(':') {
            None if s == "sqrt" => Ok(KRule::SqrtCeilMinusOne),
            Some(("frac", d)) => Ok(KRule::Fraction(d.parse().map_err(|_| bad())?)),
            Some(("fixed", k)) => Ok(KRule::Fixed(k.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::InvalidKind(_) | Error::Reject(_) | Error::DimensionMismatch { .. } => 2,
        Error::UnstableParams(_)
        | Error::Singular { .. }
        | Error::SingularPreconditioner
        | Error::NotSpd
        | Error::BNotSpd
        | Error::ZeroPivot(_)
        | Error::NotSymmetric(_) => 3,
        Error::NoConvergence(_) | Error::NoRoot(_) | Error::NoSignChange(..) | Error::InsufficientData { .. } => 4,
        Error::Io(_) => 1,
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(w)
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(header).map_err(io_err)?;
    for r in rows {
        wr.write_record(r).map_err(io_err)?;
    }
    wr.flush().map_err(|e| Error::Io(e.to_string()))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Fig. 1: Richardson iteration, normalized (0,2) error per step for K = 8, 32.
pub struct Figure1 {
    pub traces: Vec<(usize, IterationTrace)>,
    pub predicted: Vec<f64>,
}

pub const FIG1_STEPS: usize = 500;

pub fn figure1() -> Result<Figure1> {
    let runs: Vec<Result<(usize, IterationTrace, f64)>> = [8usize, 32]
        .par_iter()
        .map(|&k| {
            let p = ModelParams::with_af(200, k, 1.0, 0.5)?;
            let a = step_size(&p, StepRule::RichOpt)?;
            let f = rhs_vector(&p);
            let c = Controls { max_iter: FIG1_STEPS, tol: 0.0, kinds: vec![NormKind::new(0, P::Two)] };
            let t = run_iteration(&p, PreconditionerKind::Identity, a, &f, &DVector::zeros(p.dim()), &c)?;
            let q = crate::iteration::predicted_rate(&p, PreconditionerKind::Identity, a, NormKind::new(0, P::Two))?
                .expect("defined");
            Ok((k, t, q))
        })
        .collect();
    let mut traces = Vec::new();
    let mut predicted = Vec::new();
    for r in runs {
        let (k, t, q) = r?;
        traces.push((k, t));
        predicted.push(q);
    }
    Ok(Figure1 { traces, predicted })
}

impl Figure1 {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let kind = NormKind::new(0, P::Two);
        let series: Vec<Vec<f64>> = self.traces.iter().map(|(_, t)| t.errors(kind).expect("recorded")).collect();
        let header: Vec<String> =
            std::iter::once("n".to_string()).chain(self.traces.iter().map(|(k, _)| format!("err_0_2_K{k}"))).collect();
        let len = series.iter().map(Vec::len).max().unwrap_or(0);
        let rows: Vec<Vec<String>> = (0..len)
            .map(|n| {
                std::iter::once(n.to_string())
                    .chain(series.iter().map(|s| opt(s.get(n).map(|e| e / s[0]))))
                    .collect()
            })
            .collect();
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        write_rows(w, &h, &rows)
    }
}

/// Fig. 2: QCL-preconditioned iteration at N = 800, K = 32, A_F = 0.2.
pub fn figure2(max_iter: usize) -> Result<IterationTrace> {
    let p = ModelParams::with_af(800, 32, 1.0, 0.2)?;
    let a = step_size(&p, StepRule::QclOpt2inf)?;
    let f = rhs_vector(&p);
    let kinds = vec![NormKind::new(1, P::Two), NormKind::new(1, P::Inf), NormKind::new(2, P::Inf)];
    run_iteration(&p, PreconditionerKind::Qcl, a, &f, &DVector::zeros(p.dim()), &Controls { max_iter, tol: 0.0, kinds })
}

/// Steps shown for Fig. 2; beyond ≈40 steps the errors reach rounding level.
pub const FIG2_STEPS: usize = 30;

/// Fig. 3: GFC norms against N, K = ⌈√N⌉ − 1, A_F/φ″_F = 0.8.
pub fn figure3(n_list: &[usize]) -> SweepTable {
    scaling_sweep(&SweepSpec {
        kinds: NormKind::all(),
        n_list: n_list.to_vec(),
        k_rule: KRule::SqrtCeilMinusOne,
        phi2_f: 1.0,
        af_ratio: 0.8,
        precond: PreconditionerKind::Qce,
        alpha_rule: StepRule::GfcUnit,
    })
}

pub struct Figure4Row {
    pub a_f: f64,
    pub u1inf: OpNormResult,
    pub u21: OpNormResult,
}

pub struct Figure4 {
    pub rows: Vec<Figure4Row>,
    /// Largest A_F on the grid with ‖G‖_{U^{2,1}} > 1.
    pub crossing: Option<f64>,
    /// Same for the lower (1,∞) bound.
    pub crossing_u1inf_low: Option<f64>,
}

pub fn figure4_grid() -> Vec<f64> {
    (0..=60).map(|i| 0.05 + 0.0125 * i as f64).collect()
}

pub fn figure4_at(n: usize, k: usize, grid: &[f64]) -> Result<Figure4> {
    let rows: Vec<Result<Figure4Row>> = grid
        .par_iter()
        .map(|&a_f| {
            let p = ModelParams::with_af(n, k, 1.0, a_f)?;
            let g = iteration_matrix(&p, PreconditionerKind::Qce, 1.0)?;
            Ok(Figure4Row {
                a_f,
                u1inf: opnorm(&p, &g, NormKind::new(1, P::Inf))?,
                u21: opnorm(&p, &g, NormKind::new(2, P::One))?,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let largest = |f: &dyn Fn(&Figure4Row) -> bool| rows.iter().filter(|r| f(r)).map(|r| r.a_f).fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))));
    Ok(Figure4 {
        crossing: largest(&|r| r.u21.bracket_low > 1.0),
        crossing_u1inf_low: largest(&|r| r.u1inf.bracket_low > 1.0),
        rows,
    })
}

pub fn figure4() -> Result<Figure4> {
    figure4_at(256, 15, &figure4_grid())
}

impl Figure4 {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.a_f),
                    fmt_f64(r.u1inf.bracket_low),
                    fmt_f64(r.u1inf.bracket_high),
                    fmt_f64(r.u21.value),
                ]
            })
            .collect();
        write_rows(w, &["A_F", "u1inf_low", "u1inf_high", "u21"], &rows)
    }
}

fn output(cfg: &ExperimentConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn write_json<T: Serialize>(w: &mut dyn Write, v: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, v).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w).map_err(|e| Error::Io(e.to_string()))
}

fn emit_opnorms(w: &mut dyn Write, format: Format, p: &ModelParams, rs: &[OpNormResult]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "K")]
        k: usize,
        k_norm: u8,
        p: &'a str,
        #[serde(flatten)]
        r: &'a OpNormResult,
    }
    match format {
        Format::Json => {
            let rows: Vec<Row> = rs.iter().map(|r| Row { n: p.n, k: p.k, k_norm: r.kind.k, p: r.kind.p.label(), r }).collect();
            write_json(w, &rows)
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = rs
                .iter()
                .map(|r| {
                    vec![
                        p.n.to_string(),
                        p.k.to_string(),
                        r.kind.k.to_string(),
                        r.kind.p.label().to_string(),
                        fmt_f64(r.value),
                        fmt_f64(r.bracket_low),
                        fmt_f64(r.bracket_high),
                        serde_json::to_value(r.method).unwrap().as_str().unwrap().to_string(),
                    ]
                })
                .collect();
            write_rows(w, &["N", "K", "k", "p", "value", "bracket_low", "bracket_high", "method"], &rows)
        }
    }
}

/// Runs one command; returns the process exit status.
pub fn run(cli: Cli) -> Result<i32> {
    let (name, flags) = match &cli.command {
        Command::Spectrum(f) => ("spectrum", f),
        Command::Stability(f) => ("stability", f),
        Command::Iterate(f) => ("iterate", f),
        Command::Opnorm(f) => ("opnorm", f),
        Command::CriticalStrain(f) => ("critical-strain", f),
        Command::Sweep(f) => ("sweep", f),
        Command::DumpOperator(f) => ("dump-operator", f),
        Command::Figure(f) => ("figure", f),
    };
    let cfg = ExperimentConfig::resolve(name, flags)?;
    if let Some(path) = &flags.emit_config {
        fs::write(path, cfg.to_json()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    let mut status = 0;
    match name {
        "spectrum" => {
            let p = cfg.params()?;
            let mut mu = spectral::qnl_u12_spectrum(&p);
            mu.sort_by(f64::total_cmp);
            let l1 = assemble(&p, OperatorKind::Laplacian).matrix;
            let num = linalg::gen_sym_eigenvalues(&assemble(&p, OperatorKind::Qnl).matrix, &l1)?;
            let mut w = output(&cfg)?;
            match cfg.format {
                Format::Json => {
                    write_json(&mut *w, &serde_json::json!({ "N": p.n, "K": p.k, "mu_closed": mu, "mu_numeric": num }))?
                }
                Format::Csv => {
                    let rows: Vec<Vec<String>> =
                        mu.iter().zip(&num).enumerate().map(|(j, (a, b))| vec![(j + 1).to_string(), fmt_f64(*a), fmt_f64(*b)]).collect();
                    write_rows(&mut *w, &["j", "mu_closed", "mu_numeric"], &rows)?;
                }
            }
        }
        "stability" => {
            let p = cfg.params()?;
            let kind: StabilityKind = cfg.kind.as_deref().unwrap_or("qce").parse()?;
            let r = spectral::stability_constants(&p, kind)?;
            let mut w = output(&cfg)?;
            match cfg.format {
                Format::Json => write_json(&mut *w, &r)?,
                Format::Csv => write_rows(
                    &mut *w,
                    &["kind", "N", "K", "phi2_F", "phi2_2F", "inf_u12", "lambda_K", "nu_eps"],
                    &[vec![
                        kind.to_string(),
                        r.n.to_string(),
                        r.k.to_string(),
                        fmt_f64(r.phi2_F),
                        fmt_f64(r.phi2_2F),
                        fmt_f64(r.inf_u12),
                        opt(r.lambda_K),
                        fmt_f64(r.nu_eps),
                    ]],
                )?,
            }
        }
        "iterate" => {
            let p = cfg.params()?;
            let a = step_size(&p, cfg.step_rule()?)?;
            let f = rhs_vector(&p);
            let controls = Controls { max_iter: cfg.max_iter, tol: cfg.tol, kinds: cfg.norm_kinds()? };
            let t = run_iteration(&p, cfg.precond, a, &f, &DVector::zeros(p.dim()), &controls)?;
            let mut w = output(&cfg)?;
            match cfg.format {
                Format::Json => write_json(&mut *w, &t)?,
                Format::Csv => t.write_csv(&mut *w)?,
            }
            if cfg.tol > 0.0 && t.verdict != Verdict::Converged {
                status = 4;
            }
        }
        "opnorm" => {
            let p = cfg.params()?;
            let a = step_size(&p, cfg.step_rule()?)?;
            let g = iteration_matrix(&p, cfg.precond, a)?;
            let mut kinds = cfg.norm_kinds()?;
            if let Some(k) = &cfg.kind {
                kinds.insert(0, NormKind::parse(k)?);
            }
            if kinds.is_empty() {
                kinds = NormKind::all();
            }
            let rs = kinds.iter().map(|k| opnorm(&p, &g, *k)).collect::<Result<Vec<_>>>()?;
            emit_opnorms(&mut *output(&cfg)?, cfg.format, &p, &rs)?;
        }
        "critical-strain" => {
            let pot = match cfg.potential.to_ascii_lowercase().as_str() {
                "lj" | "lennard-jones" => PotentialSpec::lennard_jones(),
                other => return Err(Error::Usage(format!("unknown potential '{other}'"))),
            };
            let f = critical_strain(&pot)?;
            let mut w = output(&cfg)?;
            match cfg.format {
                Format::Json => write_json(&mut *w, &serde_json::json!({ "potential": cfg.potential, "F_star": f }))?,
                Format::Csv => write_rows(&mut *w, &["potential", "F_star"], &[vec![cfg.potential.clone(), fmt_f64(f)]])?,
            }
        }
        "sweep" => {
            let kinds = if cfg.norms.is_empty() { NormKind::all() } else { cfg.norm_kinds()? };
            let af = match (cfg.A_F, cfg.phi2_2F) {
                (Some(a), _) => a,
                (None, Some(q)) => cfg.phi2_F + 4.0 * q,
                _ => return Err(Error::Usage("one of --phi22 or --af is required".into())),
            };
            let spec = SweepSpec {
                kinds,
                n_list: cfg.n_list.clone(),
                k_rule: cfg.k_rule()?,
                phi2_f: cfg.phi2_F,
                af_ratio: af / cfg.phi2_F,
                precond: cfg.precond,
                alpha_rule: cfg.step_rule()?,
            };
            let t = scaling_sweep(&spec);
            let mut w = output(&cfg)?;
            match cfg.format {
                Format::Json => write_json(&mut *w, &t)?,
                Format::Csv => t.write_csv(&mut *w)?,
            }
            for (k, s) in &t.slopes {
                eprintln!("slope {k}: {}", s.map_or("n/a".to_string(), |s| format!("{s:.4}")));
            }
        }
        "dump-operator" => {
            let p = cfg.params()?;
            let kind: OperatorKind = cfg.kind.as_deref().unwrap_or("qcf").parse()?;
            let m = assemble(&p, kind).matrix;
            let mut wr = csv_writer(output(&cfg)?);
            wr.write_record(["kind", "N", "K", "phi2_F", "phi2_2F"]).map_err(io_err)?;
            wr.write_record([kind.to_string(), p.n.to_string(), p.k.to_string(), fmt_f64(p.phi2_f), fmt_f64(p.phi2_2f)])
                .map_err(io_err)?;
            for r in m.row_iter() {
                wr.write_record(r.iter().map(|x| fmt_f64(*x))).map_err(io_err)?;
            }
            wr.flush().map_err(|e| Error::Io(e.to_string()))?;
        }
        "figure" => {
            let id = cfg.figure.ok_or_else(|| Error::Usage("--figure 1..4 is required".into()))?;
            let mut w = output(&cfg)?;
            match id {
                1 => {
                    let f = figure1()?;
                    f.write_csv(&mut *w)?;
                    for ((k, t), q) in f.traces.iter().zip(&f.predicted) {
                        let m = measured_rate(t, NormKind::new(0, P::Two))?;
                        eprintln!("K={k}: measured rate {:.8}, predicted {:.8}", m.rate, q);
                    }
                }
                2 => {
                    let t = figure2(FIG2_STEPS)?;
                    t.write_csv(&mut *w)?;
                }
                3 => {
                    let t = figure3(&cfg.n_list);
                    t.write_csv(&mut *w)?;
                    for (k, s) in &t.slopes {
                        eprintln!("slope {k}: {}", s.map_or("n/a".to_string(), |s| format!("{s:.4}")));
                    }
                }
                4 => {
                    let f = figure4()?;
                    f.write_csv(&mut *w)?;
                    eprintln!("unit crossing (2,1): {}", f.crossing.map_or("none".into(), |a| format!("A_F = {a:.4}")));
                }
                _ => return Err(Error::Usage(format!("unknown figure {id}"))),
            }
        }
        _ => unreachable!(),
    }
    Ok(status)
}
