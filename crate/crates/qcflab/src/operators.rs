//! Linearized QC operators on the interior displacement space, ghost forces,
//! and strain-space (conjugate) representations.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Displacement, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OperatorKind {
    Atom,
    Laplacian,
    Qcl,
    Qnl,
    Qce,
    Qcf,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::Atom,
        OperatorKind::Laplacian,
        OperatorKind::Qcl,
        OperatorKind::Qnl,
        OperatorKind::Qce,
        OperatorKind::Qcf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Atom => "ATOM",
            OperatorKind::Laplacian => "LAPLACIAN",
            OperatorKind::Qcl => "QCL",
            OperatorKind::Qnl => "QNL",
            OperatorKind::Qce => "QCE",
            OperatorKind::Qcf => "QCF",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()) || (s.eq_ignore_ascii_case("atom") && *k == OperatorKind::Atom))
            .ok_or_else(|| Error::InvalidKind(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Operator {
    pub kind: OperatorKind,
    pub matrix: DMatrix<f64>,
    pub params: ModelParams,
}

impl Operator {
    pub fn apply(&self, u: &Displacement) -> Displacement {
        &self.matrix * u
    }
}

/// Adds `v` at (j, k) when k is an interior site; other references hit the
/// boundary or ghost zeros and drop out.
fn put(m: &mut DMatrix<f64>, p: &ModelParams, j: isize, k: isize, v: f64) {
    let lim = p.n as isize - 1;
    if k.abs() <= lim {
        let (a, b) = (p.idx(j), p.idx(k));
        m[(a, b)] += v;
    }
}

const LAP: [(isize, f64); 3] = [(1, -1.0), (0, 2.0), (-1, -1.0)];
const LAP2: [(isize, f64); 3] = [(2, -1.0), (0, 2.0), (-2, -1.0)];

fn atom_row(m: &mut DMatrix<f64>, p: &ModelParams, j: isize) {
    let e2 = (p.n * p.n) as f64;
    for (o, c) in LAP {
        put(m, p, j, j + o, p.phi2_f * c * e2);
    }
    for (o, c) in LAP2 {
        put(m, p, j, j + o, p.phi2_2f * c * e2);
    }
}

fn qcl_row(m: &mut DMatrix<f64>, p: &ModelParams, j: isize) {
    let e2 = (p.n * p.n) as f64;
    let af = p.a_f();
    for (o, c) in LAP {
        put(m, p, j, j + o, af * (c * e2));
    }
}

fn laplacian(p: &ModelParams) -> DMatrix<f64> {
    let n = p.dim();
    let e2 = (p.n * p.n) as f64;
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * e2,
        1 => -e2,
        _ => 0.0,
    })
}

fn sites(p: &ModelParams) -> std::ops::RangeInclusive<isize> {
    -(p.n as isize) + 1..=p.n as isize - 1
}

fn atom(p: &ModelParams) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p.dim(), p.dim());
    for j in sites(p) {
        atom_row(&mut m, p, j);
    }
    m
}

fn qcf(p: &ModelParams) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p.dim(), p.dim());
    for j in sites(p) {
        if j.unsigned_abs() <= p.k {
            atom_row(&mut m, p, j);
        } else {
            qcl_row(&mut m, p, j);
        }
    }
    m
}

fn qnl(p: &ModelParams) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p.dim(), p.dim());
    let e2 = (p.n * p.n) as f64;
    let (p1, p2) = (p.phi2_f, p.phi2_2f);
    let k = p.k as isize;
    for jj in 0..p.n as isize {
        let signs: &[isize] = if jj > 0 { &[1, -1] } else { &[1] };
        for &s in signs {
            let j = s * jj;
            // offsets are mirrored on the negative side
            let mut st = |stencil: &[(isize, f64)], f: f64| {
                for &(o, c) in stencil {
                    put(&mut m, p, j, j + s * o, f * c * e2);
                }
            };
            st(&LAP, p1);
            if jj < k {
                st(&LAP2, p2);
            } else if jj == k {
                st(&LAP2, p2);
                st(&[(2, -1.0), (1, 2.0), (0, -1.0)], -p2);
            } else if jj == k + 1 {
                st(&LAP, 4.0 * p2);
                st(&[(0, -1.0), (-1, 2.0), (-2, -1.0)], p2);
            } else {
                st(&LAP, 4.0 * p2);
            }
        }
    }
    // mirrored accumulation orders differ by rounding; make the symmetry exact
    debug_assert!((&m - m.transpose()).amax() <= 1e-12 * m.amax());
    (&m + m.transpose()) * 0.5
}

/// Strain-space Hessian H (2N×2N) of the QCE energy: ⟨L^qce u, u⟩ = ε (u′)ᵀ H u′.
///
/// Nearest-neighbour bonds carry φ″_F. Each atom carries half of its two
/// second-neighbour bonds: atomistic sites |l| ≤ K with the true bonds
/// w_{l−1}+w_l and w_{l+1}+w_{l+2}, continuum sites with the Cauchy–Born
/// substitute 2w, i.e. 4φ″_2F w². Boundary atoms ±N are continuum.
pub fn strain_hessian(p: &ModelParams) -> DMatrix<f64> {
    let n2 = p.strain_dim();
    let nn = p.n as isize;
    let mut h = DMatrix::zeros(n2, n2);
    let mut sq = |terms: &[isize], c: f64| {
        for &l1 in terms {
            for &l2 in terms {
                if (-nn + 1..=nn).contains(&l1) && (-nn + 1..=nn).contains(&l2) {
                    h[((l1 + nn - 1) as usize, (l2 + nn - 1) as usize)] += c;
                }
            }
        }
    };
    for l in -nn + 1..=nn {
        sq(&[l], p.phi2_f);
    }
    let half = 0.5 * p.phi2_2f;
    for l in -nn + 1..nn {
        if l.unsigned_abs() <= p.k {
            sq(&[l - 1, l], half);
            sq(&[l + 1, l + 2], half);
        } else {
            sq(&[l], 4.0 * half);
            sq(&[l + 1], 4.0 * half);
        }
    }
    sq(&[-nn + 1], 4.0 * half);
    sq(&[nn], 4.0 * half);
    h
}

/// Difference matrix D (2N × (2N−1)): D u = u′.
pub fn difference_matrix(p: &ModelParams) -> DMatrix<f64> {
    let n = p.dim();
    let inv = p.n as f64;
    DMatrix::from_fn(n + 1, n, |l, a| {
        if a == l {
            inv
        } else if a + 1 == l {
            -inv
        } else {
            0.0
        }
    })
}

/// Dᵀ H D for a tridiagonal strain matrix H, assembled symmetrically.
fn pull_back(p: &ModelParams, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.dim();
    let inv = p.n as f64;
    // D[l][a] = inv (l = a), −inv (l = a+1)
    let dcol = |a: usize| [(a, inv), (a + 1, -inv)];
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..(a + 4).min(n) {
            let mut s = 0.0;
            for (l, x) in dcol(a) {
                for (k, y) in dcol(b) {
                    s += x * h[(l, k)] * y;
                }
            }
            m[(a, b)] = s;
            m[(b, a)] = s;
        }
    }
    m
}

fn qce(p: &ModelParams) -> DMatrix<f64> {
    pull_back(p, &strain_hessian(p))
}

/// Dense assembly of a linearized operator.
pub fn assemble(params: &ModelParams, kind: OperatorKind) -> Operator {
    let matrix = match kind {
        OperatorKind::Atom => atom(params),
        OperatorKind::Laplacian => laplacian(params),
        OperatorKind::Qcl => laplacian(params) * params.a_f(),
        OperatorKind::Qnl => qnl(params),
        OperatorKind::Qce => qce(params),
        OperatorKind::Qcf => qcf(params),
    };
    Operator { kind, matrix, params: *params }
}

/// Solves L¹ x = b with the tridiagonal Laplacian.
pub fn solve_laplacian(params: &ModelParams, b: &[f64]) -> Result<Vec<f64>> {
    let n = params.dim();
    let e2 = (params.n * params.n) as f64;
    crate::linalg::solve_tridiagonal(&vec![2.0 * e2; n], &vec![-e2; n - 1], b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GhostForceVector {
    pub values: DVector<f64>,
    pub phi1_2f: f64,
}

/// Ghost forces of QCE under uniform strain.
///
/// The right interface contributes ∓φ′_2F/(2ε) at K−1..K+2; the left
/// interface is its mirror image with flipped sign. For K = 1 the two
/// contributions at site 0 cancel.
pub fn ghost_forces(params: &ModelParams, phi1_2f: f64) -> Result<GhostForceVector> {
    let k = params.k as isize;
    if params.k + 2 > params.n - 1 {
        return Err(Error::Reject(format!("ghost forces need K + 2 <= N - 1 (K = {}, N = {})", params.k, params.n)));
    }
    let g = phi1_2f / (2.0 * params.eps());
    let mut values = DVector::zeros(params.dim());
    for (j, c) in [(k - 1, -g), (k, g), (k + 1, g), (k + 2, -g)] {
        values[params.idx(j)] += c;
        values[params.idx(-j)] -= c;
    }
    Ok(GhostForceVector { values, phi1_2f })
}

/// Integrates a strain vector: u_j = ε Σ_{ℓ ≤ j} w_ℓ (2N−1 entries).
pub fn integrate_strain(params: &ModelParams, w: &[f64]) -> Displacement {
    let eps = params.eps();
    let mut acc = 0.0;
    DVector::from_iterator(
        params.dim(),
        w.iter().take(params.dim()).map(|x| {
            acc += x;
            eps * acc
        }),
    )
}

/// Strain-space form of (L¹)⁻¹L^qcf from the variational representation,
/// valid for arbitrary (not only mean-zero) strain vectors.
fn preconl_strain(p: &ModelParams, w: &[f64]) -> Vec<f64> {
    let nn = p.n as isize;
    let k = p.k as isize;
    let (p1, p2) = (p.phi2_f, p.phi2_2f);
    let eps = p.eps();
    let at = |l: isize| w[(l + nn - 1) as usize];
    let mut z: Vec<f64> = (-nn + 1..=nn)
        .map(|l| {
            if (-k + 1..=k).contains(&l) {
                p1 * at(l) + p2 * (at(l - 1) + 2.0 * at(l) + at(l + 1))
            } else {
                p.a_f() * at(l)
            }
        })
        .collect();
    let mean = 0.5 * eps * p2 * (at(k + 1) - at(k) - at(-k + 1) + at(-k));
    let am = at(-k + 1) - 2.0 * at(-k) + at(-k - 1);
    let ap = at(k + 2) - 2.0 * at(k + 1) + at(k);
    let ek = eps * k as f64;
    for (i, zl) in z.iter_mut().enumerate() {
        let l = i as isize - nn + 1;
        let hm = if l <= -k { 0.5 * (1.0 + ek) } else { 0.5 * (-1.0 + ek) };
        let hp = if l <= k { 0.5 * (1.0 - ek) } else { 0.5 * (-1.0 - ek) };
        *zl += p2 * (am * hm - ap * hp) - mean;
    }
    z
}

/// z = (L¹)⁻¹ L^qcf u in O(N) without assembling matrices.
pub fn apply_inv_lap_qcf(params: &ModelParams, u: &Displacement) -> Result<Displacement> {
    params.check(u)?;
    let w = model::strain(params, u);
    Ok(integrate_strain(params, &preconl_strain(params, w.as_slice())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConjugateKind {
    /// (L¹)⁻¹ L^qcf
    QcfPreconl,
    QceOp,
    QcfOp,
    QnlOp,
}

impl FromStr for ConjugateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "QCF_PRECONL" => Ok(ConjugateKind::QcfPreconl),
            "QCE_OP" => Ok(ConjugateKind::QceOp),
            "QCF_OP" => Ok(ConjugateKind::QcfOp),
            "QNL_OP" => Ok(ConjugateKind::QnlOp),
            _ => Err(Error::InvalidKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrainOperator {
    pub matrix: DMatrix<f64>,
    pub kind: ConjugateKind,
    /// The conjugate relation Ĥ u′ = (H u)′ is guaranteed on mean-zero strains only.
    pub exact_on_mean_zero: bool,
}

/// Ĥ = D X D⁺ P + c Π where P removes the mean, D⁺ integrates and Π = 11ᵀ/(2N).
///
/// On mean-zero strains Ĥ acts as the conjugate of X; constants are mapped to
/// c times themselves.
pub fn conjugate_matrix(params: &ModelParams, x: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
    let n = params.dim();
    let n2 = n + 1;
    let inv = params.n as f64;
    let eps = params.eps();
    // Y = D X  (2N × n)
    let y = DMatrix::from_fn(n2, n, |l, j| {
        let hi = if l < n { x[(l, j)] } else { 0.0 };
        let lo = if l > 0 { x[(l - 1, j)] } else { 0.0 };
        inv * (hi - lo)
    });
    // Z = ε Y C,  (YC)[l][m] = Σ_{j ≥ m} Y[l][j]
    let mut z = DMatrix::zeros(n2, n2);
    for l in 0..n2 {
        let mut acc = 0.0;
        for m in (0..n).rev() {
            acc += y[(l, m)];
            z[(l, m)] = eps * acc;
        }
    }
    // Z P + c Π
    let pi = 1.0 / n2 as f64;
    for l in 0..n2 {
        let mean = z.row(l).sum() * pi;
        for m in 0..n2 {
            z[(l, m)] += c * pi - mean;
        }
    }
    z
}

pub fn conjugate_strain_operator(params: &ModelParams, kind: ConjugateKind) -> StrainOperator {
    let matrix = match kind {
        ConjugateKind::QcfPreconl => {
            let n2 = params.strain_dim();
            let mut m = DMatrix::zeros(n2, n2);
            let mut e = vec![0.0; n2];
            for c in 0..n2 {
                e[c] = 1.0;
                m.set_column(c, &DVector::from_vec(preconl_strain(params, &e)));
                e[c] = 0.0;
            }
            m
        }
        ConjugateKind::QceOp => conjugate_matrix(params, &assemble(params, OperatorKind::Qce).matrix, 1.0),
        ConjugateKind::QcfOp => conjugate_matrix(params, &assemble(params, OperatorKind::Qcf).matrix, 1.0),
        ConjugateKind::QnlOp => conjugate_matrix(params, &assemble(params, OperatorKind::Qnl).matrix, 1.0),
    };
    StrainOperator { matrix, kind, exact_on_mean_zero: true }
}

/// Quadratic form ⟨L u, u⟩ from the energy decompositions (not the matrix).
pub fn form_oracle(params: &ModelParams, kind: OperatorKind, u: &Displacement) -> Result<f64> {
    let fd = model::finite_differences(params, u)?;
    let eps = params.eps();
    let (af, p2) = (params.a_f(), params.phi2_2f);
    let sq = |v: &DVector<f64>| eps * v.norm_squared();
    match kind {
        OperatorKind::Atom => Ok(af * sq(&fd.strain) - eps * eps * p2 * sq(&fd.extended_curvature)),
        OperatorKind::Qce => {
            let nn = params.n as isize;
            let k = params.k as isize;
            let w = |l: isize| fd.strain[(l + nn - 1) as usize];
            let dw = |l: isize| w(l + 1) - w(l);
            let mut s = 0.0;
            for l in (-nn + 1..=-k - 2).chain(k + 3..=nn).chain(-k + 2..=k - 1) {
                s += af * w(l) * w(l);
            }
            s += (af - p2) * (w(-k + 1).powi(2) + w(k).powi(2));
            s += af * (w(-k).powi(2) + w(k + 1).powi(2));
            s += (af + p2) * (w(-k - 1).powi(2) + w(k + 2).powi(2));
            for l in -k + 1..=k - 1 {
                s -= p2 * dw(l).powi(2);
            }
            for l in [-k - 1, -k, k, k + 1] {
                s -= 0.5 * p2 * dw(l).powi(2);
            }
            Ok(eps * s)
        }
        other => Err(Error::InvalidKind(other.to_string())),
    }
}
