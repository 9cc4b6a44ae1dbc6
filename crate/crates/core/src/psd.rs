//! Small dense solver for concave log-trace objectives over the set of
//! complex Hermitian PSD matrices with unit diagonal.
//!
//! The matrix is factored as `X = V V^H` with unit-norm rows, which keeps
//! both the PSD and the unit-diagonal constraints exact. Trace inequalities
//! are handled by a log barrier whose weight is driven to zero, preceded by
//! a softmin phase that finds a strictly feasible start or certifies that
//! none exists. Every exit carries a duality-gap bound computed from the
//! gradient at the returned point.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, Error, PartialEq)]
pub enum PsdError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported problem: {0}")]
    Unsupported(String),
}

/// Complex Hermitian matrix, stored exactly conjugate-symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Relative asymmetry accepted by [`HermitianMatrix::new`].
    pub const TOL: f64 = 1e-12;

    pub fn new(m: CMatrix) -> Result<Self, PsdError> {
        if !m.is_square() {
            return Err(PsdError::NotSquare(m.nrows(), m.ncols()));
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let asym = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > Self::TOL * scale {
            return Err(PsdError::NotHermitian(asym / scale.max(f64::MIN_POSITIVE)));
        }
        Ok(Self::symmetrized(m))
    }

    fn symmetrized(m: CMatrix) -> Self {
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        Self(h)
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    /// `scale * v v^H`
    pub fn from_outer(v: &[Complex64], scale: f64) -> Self {
        let v = CVector::from_column_slice(v);
        Self::symmetrized(&v * v.adjoint() * Complex64::new(scale, 0.0))
    }

    /// `V V^H`
    pub fn from_factor(v: &CMatrix) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// `Re Tr(self * other)`
    pub fn trace_with(&self, other: &HermitianMatrix) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.0[(i, j)] * other.0[(j, i)]).re;
            }
        }
        acc
    }

    /// `v^H self v`
    pub fn quad_form(&self, v: &[Complex64]) -> f64 {
        let v = CVector::from_column_slice(v);
        (v.adjoint() * &self.0 * &v)[(0, 0)].re
    }

    /// Eigenvalues ascending with matching eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, CMatrix) {
        let eig = self.0.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_columns(
            &order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>(),
        );
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    pub fn is_psd(&self, rel_tol: f64) -> bool {
        self.dim() == 0 || self.min_eigenvalue() >= -rel_tol * self.trace().abs().max(1.0)
    }

    pub fn max_diag_deviation(&self) -> f64 {
        self.0.diagonal().iter().map(|z| (z - 1.0).norm()).fold(0.0, f64::max)
    }
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
pub fn project_psd(h: &HermitianMatrix) -> HermitianMatrix {
    let (values, vectors) = h.eigen();
    let clipped = DVector::from_iterator(
        values.len(),
        values.iter().map(|&l| Complex64::new(l.max(0.0), 0.0)),
    );
    HermitianMatrix::symmetrized(&vectors * CMatrix::from_diagonal(&clipped) * vectors.adjoint())
}

/// A Hermitian operator `A` entering the problem through `Tr(X A)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceOperator {
    Dense(HermitianMatrix),
    /// `scale * v v^H`
    RankOne { vector: CVector, scale: f64 },
}

impl TraceOperator {
    pub fn rank_one(v: &[Complex64], scale: f64) -> Self {
        Self::RankOne {
            vector: CVector::from_column_slice(v),
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(a) => a.dim(),
            Self::RankOne { vector, .. } => vector.len(),
        }
    }

    pub fn to_dense(&self) -> HermitianMatrix {
        match self {
            Self::Dense(a) => a.clone(),
            Self::RankOne { vector, scale } => HermitianMatrix::from_outer(vector.as_slice(), *scale),
        }
    }

    /// Upper bound on `|Tr(X A)|` over unit-diagonal PSD `X`.
    fn magnitude(&self) -> f64 {
        match self {
            Self::Dense(a) => self.dim() as f64 * a.0.norm(),
            Self::RankOne { vector, scale } => scale.abs() * vector.norm_squared(),
        }
    }

    /// `Tr(X A)`
    pub fn eval(&self, x: &HermitianMatrix) -> f64 {
        match self {
            Self::Dense(a) => x.trace_with(a),
            Self::RankOne { vector, scale } => scale * x.quad_form(vector.as_slice()),
        }
    }

    /// `Tr(V V^H A)`
    fn eval_factor(&self, v: &CMatrix) -> f64 {
        match self {
            Self::Dense(a) => {
                let av = &a.0 * v;
                v.iter().zip(av.iter()).map(|(x, y)| (x.conj() * y).re).sum()
            }
            Self::RankOne { vector, scale } => scale * (vector.adjoint() * v).norm_squared(),
        }
    }

    /// `coef * A V` added into `out`.
    fn accumulate_apply(&self, v: &CMatrix, coef: f64, out: &mut CMatrix) {
        if coef == 0.0 {
            return;
        }
        match self {
            Self::Dense(a) => *out += &a.0 * v * Complex64::new(coef, 0.0),
            Self::RankOne { vector, scale } => {
                let w = vector.adjoint() * v;
                *out += vector * w * Complex64::new(coef * scale, 0.0);
            }
        }
    }

    fn accumulate_dense(&self, coef: f64, out: &mut CMatrix) {
        if coef == 0.0 {
            return;
        }
        match self {
            Self::Dense(a) => *out += &a.0 * Complex64::new(coef, 0.0),
            Self::RankOne { vector, scale } => *out += vector * vector.adjoint() * Complex64::new(coef * scale, 0.0),
        }
    }
}

/// `weight * log2(Tr(X A) + offset)`
#[derive(Debug, Clone, PartialEq)]
pub struct LogTerm {
    pub weight: f64,
    pub op: TraceOperator,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    AtLeast,
    AtMost,
}

/// `Tr(X A) >= bound` or `Tr(X A) <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConstraint {
    pub op: TraceOperator,
    pub bound: f64,
    pub sense: Sense,
}

impl TraceConstraint {
    fn sign(&self) -> f64 {
        match self.sense {
            Sense::AtLeast => 1.0,
            Sense::AtMost => -1.0,
        }
    }

    fn scale(&self) -> f64 {
        self.bound.abs().max(self.op.magnitude()).max(f64::MIN_POSITIVE)
    }

    /// Slack divided by the constraint scale; nonnegative when satisfied.
    pub fn scaled_slack(&self, x: &HermitianMatrix) -> f64 {
        self.sign() * (self.op.eval(x) - self.bound) / self.scale()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceProblem {
    pub dim: usize,
    pub log_terms: Vec<LogTerm>,
    /// Adds `Tr(X L)` to the objective.
    pub linear: Option<TraceOperator>,
    pub constraints: Vec<TraceConstraint>,
    pub unit_diag: bool,
    pub psd: bool,
}

impl TraceProblem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            log_terms: Vec::new(),
            linear: None,
            constraints: Vec::new(),
            unit_diag: true,
            psd: true,
        }
    }

    pub fn objective(&self, x: &HermitianMatrix) -> f64 {
        let logs: f64 = self
            .log_terms
            .iter()
            .map(|t| {
                let arg = t.op.eval(x) + t.offset;
                if arg > 0.0 {
                    t.weight * arg.log2()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum();
        logs + self.linear.as_ref().map_or(0.0, |l| l.eval(x))
    }

    /// Largest scaled violation over trace constraints, unit diagonal and PSD.
    pub fn max_violation(&self, x: &HermitianMatrix) -> f64 {
        let cons = self
            .constraints
            .iter()
            .map(|c| -c.scaled_slack(x))
            .fold(0.0, f64::max);
        let diag = if self.unit_diag { x.max_diag_deviation() } else { 0.0 };
        let psd = if self.psd {
            (-x.min_eigenvalue() / x.trace().abs().max(1.0)).max(0.0)
        } else {
            0.0
        };
        cons.max(diag).max(psd)
    }

    fn validate(&self) -> Result<(), PsdError> {
        if !(self.unit_diag && self.psd) {
            return Err(PsdError::Unsupported(
                "only unit-diagonal PSD problems are handled".into(),
            ));
        }
        if self.dim == 0 {
            return Err(PsdError::Unsupported("empty problem".into()));
        }
        let ops = self
            .log_terms
            .iter()
            .map(|t| &t.op)
            .chain(self.linear.iter())
            .chain(self.constraints.iter().map(|c| &c.op));
        for op in ops {
            if op.dim() != self.dim {
                return Err(PsdError::DimensionMismatch {
                    expected: self.dim,
                    found: op.dim(),
                });
            }
        }
        for t in &self.log_terms {
            if !(t.weight >= 0.0 && t.weight.is_finite() && t.offset >= 0.0 && t.offset.is_finite()) {
                return Err(PsdError::Unsupported(
                    "log terms need a finite nonnegative weight and offset".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdTolerances {
    /// Certified relative gap `gap / (1 + |objective|)`.
    pub gap_tol: f64,
    pub max_iters: usize,
    pub barrier_init: f64,
    pub barrier_decay: f64,
    /// Factor width; `None` picks `ceil(sqrt(2M)) + 2`.
    pub rank: Option<usize>,
    pub seed: u64,
}

impl Default for PsdTolerances {
    fn default() -> Self {
        Self {
            gap_tol: 1e-4,
            max_iters: 20_000,
            barrier_init: 1e-2,
            barrier_decay: 0.1,
            rank: None,
            seed: 0x5eed_0f_5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Certified,
    NonCertified,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub solution: HermitianMatrix,
    /// Row-normalized factor with `solution = factor factor^H`.
    pub factor: CMatrix,
    pub objective: f64,
    /// Relative gap bound; infinite when infeasible.
    pub certificate: f64,
    pub iterations: usize,
    /// Barrier-penalized objective after every accepted step.
    pub objective_trace: Vec<f64>,
    /// For infeasible exits: upper bound on a convex combination of the
    /// scaled slacks over the whole feasible set. Negative is a proof of
    /// infeasibility; otherwise the set has no reachable interior.
    pub infeasibility_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    PhaseOne { beta: f64 },
    Barrier { tau: f64 },
}

struct Model<'a> {
    p: &'a TraceProblem,
    scales: Vec<f64>,
}

struct Coefficients {
    logs: Vec<f64>,
    linear: f64,
    cons: Vec<f64>,
}

struct Certificate {
    /// `sum(mu) - sum(w b)` style upper bound, used by the feasibility phase.
    upper: f64,
    direction: CVector,
}

impl<'a> Model<'a> {
    fn new(p: &'a TraceProblem) -> Self {
        Self {
            p,
            scales: p.constraints.iter().map(TraceConstraint::scale).collect(),
        }
    }

    fn slacks(&self, v: &CMatrix) -> Vec<f64> {
        self.p
            .constraints
            .iter()
            .zip(&self.scales)
            .map(|(c, s)| c.sign() * (c.op.eval_factor(v) - c.bound) / s)
            .collect()
    }

    fn objective(&self, v: &CMatrix) -> f64 {
        let logs: f64 = self
            .p
            .log_terms
            .iter()
            .map(|t| {
                let arg = t.op.eval_factor(v) + t.offset;
                if arg > 0.0 {
                    t.weight * arg.log2()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum();
        logs + self.p.linear.as_ref().map_or(0.0, |l| l.eval_factor(v))
    }

    fn value(&self, v: &CMatrix, mode: Mode) -> f64 {
        let s = self.slacks(v);
        match mode {
            Mode::PhaseOne { beta } => softmin(&s, beta),
            Mode::Barrier { tau } => {
                if s.iter().any(|&x| x <= 0.0) {
                    return f64::NEG_INFINITY;
                }
                self.objective(v) + tau * s.iter().map(|x| (x / 2.0).ln()).sum::<f64>()
            }
        }
    }

    fn coefficients(&self, v: &CMatrix, mode: Mode) -> Coefficients {
        let s = self.slacks(v);
        let signed = |k: usize, w: f64| w * self.p.constraints[k].sign() / self.scales[k];
        match mode {
            Mode::PhaseOne { beta } => {
                let m = s.iter().copied().fold(f64::INFINITY, f64::min);
                let e: Vec<f64> = s.iter().map(|x| (-beta * (x - m)).exp()).collect();
                let z: f64 = e.iter().sum();
                Coefficients {
                    logs: vec![0.0; self.p.log_terms.len()],
                    linear: 0.0,
                    cons: e.iter().enumerate().map(|(k, w)| signed(k, w / z)).collect(),
                }
            }
            Mode::Barrier { tau } => Coefficients {
                logs: self
                    .p
                    .log_terms
                    .iter()
                    .map(|t| t.weight / ((t.op.eval_factor(v) + t.offset) * std::f64::consts::LN_2))
                    .collect(),
                linear: 1.0,
                cons: s.iter().enumerate().map(|(k, x)| signed(k, tau / x)).collect(),
            },
        }
    }

    /// `grad(X) V`
    fn grad_times(&self, v: &CMatrix, c: &Coefficients) -> CMatrix {
        let mut out = CMatrix::zeros(v.nrows(), v.ncols());
        for (t, w) in self.p.log_terms.iter().zip(&c.logs) {
            t.op.accumulate_apply(v, *w, &mut out);
        }
        if let Some(l) = &self.p.linear {
            l.accumulate_apply(v, c.linear, &mut out);
        }
        for (k, w) in self.p.constraints.iter().zip(&c.cons) {
            k.op.accumulate_apply(v, *w, &mut out);
        }
        out
    }

    fn dense_grad(&self, c: &Coefficients) -> CMatrix {
        let n = self.p.dim;
        let mut out = CMatrix::zeros(n, n);
        for (t, w) in self.p.log_terms.iter().zip(&c.logs) {
            t.op.accumulate_dense(*w, &mut out);
        }
        if let Some(l) = &self.p.linear {
            l.accumulate_dense(c.linear, &mut out);
        }
        for (k, w) in self.p.constraints.iter().zip(&c.cons) {
            k.op.accumulate_dense(*w, &mut out);
        }
        out
    }

    /// Dual bound at `V` for the linearization `Tr(X C)`, `C` the gradient.
    fn certificate(&self, v: &CMatrix, mode: Mode) -> Certificate {
        let (s, mu, c) = self.dual_slack(v, mode);
        let (values, vectors) = HermitianMatrix::symmetrized(s).eigen();
        let eig_gap = self.p.dim as f64 * (-values[0]).max(0.0);
        let offset: f64 = match mode {
            Mode::PhaseOne { .. } => self
                .p
                .constraints
                .iter()
                .zip(&c.cons)
                .map(|(k, w)| w * k.bound)
                .sum(),
            Mode::Barrier { .. } => 0.0,
        };
        Certificate {
            upper: mu.iter().sum::<f64>() + eig_gap - offset,
            direction: vectors.column(0).into_owned(),
        }
    }

    /// `eig_gap` of [`Model::certificate`] without the eigenvectors.
    fn eig_gap(&self, v: &CMatrix, mode: Mode) -> f64 {
        let (s, _, _) = self.dual_slack(v, mode);
        self.p.dim as f64 * (-HermitianMatrix::symmetrized(s).min_eigenvalue()).max(0.0)
    }

    /// `Diag(mu) - C` with `mu` the row-wise multipliers of the unit diagonal.
    fn dual_slack(&self, v: &CMatrix, mode: Mode) -> (CMatrix, Vec<f64>, Coefficients) {
        let c = self.coefficients(v, mode);
        let g = self.dense_grad(&c);
        let gv = &g * v;
        let n = self.p.dim;
        let mu: Vec<f64> = (0..n)
            .map(|m| (0..v.ncols()).map(|l| (gv[(m, l)] * v[(m, l)].conj()).re).sum())
            .collect();
        let mut s = -g;
        for (m, x) in mu.iter().enumerate() {
            s[(m, m)] += x;
        }
        (s, mu, c)
    }
}

fn softmin(s: &[f64], beta: f64) -> f64 {
    if s.is_empty() {
        return f64::INFINITY;
    }
    let m = s.iter().copied().fold(f64::INFINITY, f64::min);
    m - s.iter().map(|x| (-beta * (x - m)).exp()).sum::<f64>().ln() / beta
}

fn normalize_rows(v: &mut CMatrix) {
    for mut row in v.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= Complex64::new(n, 0.0);
        }
    }
}

/// Projection of `g` onto the tangent space of the unit-row manifold at `v`.
fn tangent(v: &CMatrix, g: &CMatrix) -> CMatrix {
    let mut out = g.clone();
    for m in 0..v.nrows() {
        let inner: f64 = (0..v.ncols()).map(|l| (v[(m, l)].conj() * g[(m, l)]).re).sum();
        for l in 0..v.ncols() {
            out[(m, l)] -= v[(m, l)] * inner;
        }
    }
    out
}

fn real_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn seeded_factor(n: usize, k: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = CMatrix::from_fn(n, k, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    normalize_rows(&mut v);
    v
}

enum AscentEnd {
    Stopped,
    Stagnated,
    Budget,
}

/// Riemannian gradient ascent with Barzilai-Borwein steps and Armijo
/// backtracking. `stop` sees the iterate every `check_every` steps.
fn ascend(
    model: &Model,
    v: &mut CMatrix,
    mode: Mode,
    budget: usize,
    check_every: usize,
    iterations: &mut usize,
    trace: &mut Vec<f64>,
    mut stop: impl FnMut(&CMatrix) -> bool,
) -> AscentEnd {
    let mut val = model.value(v, mode);
    let mut prev: Option<(CMatrix, CMatrix)> = None;
    let mut flat = 0;
    for it in 0..budget {
        if it % check_every == 0 && stop(v) {
            return AscentEnd::Stopped;
        }
        let g = tangent(v, &(model.grad_times(v, &model.coefficients(v, mode)) * Complex64::new(2.0, 0.0)));
        let gn2 = g.norm_squared();
        if !(gn2 > 0.0 && gn2.is_finite()) {
            return AscentEnd::Stagnated;
        }
        let mut alpha = match &prev {
            Some((vp, gp)) => {
                let s = &*v - vp;
                let y = &g - gp;
                let sy = real_inner(&s, &y).abs();
                if sy > 0.0 {
                    s.norm_squared() / sy
                } else {
                    1.0 / gn2.sqrt()
                }
            }
            None => 0.1 / gn2.sqrt(),
        };
        alpha = alpha.clamp(1e-14 / gn2.sqrt(), 1e3 / gn2.sqrt());
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = &*v + &g * Complex64::new(alpha, 0.0);
            normalize_rows(&mut cand);
            let cv = model.value(&cand, mode);
            if cv >= val + 1e-4 * alpha * gn2 {
                accepted = Some((cand, cv));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, cv)) = accepted else {
            return AscentEnd::Stagnated;
        };
        *iterations += 1;
        if cv - val <= 1e-15 * (1.0 + val.abs()) {
            flat += 1;
            if flat >= 20 {
                *v = cand;
                return AscentEnd::Stagnated;
            }
        } else {
            flat = 0;
        }
        prev = Some((std::mem::replace(v, cand), g));
        val = cv;
        trace.push(cv);
    }
    AscentEnd::Budget
}

/// Solve from the built-in seeded start.
pub fn solve_trace_problem(p: &TraceProblem, tol: &PsdTolerances) -> Result<SolveReport, PsdError> {
    solve_trace_problem_from(p, tol, None)
}

/// Solve from `start` (any factor with `dim` rows; rows are renormalized).
pub fn solve_trace_problem_from(
    p: &TraceProblem,
    tol: &PsdTolerances,
    start: Option<&CMatrix>,
) -> Result<SolveReport, PsdError> {
    p.validate()?;
    let n = p.dim;
    let k = tol
        .rank
        .unwrap_or(((2 * n) as f64).sqrt().ceil() as usize + 2)
        .clamp(1, n);
    let mut v = match start {
        Some(s) if s.nrows() == n && s.ncols() > 0 => {
            let mut s = s.clone();
            normalize_rows(&mut s);
            if s.iter().all(|z| z.is_finite()) && s.row_iter().all(|r| r.norm() > 0.0) {
                s
            } else {
                seeded_factor(n, k, tol.seed)
            }
        }
        Some(s) if s.nrows() != n => {
            return Err(PsdError::DimensionMismatch {
                expected: n,
                found: s.nrows(),
            })
        }
        _ => seeded_factor(n, k, tol.seed),
    };
    let model = Model::new(p);
    let mut iterations = 0;
    let mut trace = Vec::new();
    let report = |v: CMatrix, status, certificate, iterations, trace| {
        let solution = HermitianMatrix::from_factor(&v);
        SolveReport {
            status,
            objective: p.objective(&solution),
            solution,
            factor: v,
            certificate,
            iterations,
            objective_trace: trace,
            infeasibility_bound: None,
        }
    };

    // strictly feasible start
    let margin = 1e-3;
    let min_slack = |v: &CMatrix| model.slacks(v).into_iter().fold(f64::INFINITY, f64::min);
    if !p.constraints.is_empty() && min_slack(&v) <= margin {
        let mode = Mode::PhaseOne { beta: 50.0 };
        let mut scratch = Vec::new();
        ascend(&model, &mut v, mode, tol.max_iters, 1, &mut iterations, &mut scratch, |v| {
            min_slack(v) >= margin
        });
        if min_slack(&v) <= 0.0 {
            let bound = model.certificate(&v, mode).upper;
            let mut r = report(v, SolveStatus::Infeasible, f64::INFINITY, iterations, trace);
            r.infeasibility_bound = Some(bound);
            return Ok(r);
        }
    }

    let n_cons = p.constraints.len() as f64;
    let mut tau = if p.constraints.is_empty() { 0.0 } else { tol.barrier_init };
    let mut escalations = 0;
    loop {
        let mode = Mode::Barrier { tau };
        let target = |v: &CMatrix| 0.25 * tol.gap_tol * (1.0 + model.objective(v).abs());
        let remaining = tol.max_iters.saturating_sub(iterations);
        let end = ascend(&model, &mut v, mode, remaining, 25, &mut iterations, &mut trace, |v| {
            model.eig_gap(v, mode) <= target(v)
        });
        let eig_gap = model.eig_gap(&v, mode);
        let f = model.objective(&v);
        let gap = (eig_gap + tau * n_cons) / (1.0 + f.abs());
        if gap <= tol.gap_tol {
            return Ok(report(v, SolveStatus::Certified, gap, iterations, trace));
        }
        if iterations >= tol.max_iters || matches!(end, AscentEnd::Budget) {
            return Ok(report(v, SolveStatus::NonCertified, gap, iterations, trace));
        }
        if eig_gap > target(&v) {
            if !matches!(end, AscentEnd::Stagnated) {
                continue;
            }
            // stuck at a rank-deficient stationary point: widen the factor
            if v.ncols() >= n || escalations >= 8 {
                return Ok(report(v, SolveStatus::NonCertified, gap, iterations, trace));
            }
            let cert = model.certificate(&v, mode);
            let base = model.value(&v, mode);
            let widened = [1e-1, 1e-2, 1e-3].into_iter().find_map(|eps| {
                let mut w = v.clone().insert_column(v.ncols(), Complex64::new(0.0, 0.0));
                for m in 0..n {
                    w[(m, v.ncols())] = cert.direction[m] * eps;
                }
                normalize_rows(&mut w);
                let val = model.value(&w, mode);
                (val > base).then_some((w, val))
            });
            escalations += 1;
            match widened {
                Some((w, val)) => {
                    v = w;
                    trace.push(val);
                }
                None => return Ok(report(v, SolveStatus::NonCertified, gap, iterations, trace)),
            }
            continue;
        }
        tau *= tol.barrier_decay;
    }
}

/// Largest eigenpair.
pub fn principal_eigenvector(h: &HermitianMatrix) -> (f64, CVector) {
    let (values, vectors) = h.eigen();
    let last = values.len() - 1;
    (values[last], vectors.column(last).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        HermitianMatrix::symmetrized(a)
    }

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let s = HermitianMatrix::symmetrized(&a * a.adjoint());
        let f = s.0.norm();
        HermitianMatrix(s.0 / Complex64::new(f, 0.0))
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = Complex64::new(0.0, 1.0);
        m[(1, 0)] = Complex64::new(0.0, 1.0);
        assert!(matches!(HermitianMatrix::new(m), Err(PsdError::NotHermitian(_))));
        assert!(matches!(
            HermitianMatrix::new(CMatrix::zeros(2, 3)),
            Err(PsdError::NotSquare(2, 3))
        ));
    }

    #[test]
    fn projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_psd(5, &mut rng);
        let p = project_psd(&s);
        assert!((&p.0 - &s.0).norm() < 1e-12);
        let neg = HermitianMatrix(CMatrix::from_diagonal_element(2, 2, Complex64::new(-1.0, 0.0)));
        assert!(project_psd(&neg).0.norm() < 1e-15);
    }

    #[test]
    fn projection_optimality_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(6, &mut rng);
        let p = project_psd(&h);
        let diff = HermitianMatrix(&h.0 - &p.0);
        for _ in 0..100 {
            let s = random_psd(6, &mut rng);
            let d = HermitianMatrix(&s.0 - &p.0);
            assert!(diff.trace_with(&d) <= 1e-8);
        }
    }

    #[test]
    fn trace_fixed_by_unit_diagonal() {
        let mut p = TraceProblem::new(4);
        p.log_terms.push(LogTerm {
            weight: 1.0,
            op: TraceOperator::Dense(HermitianMatrix::identity(4)),
            offset: 1.0,
        });
        let r = solve_trace_problem(&p, &PsdTolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Certified);
        assert!((r.objective - 5f64.log2()).abs() < 1e-6);
        assert!(r.solution.max_diag_deviation() < 1e-8);
    }

    #[test]
    fn unsupported_flags() {
        let mut p = TraceProblem::new(2);
        p.unit_diag = false;
        assert!(matches!(
            solve_trace_problem(&p, &PsdTolerances::default()),
            Err(PsdError::Unsupported(_))
        ));
    }

    fn two_by_two_instance() -> TraceProblem {
        let h = [Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.8)];
        let mut p = TraceProblem::new(2);
        p.log_terms.push(LogTerm {
            weight: 1.0,
            op: TraceOperator::rank_one(&h, 1.0),
            offset: 0.1,
        });
        // caps the real part of the off-diagonal entry: 2 Re(x) <= 0.4
        let mut b = CMatrix::zeros(2, 2);
        b[(0, 1)] = Complex64::new(1.0, 0.0);
        b[(1, 0)] = Complex64::new(1.0, 0.0);
        p.constraints.push(TraceConstraint {
            op: TraceOperator::Dense(HermitianMatrix::new(b).unwrap()),
            bound: 0.4,
            sense: Sense::AtMost,
        });
        p
    }

    #[test]
    fn two_by_two_matches_grid() {
        let p = two_by_two_instance();
        let r = solve_trace_problem(&p, &PsdTolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Certified);
        assert!(p.max_violation(&r.solution) <= 1e-6);
        let eval = |re: f64, im: f64| {
            if re * re + im * im > 1.0 || 2.0 * re > 0.4 {
                return f64::NEG_INFINITY;
            }
            let x = HermitianMatrix(CMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(1.0, 0.0),
                    Complex64::new(re, im),
                    Complex64::new(re, -im),
                    Complex64::new(1.0, 0.0),
                ],
            ));
            p.objective(&x)
        };
        // coarse grid over the unit disk, then a fine grid around its best cell
        let (mut best, mut at) = (f64::NEG_INFINITY, (0.0, 0.0));
        let steps = 400;
        let h = 2.0 / steps as f64;
        for i in 0..=steps {
            for j in 0..=steps {
                let (re, im) = (-1.0 + h * i as f64, -1.0 + h * j as f64);
                let v = eval(re, im);
                if v > best {
                    (best, at) = (v, (re, im));
                }
            }
        }
        let fine = h / 200.0;
        for i in -400..=400 {
            for j in -400..=400 {
                best = best.max(eval(at.0 + fine * i as f64, at.1 + fine * j as f64));
            }
        }
        assert!((r.objective - best).abs() < 1e-4, "{} vs {best}", r.objective);
    }

    #[test]
    fn relaxation_dominates_unit_modulus_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let h: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let g: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut p = TraceProblem::new(n);
        p.log_terms.push(LogTerm {
            weight: 1.0,
            op: TraceOperator::rank_one(&h, 1.0),
            offset: 0.5,
        });
        p.log_terms.push(LogTerm {
            weight: 1.0,
            op: TraceOperator::rank_one(&g, 2.0),
            offset: 0.5,
        });
        p.constraints.push(TraceConstraint {
            op: TraceOperator::rank_one(&g, 1.0),
            bound: 0.5,
            sense: Sense::AtLeast,
        });
        let r = solve_trace_problem(&p, &PsdTolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Certified);
        for _ in 0..100 {
            let xi: Vec<Complex64> = (0..n)
                .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            let x = HermitianMatrix::from_outer(&xi, 1.0);
            if p.max_violation(&x) > 0.0 {
                continue;
            }
            assert!(r.objective >= p.objective(&x) - 1e-6);
        }
    }

    #[test]
    fn objective_trace_monotone_and_deterministic() {
        let p = two_by_two_instance();
        let a = solve_trace_problem(&p, &PsdTolerances::default()).unwrap();
        let b = solve_trace_problem(&p, &PsdTolerances::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-10));
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = TraceProblem::new(3);
        p.log_terms.push(LogTerm {
            weight: 1.0,
            op: TraceOperator::Dense(HermitianMatrix::identity(3)),
            offset: 1.0,
        });
        // Tr(X) = 3 always
        p.constraints.push(TraceConstraint {
            op: TraceOperator::Dense(HermitianMatrix::identity(3)),
            bound: 4.0,
            sense: Sense::AtLeast,
        });
        let r = solve_trace_problem(&p, &PsdTolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.infeasibility_bound.unwrap() < 0.0);
    }

    #[test]
    fn single_element_is_trivial() {
        let mut p = TraceProblem::new(1);
        p.log_terms.push(LogTerm {
            weight: 1.0,
            op: TraceOperator::rank_one(&[Complex64::new(2.0, 0.0)], 1.0),
            offset: 1.0,
        });
        let r = solve_trace_problem(&p, &PsdTolerances::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Certified);
        assert!((r.objective - 5f64.log2()).abs() < 1e-12);
    }
}
