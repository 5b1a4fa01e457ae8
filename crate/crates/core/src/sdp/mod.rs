//! Linear-matrix-inequality feasibility problems and a reference interior
//! point backend.
//!
//! Problems are stated over scalar unknowns grouped into symmetric and
//! rectangular matrix variables. A matrix inequality is an affine symmetric
//! matrix function of the scalars constrained by `affine(x) <= -margin * I`;
//! linear rows are equalities or `<=` inequalities.

mod ipm;
mod presolve;
mod sdpa;

pub use sdpa::write_sdpa;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    /// Symmetric `n x n`; scalars are the upper triangle, row by row.
    Sym(usize),
    /// Rectangular `r x c`; scalars row-major.
    Rect(usize, usize),
}

impl VarShape {
    pub fn n_scalars(&self) -> usize {
        match *self {
            VarShape::Sym(n) => n * (n + 1) / 2,
            VarShape::Rect(r, c) => r * c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct VarDecl {
    name: String,
    shape: VarShape,
    offset: usize,
}

/// Which constraint an LMI came from; only used for labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiKind {
    General,
    LowerBound(VarId),
    UpperBound(VarId),
}

/// `constant + sum coef * x_s * E(row, col) <= -margin * I`, where `E(r, c)`
/// is the symmetric unit matrix with ones at `(r, c)` and `(c, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lmi {
    pub dim: usize,
    pub margin: f64,
    pub kind: LmiKind,
    /// Upper-triangle entries `(row <= col, value)` of the constant term.
    pub constant: Vec<(usize, usize, f64)>,
    /// `(scalar, row <= col, coef)`.
    pub terms: Vec<(usize, usize, usize, f64)>,
}

impl Lmi {
    /// Dense value of `affine(x)`.
    pub fn affine_value(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut put = |r: usize, c: usize, v: f64| {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        };
        for &(r, c, v) in &self.constant {
            put(r, c, v);
        }
        for &(s, r, c, v) in &self.terms {
            put(r, c, v * x[s]);
        }
        m
    }

    /// `lambda_min(-margin I - affine(x))`; nonnegative iff satisfied.
    pub fn slack(&self, x: &[f64]) -> f64 {
        let mut m = -self.affine_value(x);
        for d in 0..self.dim {
            m[(d, d)] -= self.margin;
        }
        linalg::min_sym_eigenvalue(&m)
    }
}

/// Accumulates LMI entries, merging duplicates.
#[derive(Debug, Clone)]
pub struct LmiBuilder {
    dim: usize,
    margin: f64,
    constant: HashMap<(usize, usize), f64>,
    terms: HashMap<(usize, usize, usize), f64>,
}

impl LmiBuilder {
    pub fn new(dim: usize, margin: f64) -> Self {
        Self { dim, margin, constant: HashMap::new(), terms: HashMap::new() }
    }

    /// Adds `coef * x_s` at `(r, c)` and its mirror.
    pub fn add(&mut self, scalar: usize, r: usize, c: usize, coef: f64) {
        if coef != 0.0 {
            let (r, c) = if r <= c { (r, c) } else { (c, r) };
            *self.terms.entry((scalar, r, c)).or_insert(0.0) += coef;
        }
    }

    pub fn add_constant(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            let (r, c) = if r <= c { (r, c) } else { (c, r) };
            *self.constant.entry((r, c)).or_insert(0.0) += v;
        }
    }

    /// Adds `coef * x_s * S` for a dense symmetric `S`.
    pub fn add_matrix(&mut self, scalar: usize, s: &DMatrix<f64>, coef: f64) {
        for c in 0..self.dim {
            for r in 0..=c {
                self.add(scalar, r, c, coef * s[(r, c)]);
            }
        }
    }

    fn finish(self, kind: LmiKind) -> Lmi {
        let mut constant: Vec<_> = self.constant.into_iter().map(|((r, c), v)| (r, c, v)).collect();
        constant.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut terms: Vec<_> =
            self.terms.into_iter().filter(|(_, v)| *v != 0.0).map(|((s, r, c), v)| (s, r, c, v)).collect();
        terms.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        Lmi { dim: self.dim, margin: self.margin, kind, constant, terms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
}

/// `sum coef * x_s  (= | <=)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinRow {
    pub terms: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

impl LinRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(s, v)| v * x[s]).sum()
    }
}

/// Conic feasibility (optionally optimization) problem.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProblem {
    vars: Vec<VarDecl>,
    n_scalars: usize,
    lmis: Vec<Lmi>,
    rows: Vec<LinRow>,
    objective: Option<Vec<(usize, f64)>>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_var(&mut self, name: &str, shape: VarShape) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarDecl { name: name.into(), shape, offset: self.n_scalars });
        self.n_scalars += shape.n_scalars();
        id
    }

    /// Symmetric variable with optional `lower * I <= X` and `X <= upper * I`.
    pub fn add_sym(&mut self, name: &str, n: usize, lower: Option<f64>, upper: Option<f64>) -> VarId {
        let id = self.push_var(name, VarShape::Sym(n));
        if let Some(lo) = lower {
            // -X <= -lo I
            let mut b = LmiBuilder::new(n, lo);
            for i in 0..n {
                for j in i..n {
                    b.add(self.sym(id, i, j), i, j, -1.0);
                }
            }
            self.lmis.push(b.finish(LmiKind::LowerBound(id)));
        }
        if let Some(hi) = upper {
            // X - hi I <= 0
            let mut b = LmiBuilder::new(n, 0.0);
            for i in 0..n {
                b.add_constant(i, i, -hi);
                for j in i..n {
                    b.add(self.sym(id, i, j), i, j, 1.0);
                }
            }
            self.lmis.push(b.finish(LmiKind::UpperBound(id)));
        }
        id
    }

    pub fn add_rect(&mut self, name: &str, r: usize, c: usize) -> VarId {
        self.push_var(name, VarShape::Rect(r, c))
    }

    pub fn shape(&self, v: VarId) -> VarShape {
        self.vars[v.0].shape
    }
    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.0].name
    }
    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }
    pub fn lmis(&self) -> &[Lmi] {
        &self.lmis
    }
    pub fn rows(&self) -> &[LinRow] {
        &self.rows
    }
    pub fn objective(&self) -> Option<&[(usize, f64)]> {
        self.objective.as_deref()
    }

    /// Scalar index of entry `(i, j)` of a symmetric variable (either order).
    pub fn sym(&self, v: VarId, i: usize, j: usize) -> usize {
        let VarShape::Sym(n) = self.vars[v.0].shape else { panic!("{} is not symmetric", self.vars[v.0].name) };
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        assert!(j < n);
        self.vars[v.0].offset + i * n - i * (i + 1) / 2 + j
    }

    /// Scalar index of entry `(i, j)` of a rectangular variable.
    pub fn rect(&self, v: VarId, i: usize, j: usize) -> usize {
        let VarShape::Rect(r, c) = self.vars[v.0].shape else { panic!("{} is not rectangular", self.vars[v.0].name) };
        assert!(i < r && j < c);
        self.vars[v.0].offset + i * c + j
    }

    /// Scalar index of `(i, j)` for either kind of variable.
    pub fn entry(&self, v: VarId, i: usize, j: usize) -> usize {
        match self.vars[v.0].shape {
            VarShape::Sym(_) => self.sym(v, i, j),
            VarShape::Rect(..) => self.rect(v, i, j),
        }
    }

    pub fn add_lmi(&mut self, b: LmiBuilder) -> Result<()> {
        self.check_scalars(b.terms.keys().map(|k| k.0))?;
        if b.terms.keys().any(|&(_, r, c)| c >= b.dim || r > c) || b.constant.keys().any(|&(_, c)| c >= b.dim) {
            return Err(Error::Dimension("LMI entry outside its dimension".into()));
        }
        if !b.margin.is_finite() || !b.terms.values().chain(b.constant.values()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("LMI coefficients"));
        }
        self.lmis.push(b.finish(LmiKind::General));
        Ok(())
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> Result<()> {
        self.check_scalars(terms.iter().map(|t| t.0))?;
        if !rhs.is_finite() || !terms.iter().all(|t| t.1.is_finite()) {
            return Err(Error::NonFinite("linear row"));
        }
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        let mut sorted = terms;
        sorted.sort_by_key(|t| t.0);
        for (s, v) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == s => last.1 += v,
                _ => merged.push((s, v)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.rows.push(LinRow { terms: merged, kind, rhs });
        Ok(())
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> Result<()> {
        self.add_row(terms, RowKind::Eq, rhs)
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> Result<()> {
        self.add_row(terms, RowKind::Le, rhs)
    }

    /// `|sum terms| <= rhs_expr` as two `<=` rows, where the bound itself is
    /// `rhs_const + sum rhs_terms`.
    pub fn add_abs_le(&mut self, terms: &[(usize, f64)], rhs_const: f64, rhs_terms: &[(usize, f64)]) -> Result<()> {
        let neg_rhs: Vec<(usize, f64)> = rhs_terms.iter().map(|&(s, v)| (s, -v)).collect();
        let mut up: Vec<(usize, f64)> = terms.to_vec();
        up.extend_from_slice(&neg_rhs);
        self.add_le(up, rhs_const)?;
        let mut lo: Vec<(usize, f64)> = terms.iter().map(|&(s, v)| (s, -v)).collect();
        lo.extend_from_slice(&neg_rhs);
        self.add_le(lo, rhs_const)
    }

    /// Turns the problem back into a pure feasibility problem.
    pub fn clear_objective(&mut self) {
        self.objective = None;
    }

    /// Minimize `sum coef * x_s`.
    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>) -> Result<()> {
        self.check_scalars(terms.iter().map(|t| t.0))?;
        self.objective = Some(terms);
        Ok(())
    }

    fn check_scalars(&self, mut it: impl Iterator<Item = usize>) -> Result<()> {
        if let Some(s) = it.find(|&s| s >= self.n_scalars) {
            return Err(Error::Dimension(format!("scalar {s} not declared ({} scalars)", self.n_scalars)));
        }
        Ok(())
    }

    /// Reads back a matrix variable from a scalar vector.
    pub fn value(&self, v: VarId, x: &[f64]) -> DMatrix<f64> {
        match self.vars[v.0].shape {
            VarShape::Sym(n) => DMatrix::from_fn(n, n, |i, j| x[self.sym(v, i, j)]),
            VarShape::Rect(r, c) => DMatrix::from_fn(r, c, |i, j| x[self.rect(v, i, j)]),
        }
    }

    /// Writes a matrix into the scalar vector (upper triangle for symmetric).
    pub fn set_value(&self, v: VarId, m: &DMatrix<f64>, x: &mut [f64]) {
        match self.vars[v.0].shape {
            VarShape::Sym(n) => {
                for i in 0..n {
                    for j in i..n {
                        x[self.sym(v, i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
                    }
                }
            }
            VarShape::Rect(r, c) => {
                for i in 0..r {
                    for j in 0..c {
                        x[self.rect(v, i, j)] = m[(i, j)];
                    }
                }
            }
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.as_ref().map_or(0.0, |o| o.iter().map(|&(s, v)| v * x[s]).sum())
    }
}

/// Numerical tolerances shared by the backend and the residual check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSet {
    /// Allowed negative slack on every matrix inequality.
    pub psd_slack: f64,
    /// Allowed violation of linear equalities and inequalities.
    pub eq_abs: f64,
    /// Interior-point iteration cap; reaching it yields `Inconclusive`.
    pub max_iter: usize,
    /// Feasibility-problem margin the backend must clear to decide a status.
    pub decide_margin: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self { psd_slack: 1e-7, eq_abs: 1e-6, max_iter: 500, decide_margin: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Feasible,
    Infeasible,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `lambda_min(-margin I - affine(x))` per LMI.
    pub lmi_slack: Vec<f64>,
    pub min_lmi_slack: f64,
    pub max_eq_violation: f64,
    pub max_ineq_violation: f64,
}

impl ResidualReport {
    pub fn max_lmi_violation(&self) -> f64 {
        (-self.min_lmi_slack).max(0.0)
    }

    pub fn within(&self, tol: &ToleranceSet) -> bool {
        self.min_lmi_slack >= -tol.psd_slack
            && self.max_eq_violation <= tol.eq_abs
            && self.max_ineq_violation <= tol.eq_abs
    }
}

/// Independent constraint evaluation at `x`.
pub fn residuals(problem: &ConicProblem, x: &[f64]) -> Result<ResidualReport> {
    if x.len() != problem.n_scalars {
        return Err(Error::Dimension(format!("{} values for {} scalars", x.len(), problem.n_scalars)));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("candidate values"));
    }
    let lmi_slack: Vec<f64> = problem.lmis.iter().map(|l| l.slack(x)).collect();
    let min_lmi_slack = lmi_slack.iter().copied().fold(f64::INFINITY, f64::min);
    let mut max_eq = 0.0_f64;
    let mut max_ineq = 0.0_f64;
    for r in &problem.rows {
        let a = r.activity(x);
        match r.kind {
            RowKind::Eq => max_eq = max_eq.max((a - r.rhs).abs()),
            RowKind::Le => max_ineq = max_ineq.max(a - r.rhs),
        }
    }
    Ok(ResidualReport { lmi_slack, min_lmi_slack, max_eq_violation: max_eq, max_ineq_violation: max_ineq })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Wall time in seconds; `None` without the `std` feature.
    pub wall_time_s: Option<f64>,
    /// Scalars left after presolve.
    pub reduced_scalars: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: Status,
    /// Values for every scalar when `Feasible`.
    pub values: Option<Vec<f64>>,
    pub residuals: Option<ResidualReport>,
    pub stats: SolveStats,
    /// Objective at `values` (optimization problems only).
    pub objective: Option<f64>,
    /// Lower bound on the optimal objective (optimization problems only).
    pub lower_bound: Option<f64>,
    /// Largest uniform constraint shift that keeps the problem feasible,
    /// when computed (`SolveOptions::margin`). Sign-equivalent to feasibility.
    pub margin: Option<f64>,
    /// Short diagnostic for non-feasible outcomes.
    pub note: Option<String>,
}

impl SolveOutcome {
    fn bare(status: Status, note: Option<String>) -> Self {
        Self {
            status,
            values: None,
            residuals: None,
            stats: SolveStats::default(),
            objective: None,
            lower_bound: None,
            margin: None,
            note,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: ToleranceSet,
    /// Starting guess for every scalar; zeros when absent. It need not be feasible.
    pub start: Option<Vec<f64>>,
    /// Optimization only: stop once the lower bound reaches this value.
    pub cutoff: Option<f64>,
    /// Optimization with a cutoff: once a feasible point beats the cutoff,
    /// stop as soon as the duality gap is below this value.
    pub coarse_gap: Option<f64>,
    /// Feasibility only: solve the margin problem to optimality instead of
    /// stopping at the first decision.
    pub margin: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: ToleranceSet::default(), start: None, cutoff: None, coarse_gap: None, margin: false }
    }
}

/// A conic backend. Implementations must be deterministic for fixed inputs.
pub trait SdpBackend {
    fn solve(&self, problem: &ConicProblem, opts: &SolveOptions) -> Result<SolveOutcome>;
}

/// Presolve followed by a primal-dual interior point method (HKM direction,
/// Mehrotra predictor-corrector) on the dual form. Feasible results are
/// re-checked with [`residuals`] and downgraded to `Inconclusive` on failure.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceBackend;

impl SdpBackend for ReferenceBackend {
    fn solve(&self, problem: &ConicProblem, opts: &SolveOptions) -> Result<SolveOutcome> {
        #[cfg(feature = "std")]
        let t0 = std::time::Instant::now();
        #[cfg(feature = "std")]
        {
            let mut out = solve_inner(problem, opts)?;
            out.stats.wall_time_s = Some(t0.elapsed().as_secs_f64());
            Ok(out)
        }
        #[cfg(not(feature = "std"))]
        solve_inner(problem, opts)
    }
}

/// Solves with the reference backend and the given tolerances.
pub fn solve(problem: &ConicProblem, tol: &ToleranceSet) -> Result<SolveOutcome> {
    ReferenceBackend.solve(problem, &SolveOptions { tol: *tol, ..Default::default() })
}

fn validate(problem: &ConicProblem, opts: &SolveOptions) -> Result<()> {
    for l in &problem.lmis {
        if !l.margin.is_finite()
            || !l.constant.iter().all(|t| t.2.is_finite())
            || !l.terms.iter().all(|t| t.3.is_finite())
        {
            return Err(Error::NonFinite("LMI coefficients"));
        }
        if l.terms.iter().any(|t| t.0 >= problem.n_scalars || t.2 >= l.dim || t.1 > t.2)
            || l.constant.iter().any(|t| t.1 >= l.dim || t.0 > t.1)
        {
            return Err(Error::Dimension("LMI entry out of range".into()));
        }
    }
    for r in &problem.rows {
        if !r.rhs.is_finite() || !r.terms.iter().all(|t| t.1.is_finite()) {
            return Err(Error::NonFinite("linear row"));
        }
        if r.terms.iter().any(|t| t.0 >= problem.n_scalars) {
            return Err(Error::Dimension("row references undeclared scalar".into()));
        }
    }
    if let Some(s) = &opts.start {
        if s.len() != problem.n_scalars {
            return Err(Error::Dimension(format!("start has {} values for {} scalars", s.len(), problem.n_scalars)));
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("start point"));
        }
    }
    Ok(())
}

fn solve_inner(problem: &ConicProblem, opts: &SolveOptions) -> Result<SolveOutcome> {
    validate(problem, opts)?;
    let tol = &opts.tol;
    let pre = match presolve::presolve(problem) {
        presolve::Presolved::Infeasible(why) => return Ok(SolveOutcome::bare(Status::Infeasible, Some(why))),
        presolve::Presolved::Reduced(p) => p,
    };
    let start_full = opts.start.clone().unwrap_or_else(|| vec![0.0; problem.n_scalars]);
    let y0: Vec<f64> = pre.kept.iter().map(|&s| start_full[s]).collect();
    let data = ipm::IpmData::from_reduced(&pre);
    let reduced_scalars = pre.kept.len();

    let mode = if opts.margin {
        ipm::Phase1Mode::Margin
    } else if problem.objective.is_some() {
        ipm::Phase1Mode::Deep
    } else {
        ipm::Phase1Mode::Decide
    };
    let p1 = ipm::phase1(&data, &y0, tol, mode);
    let mut iterations = p1.iterations;
    let mut status = p1.status;
    let margin = p1.margin;
    let mut y = p1.point;
    let mut lower_bound = None;
    let mut note = p1.note;

    if status == Status::Feasible && problem.objective.is_some() {
        let budget = tol.max_iter.saturating_sub(iterations);
        let cutoff = opts.cutoff.map(|c| c - pre.obj_const);
        let p2 = ipm::phase2(&data, y.as_ref().expect("feasible point"), budget, cutoff, opts.coarse_gap);
        iterations += p2.iterations;
        y = Some(p2.point);
        lower_bound = Some(p2.lower_bound + pre.obj_const);
        if !p2.converged && !p2.cutoff_hit && !p2.coarse_stop {
            note = Some("objective phase stopped before convergence".into());
        }
    }

    let stats = SolveStats { iterations, wall_time_s: None, reduced_scalars };
    if status != Status::Feasible {
        let mut out = SolveOutcome::bare(status, note);
        out.stats = stats;
        out.margin = margin;
        return Ok(out);
    }
    let x = pre.postsolve(y.as_deref().expect("feasible point"), &start_full);
    let res = residuals(problem, &x)?;
    if !res.within(tol) {
        log::debug!(
            "feasible point failed re-check: lmi slack {:.3e}, eq {:.3e}, ineq {:.3e}",
            res.min_lmi_slack,
            res.max_eq_violation,
            res.max_ineq_violation
        );
        status = Status::Inconclusive;
        note = Some(format!(
            "residual re-check failed (lmi slack {:.3e}, eq {:.3e}, ineq {:.3e})",
            res.min_lmi_slack, res.max_eq_violation, res.max_ineq_violation
        ));
    }
    let objective = problem.objective.as_ref().map(|_| problem.objective_value(&x));
    Ok(SolveOutcome {
        status,
        values: if status == Status::Feasible { Some(x) } else { None },
        residuals: Some(res),
        stats,
        objective,
        lower_bound,
        margin,
        note,
    })
}
