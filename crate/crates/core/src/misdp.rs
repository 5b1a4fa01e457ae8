//! Big-M mixed-integer SDP model of the selection problem and a
//! branch-and-bound solver over its binaries.
//!
//! The products `Pi N Gamma`, `Pi M` and `Omega(P) Pi` of the nonconvex
//! formulation are replaced by auxiliary matrices tied to the binaries with
//! big-M inequalities:
//!
//! ```text
//! |Theta_ab| <= L1 pi_a,   |Theta_ab| <= L1 gamma_b,   |Theta_ab - N_ab| <= L1 (2 - pi_a - gamma_b)
//! |M_ij| <= L2 (1 - pi_i + pi_j),   |Omega_ij| <= L2 (1 + pi_i - pi_j),
//! |M_ij - Omega_ij| <= L2 (2 - pi_i - pi_j),   |Xi_ij| <= L3 (1 - pi_j)
//! Omega = (B'B)^{-1} B' P B,   Xi = (I - B (B'B)^{-1} B') P B
//! ```
//!
//! where each index inherits the bit of the node that owns it.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use hashbrown::HashSet;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::netmodel::{DynNetwork, LogisticConstraint, Selection};
use crate::sdp::{ConicProblem, LmiBuilder, ReferenceBackend, SdpBackend, SolveOptions, Status, VarId};
use crate::sof::{self, SelectionOracle, SofCertificate, SofOptions, SofVerdict};

pub const DEFAULT_L1: f64 = 1e4;
pub const DEFAULT_L2: f64 = 5e6;
pub const DEFAULT_L3: f64 = 5e6;
pub const INTEGRALITY_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_NODES: usize = 1000;
/// Factor applied to all three constants per escalation.
pub const L_ESCALATION: f64 = 10.0;
pub const MAX_ESCALATIONS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct BigMParams {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// Margin, `P` bounds and tolerances shared with the plain LMI test.
    pub sof: SofOptions,
}

impl Default for BigMParams {
    fn default() -> Self {
        Self { l1: DEFAULT_L1, l2: DEFAULT_L2, l3: DEFAULT_L3, sof: SofOptions::default() }
    }
}

impl BigMParams {
    pub fn escalated(&self, times: usize) -> Self {
        let f = libm::pow(L_ESCALATION, times as f64);
        Self { l1: self.l1 * f, l2: self.l2 * f, l3: self.l3 * f, sof: self.sof.clone() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BigMVars {
    pub p: VarId,
    pub nvar: VarId,
    pub m: VarId,
    pub theta: VarId,
    pub omega: VarId,
    pub xi: VarId,
    pub pi: VarId,
    pub gamma: VarId,
}

#[derive(Debug, Clone)]
pub struct BigMModel {
    pub problem: ConicProblem,
    pub vars: BigMVars,
    pub n: usize,
    pub params: BigMParams,
    pub constraint: LogisticConstraint,
}

impl BigMModel {
    /// Scalar index of binary `k` in the `(pi, gamma)` ordering of [`Selection`].
    pub fn binary_scalar(&self, k: usize) -> usize {
        if k < self.n {
            self.problem.rect(self.vars.pi, k, 0)
        } else {
            self.problem.rect(self.vars.gamma, k - self.n, 0)
        }
    }
}

/// `(B'B)^{-1} B' P B`.
pub fn omega_of(p: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(linalg::left_pseudo_inverse(b)? * p * b)
}

/// `(I - B (B'B)^{-1} B') P B`, equal to `P B - B omega_of(P, B)`.
pub fn xi_of(p: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(p * b - b * omega_of(p, b)?)
}

fn merged(terms: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (s, v) in terms {
        match out.iter_mut().find(|t| t.0 == s) {
            Some(t) => t.1 += v,
            None => out.push((s, v)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

/// Adds `X = L P R` row by row, where `P` is the symmetric variable.
fn add_projection_eq(prob: &mut ConicProblem, x: VarId, p: VarId, l: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let n = r.nrows();
    for i in 0..l.nrows() {
        for j in 0..r.ncols() {
            let mut terms = vec![(prob.rect(x, i, j), 1.0)];
            for k in 0..n {
                if l[(i, k)] == 0.0 {
                    continue;
                }
                for q in 0..n {
                    let c = l[(i, k)] * r[(q, j)];
                    if c != 0.0 {
                        terms.push((prob.entry(p, k, q), -c));
                    }
                }
            }
            let terms = merged(terms);
            prob.add_eq(terms, 0.0)?;
        }
    }
    Ok(())
}

/// Builds the big-M model with binaries relaxed to `[0, 1]`.
pub fn assemble_bigm(net: &DynNetwork, constraint: &LogisticConstraint, params: &BigMParams) -> Result<BigMModel> {
    let n = net.n_nodes();
    if constraint.n() != n {
        return Err(Error::Dimension(format!("constraint has N = {}, network has {n}", constraint.n())));
    }
    for (v, name) in [(params.l1, "L1"), (params.l2, "L2"), (params.l3, "L3")] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidInput(format!("{name} must be positive and finite")));
        }
    }
    let (a, b, c) = (net.a(), net.b(), net.c());
    let (nx, nu, ny) = (net.nx(), net.nu(), net.ny());
    let opts = &params.sof;
    let mut prob = ConicProblem::new();
    let p = prob.add_sym("P", nx, Some(opts.delta), Some(opts.p_ceiling));
    let nvar = prob.add_rect("N", nu, ny);
    let m = prob.add_rect("M", nu, nu);
    let theta = prob.add_rect("Theta", nu, ny);
    let omega = prob.add_rect("Omega", nu, nu);
    let xi = prob.add_rect("Xi", nx, nu);
    let pi = prob.add_rect("pi", n, 1);
    let gamma = prob.add_rect("gamma", n, 1);
    let vars = BigMVars { p, nvar, m, theta, omega, xi, pi, gamma };

    let mut lmi = LmiBuilder::new(nx, opts.effective_eps());
    sof::add_lyapunov_terms(&prob, &mut lmi, p, a);
    sof::add_feedback_terms(&prob, &mut lmi, theta, b, c);
    prob.add_lmi(lmi)?;

    let pi_of = |prob: &ConicProblem, i: usize| prob.rect(pi, net.input_node(i), 0);
    let ga_of = |prob: &ConicProblem, j: usize| prob.rect(gamma, net.output_node(j), 0);
    let (l1, l2, l3) = (params.l1, params.l2, params.l3);
    for i in 0..nu {
        for j in 0..ny {
            let (t, nij) = (prob.rect(theta, i, j), prob.rect(nvar, i, j));
            let (pa, gb) = (pi_of(&prob, i), ga_of(&prob, j));
            prob.add_abs_le(&[(t, 1.0)], 0.0, &[(pa, l1)])?;
            prob.add_abs_le(&[(t, 1.0)], 0.0, &[(gb, l1)])?;
            prob.add_abs_le(&[(t, 1.0), (nij, -1.0)], 2.0 * l1, &[(pa, -l1), (gb, -l1)])?;
        }
    }
    for i in 0..nu {
        for j in 0..nu {
            let (mij, oij) = (prob.rect(m, i, j), prob.rect(omega, i, j));
            let (pa, pb) = (pi_of(&prob, i), pi_of(&prob, j));
            prob.add_abs_le(&[(mij, 1.0)], l2, &merged([(pa, -l2), (pb, l2)]))?;
            prob.add_abs_le(&[(oij, 1.0)], l2, &merged([(pa, l2), (pb, -l2)]))?;
            prob.add_abs_le(&[(mij, 1.0), (oij, -1.0)], 2.0 * l2, &merged([(pa, -l2), (pb, -l2)]))?;
        }
    }
    for i in 0..nx {
        for j in 0..nu {
            prob.add_abs_le(&[(prob.rect(xi, i, j), 1.0)], l3, &[(pi_of(&prob, j), -l3)])?;
        }
    }
    let bplus = linalg::left_pseudo_inverse(b)?;
    let proj = DMatrix::identity(nx, nx) - b * &bplus;
    add_projection_eq(&mut prob, omega, p, &bplus, b)?;
    add_projection_eq(&mut prob, xi, p, &proj, b)?;

    let mut obj = Vec::with_capacity(2 * n);
    for k in 0..n {
        for v in [pi, gamma] {
            let s = prob.rect(v, k, 0);
            prob.add_le(vec![(s, -1.0)], 0.0)?;
            prob.add_le(vec![(s, 1.0)], 1.0)?;
            obj.push((s, 1.0));
        }
    }
    let phi_mat = constraint.phi_matrix();
    for r in 0..constraint.n_rows() {
        let terms: Vec<(usize, f64)> = (0..2 * n)
            .filter(|&k| phi_mat[(r, k)] != 0.0)
            .map(|k| {
                let s = if k < n { prob.rect(pi, k, 0) } else { prob.rect(gamma, k - n, 0) };
                (s, phi_mat[(r, k)])
            })
            .collect();
        prob.add_le(terms, constraint.phi()[r])?;
    }
    prob.set_objective(obj)?;
    Ok(BigMModel { problem: prob, vars, n, params: params.clone(), constraint: constraint.clone() })
}

fn start_point(model: &BigMModel) -> Vec<f64> {
    let mut x = vec![0.0; model.problem.n_scalars()];
    let nx = match model.problem.shape(model.vars.p) {
        crate::sdp::VarShape::Sym(n) => n,
        _ => unreachable!(),
    };
    let mid = 0.5 * (model.params.sof.delta + model.params.sof.p_ceiling);
    model.problem.set_value(model.vars.p, &(DMatrix::identity(nx, nx) * mid), &mut x);
    for k in 0..2 * model.n {
        x[model.binary_scalar(k)] = 0.5;
    }
    x
}

fn with_fixings(model: &BigMModel, fixed: &[Option<bool>]) -> Result<ConicProblem> {
    if fixed.len() != 2 * model.n {
        return Err(Error::Dimension(format!("{} fixings for {} binaries", fixed.len(), 2 * model.n)));
    }
    let mut prob = model.problem.clone();
    for (k, f) in fixed.iter().enumerate() {
        if let Some(v) = f {
            prob.add_eq(vec![(model.binary_scalar(k), 1.0)], if *v { 1.0 } else { 0.0 })?;
        }
    }
    Ok(prob)
}

/// Continuous relaxation at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub status: Status,
    /// Valid lower bound on the node's integer optimum (when feasible).
    pub bound: f64,
    pub objective: f64,
    /// Binaries in `(pi, gamma)` order.
    pub binaries: Vec<f64>,
    pub values: Option<Vec<f64>>,
    pub iterations: usize,
    pub note: Option<String>,
}

/// Solves the relaxation with the given bits fixed. With `cutoff`, the
/// solver may stop once the bound reaches it.
pub fn solve_relaxation(model: &BigMModel, fixed: &[Option<bool>], cutoff: Option<f64>) -> Result<Relaxation> {
    let prob = with_fixings(model, fixed)?;
    let opts = SolveOptions {
        tol: model.params.sof.tol,
        start: Some(start_point(model)),
        cutoff,
        ..Default::default()
    };
    let out = ReferenceBackend.solve(&prob, &opts)?;
    let iterations = out.stats.iterations;
    match (out.status, out.values) {
        (Status::Feasible, Some(x)) => {
            let binaries: Vec<f64> = (0..2 * model.n).map(|k| x[model.binary_scalar(k)]).collect();
            let objective = out.objective.unwrap_or(f64::NAN);
            let bound = out.lower_bound.unwrap_or(f64::NEG_INFINITY).min(objective);
            Ok(Relaxation { status: Status::Feasible, bound, objective, binaries, values: Some(x), iterations, note: out.note })
        }
        (status, _) => Ok(Relaxation {
            status: if status == Status::Feasible { Status::Inconclusive } else { status },
            bound: f64::INFINITY,
            objective: f64::NAN,
            binaries: Vec::new(),
            values: None,
            iterations,
            note: out.note,
        }),
    }
}

/// Feasibility of the model with every binary fixed to `s`.
pub fn leaf_status(model: &BigMModel, s: &Selection) -> Result<Status> {
    if s.n() != model.n {
        return Err(Error::Dimension(format!("selection has N = {}, model has {}", s.n(), model.n)));
    }
    let fixed: Vec<Option<bool>> = (0..2 * model.n).map(|k| Some(s.bit(k))).collect();
    let mut prob = with_fixings(model, &fixed)?;
    prob.clear_objective();
    let opts = SolveOptions { tol: model.params.sof.tol, start: Some(start_point(model)), ..Default::default() };
    Ok(ReferenceBackend.solve(&prob, &opts)?.status)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BnbOptions {
    pub max_nodes: usize,
    /// Try the rounded relaxation as an incumbent at every node.
    pub rounding: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self { max_nodes: DEFAULT_MAX_NODES, rounding: true }
    }
}

/// Open node: fixed bits and the bound inherited from its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub id: usize,
    pub depth: usize,
    pub fixed: Vec<Option<bool>>,
    pub parent_bound: f64,
}

struct Queued(BnbNode);

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    // max-heap: smallest bound first, then oldest node
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.parent_bound.total_cmp(&self.0.parent_bound).then_with(|| o.0.id.cmp(&self.0.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOutcome {
    /// Bound already at or above the incumbent.
    Pruned,
    Infeasible,
    /// Solver could not decide; handled as infeasible.
    Inconclusive,
    /// Integral relaxation, verified by the LMI test.
    Integral,
    /// Integral relaxation rejected by the LMI test at a leaf.
    Spurious,
    Branched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeLog {
    pub id: usize,
    pub depth: usize,
    pub bound: Option<f64>,
    pub outcome: NodeOutcome,
    /// Incumbent objective after processing the node.
    pub incumbent: Option<usize>,
    pub branch_var: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub best: Option<Selection>,
    pub certificate: Option<SofCertificate>,
    /// The tree was fully explored within the node limit.
    pub optimal: bool,
    pub nodes: usize,
    pub root_bound: Option<f64>,
    pub spurious: usize,
    pub inconclusive: usize,
    pub lmi_checks: usize,
    pub log: Vec<NodeLog>,
    pub l: (f64, f64, f64),
}

impl BnbResult {
    pub fn h(&self) -> Option<usize> {
        self.best.map(|s| s.count_active())
    }
}

fn is_integral(v: f64) -> bool {
    v.abs() <= INTEGRALITY_TOL || (v - 1.0).abs() <= INTEGRALITY_TOL
}

fn bound_ceil(b: f64) -> f64 {
    libm::ceil(b - INTEGRALITY_TOL)
}

/// Best-bound branch and bound. Integer points are accepted only after the
/// oracle confirms them, so any returned selection carries a certificate.
pub fn solve_bnb<O: SelectionOracle + ?Sized>(model: &BigMModel, oracle: &mut O, opts: &BnbOptions) -> Result<BnbResult> {
    let n2 = 2 * model.n;
    let mut tested: HashSet<u128> = HashSet::new();
    let mut best: Option<(Selection, SofCertificate)> = None;
    let mut lmi_checks = 0usize;

    let mut try_incumbent = |s: Selection,
                             best: &mut Option<(Selection, SofCertificate)>,
                             lmi_checks: &mut usize,
                             oracle: &mut O|
     -> Result<Option<bool>> {
        if !model.constraint.membership(&s) || !tested.insert(s.mask()) {
            return Ok(None);
        }
        if best.as_ref().is_some_and(|(b, _)| b.count_active() <= s.count_active()) {
            return Ok(None);
        }
        *lmi_checks += 1;
        match oracle.check(&s)? {
            SofVerdict::Feasible(cert) => {
                log::debug!("bnb: new incumbent {s} with H = {}", s.count_active());
                *best = Some((s, cert));
                Ok(Some(true))
            }
            _ => Ok(Some(false)),
        }
    };

    try_incumbent(Selection::all_active(model.n), &mut best, &mut lmi_checks, oracle)?;

    let mut heap = BinaryHeap::new();
    heap.push(Queued(BnbNode { id: 0, depth: 0, fixed: vec![None; n2], parent_bound: f64::NEG_INFINITY }));
    let mut next_id = 1;
    let mut log_rows = Vec::new();
    let (mut spurious, mut inconclusive, mut nodes) = (0, 0, 0);
    let mut root_bound = None;
    let mut optimal = true;
    let incumbent_h = |best: &Option<(Selection, SofCertificate)>| best.as_ref().map(|(s, _)| s.count_active());

    while let Some(Queued(node)) = heap.pop() {
        let inc = incumbent_h(&best).map(|h| h as f64).unwrap_or(f64::INFINITY);
        if bound_ceil(node.parent_bound) >= inc {
            log_rows.push(NodeLog {
                id: node.id,
                depth: node.depth,
                bound: Some(node.parent_bound),
                outcome: NodeOutcome::Pruned,
                incumbent: incumbent_h(&best),
                branch_var: None,
            });
            continue;
        }
        if nodes >= opts.max_nodes {
            optimal = false;
            break;
        }
        nodes += 1;
        let cutoff = inc.is_finite().then(|| inc - 1.0 + 2.0 * INTEGRALITY_TOL);
        let relax = solve_relaxation(model, &node.fixed, cutoff)?;
        let mut entry = NodeLog {
            id: node.id,
            depth: node.depth,
            bound: None,
            outcome: NodeOutcome::Infeasible,
            incumbent: None,
            branch_var: None,
        };
        if relax.status != Status::Feasible {
            if relax.status == Status::Inconclusive {
                log::warn!("bnb: node {} inconclusive ({:?}), pruned", node.id, relax.note);
                inconclusive += 1;
                entry.outcome = NodeOutcome::Inconclusive;
            }
            entry.incumbent = incumbent_h(&best);
            log_rows.push(entry);
            continue;
        }
        let bound = relax.bound.max(node.parent_bound);
        if node.id == 0 {
            root_bound = Some(bound);
        }
        entry.bound = Some(bound);
        if bound_ceil(bound) >= inc {
            entry.outcome = NodeOutcome::Pruned;
            entry.incumbent = incumbent_h(&best);
            log_rows.push(entry);
            continue;
        }

        let vals = &relax.binaries;
        let free: Vec<usize> = (0..n2).filter(|&k| node.fixed[k].is_none()).collect();
        if vals.iter().all(|&v| is_integral(v)) {
            let s = Selection::from_mask(model.n, (0..n2).filter(|&k| vals[k] > 0.5).fold(0u128, |m, k| m | 1 << k))?;
            let verdict = try_incumbent(s, &mut best, &mut lmi_checks, oracle)?;
            let confirmed = verdict == Some(true) || best.as_ref().is_some_and(|(b, _)| b.mask() == s.mask());
            if confirmed || free.is_empty() {
                entry.outcome = if confirmed { NodeOutcome::Integral } else { NodeOutcome::Spurious };
                if !confirmed {
                    spurious += 1;
                    log::warn!("bnb: integral point {s} rejected by the LMI test");
                }
                entry.incumbent = incumbent_h(&best);
                log_rows.push(entry);
                continue;
            }
        }
        if opts.rounding {
            let maxv = free.iter().map(|&k| vals[k]).fold(0.0, f64::max);
            let mask = (0..n2)
                .filter(|&k| match node.fixed[k] {
                    Some(v) => v,
                    None => maxv > 0.0 && vals[k] >= 0.5 * maxv,
                })
                .fold(0u128, |m, k| m | 1 << k);
            try_incumbent(Selection::from_mask(model.n, mask)?, &mut best, &mut lmi_checks, oracle)?;
        }
        // most fractional free binary, lowest index on ties
        let mut var = free[0];
        let mut score = -1.0;
        for &k in &free {
            let sc = vals[k].min(1.0 - vals[k]);
            if sc > score {
                score = sc;
                var = k;
            }
        }
        entry.branch_var = Some(var);
        entry.outcome = NodeOutcome::Branched;
        entry.incumbent = incumbent_h(&best);
        log_rows.push(entry);
        for v in [true, false] {
            let mut fixed = node.fixed.clone();
            fixed[var] = Some(v);
            heap.push(Queued(BnbNode { id: next_id, depth: node.depth + 1, fixed, parent_bound: bound }));
            next_id += 1;
        }
    }
    if !heap.is_empty() && nodes >= opts.max_nodes {
        optimal = false;
    }
    let (best_sel, certificate) = match best {
        Some((s, c)) => (Some(s), Some(c)),
        None => (None, None),
    };
    Ok(BnbResult {
        best: best_sel,
        certificate,
        optimal,
        nodes,
        root_bound,
        spurious,
        inconclusive,
        lmi_checks,
        log: log_rows,
        l: (model.params.l1, model.params.l2, model.params.l3),
    })
}

/// Runs [`solve_bnb`], multiplying `L1, L2, L3` by [`L_ESCALATION`] and
/// retrying (at most [`MAX_ESCALATIONS`] times) while integral points are
/// rejected by the LMI test or, when `target` is known, the optimum differs.
pub fn solve_bnb_escalating<O: SelectionOracle + ?Sized>(
    net: &DynNetwork,
    constraint: &LogisticConstraint,
    params: &BigMParams,
    opts: &BnbOptions,
    oracle: &mut O,
    target: Option<usize>,
) -> Result<(BnbResult, usize)> {
    let mut k = 0;
    loop {
        let model = assemble_bigm(net, constraint, &params.escalated(k))?;
        let r = solve_bnb(&model, oracle, opts)?;
        let mismatch = target.is_some() && r.h() != target;
        if k >= MAX_ESCALATIONS || (r.spurious == 0 && !mismatch) {
            return Ok((r, k));
        }
        log::info!("bnb: escalating big-M constants (spurious {}, H {:?} vs {:?})", r.spurious, r.h(), target);
        k += 1;
    }
}
