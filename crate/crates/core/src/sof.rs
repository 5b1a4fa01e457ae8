//! Static output feedback stabilizability LMIs, gain recovery and
//! certificate checks.
//!
//! For a triple `(A, B, C)` the test asks for `P`, `N` (here `nvar`) and `M`
//! with
//!
//! ```text
//! A'P + PA + C'N'B' + BNC <= -eps I,   B M = P B,
//! delta I <= P <= I/2,                 |N_ij| <= gain_bound,
//! ```
//!
//! and returns the gain `F = M^{-1} N`. The upper bound on `P` fixes the
//! scale of the otherwise homogeneous inequality, so that `eps` is a real
//! decay margin: every closed-loop eigenvalue then has real part `<= -eps`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::netmodel::{self, DynNetwork, Selection};
use crate::sdp::{self, ConicProblem, LmiBuilder, ReferenceBackend, SdpBackend, SolveOptions, Status, ToleranceSet, VarId};

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_DELTA: f64 = 1e-6;
pub const DEFAULT_P_CEILING: f64 = 0.5;
pub const DEFAULT_GAIN_BOUND: f64 = 1e4;
pub const DEFAULT_COND_CAP: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct SofOptions {
    /// Decay margin; values below `delta` are raised to `delta`.
    pub eps: f64,
    pub delta: f64,
    pub p_ceiling: f64,
    /// Entrywise bound on `N`.
    pub gain_bound: f64,
    pub cond_cap: f64,
    pub tol: ToleranceSet,
}

impl Default for SofOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            delta: DEFAULT_DELTA,
            p_ceiling: DEFAULT_P_CEILING,
            gain_bound: DEFAULT_GAIN_BOUND,
            cond_cap: DEFAULT_COND_CAP,
            tol: ToleranceSet::default(),
        }
    }
}

impl SofOptions {
    pub fn with_eps(eps: f64) -> Self {
        Self { eps, ..Default::default() }
    }

    pub fn effective_eps(&self) -> f64 {
        self.eps.max(self.delta)
    }
}

/// Witness of LMI feasibility together with the recovered gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SofCertificate {
    pub p: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub nvar: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub eps: f64,
    /// Active input and output dimensions.
    pub m_dim: usize,
    pub r_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SofVerdict {
    Feasible(SofCertificate),
    Infeasible,
    Inconclusive(String),
}

impl SofVerdict {
    pub fn status(&self) -> Status {
        match self {
            SofVerdict::Feasible(_) => Status::Feasible,
            SofVerdict::Infeasible => Status::Infeasible,
            SofVerdict::Inconclusive(_) => Status::Inconclusive,
        }
    }
    pub fn is_feasible(&self) -> bool {
        matches!(self, SofVerdict::Feasible(_))
    }
    pub fn certificate(&self) -> Option<&SofCertificate> {
        match self {
            SofVerdict::Feasible(c) => Some(c),
            _ => None,
        }
    }
}

/// Handles to the variables of an assembled SOF problem.
#[derive(Debug, Clone, Copy)]
pub struct SofVars {
    pub p: VarId,
    pub nvar: VarId,
    pub m: VarId,
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension(format!(
            "A {:?}, B {:?}, C {:?} do not conform",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    for (m, name) in [(a, "A"), (b, "B"), (c, "C")] {
        if !linalg::all_finite(m) {
            return Err(Error::NonFinite(name));
        }
    }
    if b.ncols() == 0 || c.nrows() == 0 {
        return Err(Error::Dimension("B and C need at least one column and row".into()));
    }
    if linalg::rank(b) < b.ncols() {
        return Err(Error::RankDeficient("B must have full column rank".into()));
    }
    if linalg::rank(c) < c.nrows() {
        return Err(Error::RankDeficient("C must have full row rank".into()));
    }
    Ok(())
}

/// Adds `A'P + PA` terms for every scalar of the symmetric variable `p`.
pub(crate) fn add_lyapunov_terms(prob: &ConicProblem, lmi: &mut LmiBuilder, p: VarId, a: &DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i..n {
            // A'S + SA with S = E_ij + E_ji (or E_ii)
            let mut k = DMatrix::zeros(n, n);
            for t in 0..n {
                k[(t, j)] += a[(i, t)];
                if i != j {
                    k[(t, i)] += a[(j, t)];
                }
            }
            let s = &k + k.transpose();
            lmi.add_matrix(prob.sym(p, i, j), &s, 1.0);
        }
    }
}

/// Adds `C'G'B' + BGC` terms for every scalar of the rectangular `g`.
pub(crate) fn add_feedback_terms(prob: &ConicProblem, lmi: &mut LmiBuilder, g: VarId, b: &DMatrix<f64>, c: &DMatrix<f64>) {
    for k in 0..b.ncols() {
        for l in 0..c.nrows() {
            let outer = b.column(k) * c.row(l);
            let s = &outer + outer.transpose();
            lmi.add_matrix(prob.rect(g, k, l), &s, 1.0);
        }
    }
}

/// Assembles the SOF feasibility problem for `(A, B, C)`.
pub fn build_sof_problem(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    opts: &SofOptions,
) -> Result<(ConicProblem, SofVars)> {
    check_shapes(a, b, c)?;
    let (n, m, r) = (a.nrows(), b.ncols(), c.nrows());
    let mut prob = ConicProblem::new();
    let p = prob.add_sym("P", n, Some(opts.delta), Some(opts.p_ceiling));
    let nvar = prob.add_rect("N", m, r);
    let mv = prob.add_rect("M", m, m);
    let mut lmi = LmiBuilder::new(n, opts.effective_eps());
    add_lyapunov_terms(&prob, &mut lmi, p, a);
    add_feedback_terms(&prob, &mut lmi, nvar, b, c);
    prob.add_lmi(lmi)?;
    // B M = P B
    for i in 0..n {
        for j in 0..m {
            let mut terms = Vec::new();
            for k in 0..m {
                if b[(i, k)] != 0.0 {
                    terms.push((prob.rect(mv, k, j), b[(i, k)]));
                }
            }
            for k in 0..n {
                if b[(k, j)] != 0.0 {
                    terms.push((prob.sym(p, i, k), -b[(k, j)]));
                }
            }
            prob.add_eq(terms, 0.0)?;
        }
    }
    for k in 0..m {
        for l in 0..r {
            prob.add_abs_le(&[(prob.rect(nvar, k, l), 1.0)], opts.gain_bound, &[])?;
        }
    }
    Ok((prob, SofVars { p, nvar, m: mv }))
}

fn start_point(prob: &ConicProblem, vars: &SofVars, opts: &SofOptions) -> Vec<f64> {
    let mut x = vec![0.0; prob.n_scalars()];
    let n = match prob.shape(vars.p) {
        sdp::VarShape::Sym(n) => n,
        _ => unreachable!(),
    };
    let mid = 0.5 * (opts.delta + opts.p_ceiling);
    prob.set_value(vars.p, &(DMatrix::identity(n, n) * mid), &mut x);
    x
}

/// `F` solving `M F = N` without forming `M^{-1}`.
pub fn recover_gain(m: &DMatrix<f64>, nvar: &DMatrix<f64>, cond_cap: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() || m.nrows() != nvar.nrows() {
        return Err(Error::Dimension(format!("M {:?} and N {:?} do not conform", m.shape(), nvar.shape())));
    }
    if !linalg::all_finite(m) || !linalg::all_finite(nvar) {
        return Err(Error::NonFinite("gain recovery input"));
    }
    let condition = linalg::condition_number(m);
    if !(condition <= cond_cap) {
        return Err(Error::GainRecovery { condition, cap: cond_cap });
    }
    m.clone().lu().solve(nvar).ok_or(Error::GainRecovery { condition, cap: cond_cap })
}

/// Numbers checked for every certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateCheck {
    pub min_eig_p: f64,
    /// `lambda_max(A'P + PA + C'N'B' + BNC) + eps`; at most zero when the
    /// margined inequality holds.
    pub lmi_excess: f64,
    pub eq_residual: f64,
    pub max_re_closed_loop: f64,
}

impl CertificateCheck {
    /// Acceptance thresholds: `P >= delta - 1e-8`, LMI excess `<= 1e-6`,
    /// `|BM - PB| <= 1e-6`, strictly stable closed loop.
    pub fn passes(&self, delta: f64) -> bool {
        self.min_eig_p >= delta - 1e-8
            && self.lmi_excess <= 1e-6
            && self.eq_residual <= 1e-6
            && self.max_re_closed_loop < 0.0
    }
}

/// Recomputes every certificate property from the raw matrices.
pub fn check_certificate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    cert: &SofCertificate,
) -> Result<CertificateCheck> {
    let n = a.nrows();
    if cert.p.shape() != (n, n)
        || cert.nvar.shape() != (b.ncols(), c.nrows())
        || cert.m.shape() != (b.ncols(), b.ncols())
        || cert.f.shape() != cert.nvar.shape()
    {
        return Err(Error::Dimension("certificate does not match the triple".into()));
    }
    let bnc = b * &cert.nvar * c;
    let lmi = a.transpose() * &cert.p + &cert.p * a + &bnc + bnc.transpose();
    let closed = a + b * &cert.f * c;
    Ok(CertificateCheck {
        min_eig_p: linalg::min_sym_eigenvalue(&cert.p),
        lmi_excess: linalg::max_sym_eigenvalue(&lmi) + cert.eps,
        eq_residual: linalg::max_abs(&(b * &cert.m - &cert.p * b)),
        max_re_closed_loop: linalg::spectral_abscissa(&closed)?,
    })
}

/// Spectral abscissa of `A` compressed to the orthogonal complement of
/// `range(B)`; `-inf` when that complement is trivial.
///
/// `BM = PB` keeps the complement invariant under `P`, so the margined LMI
/// with `P <= p_ceiling I` forces this abscissa to be at most
/// `-eps / (2 p_ceiling)`.
pub fn complement_abscissa(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if b.ncols() >= n {
        return Ok(f64::NEG_INFINITY);
    }
    let q = DMatrix::identity(n, n) - b * linalg::left_pseudo_inverse(b)?;
    let eig = nalgebra::linalg::SymmetricEigen::new(linalg::symmetrize(&q));
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let v = DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    linalg::spectral_abscissa(&(v.transpose() * a * v))
}

/// LMI test with explicit options.
///
/// Triples whose compressed abscissa sits above half the bound of
/// [`complement_abscissa`] are reported infeasible without a solve.
pub fn sof_feasible_with(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, opts: &SofOptions) -> Result<SofVerdict> {
    let (prob, vars) = build_sof_problem(a, b, c, opts)?;
    let bound = -opts.effective_eps() / (2.0 * opts.p_ceiling);
    if complement_abscissa(a, b)? >= 0.5 * bound {
        return Ok(SofVerdict::Infeasible);
    }
    let so = SolveOptions { tol: opts.tol, start: Some(start_point(&prob, &vars, opts)), ..Default::default() };
    let out = ReferenceBackend.solve(&prob, &so)?;
    match out.status {
        Status::Infeasible => Ok(SofVerdict::Infeasible),
        Status::Inconclusive => Ok(SofVerdict::Inconclusive(out.note.unwrap_or_else(|| "solver inconclusive".into()))),
        Status::Feasible => {
            let x = out.values.expect("feasible outcome carries values");
            let p = linalg::symmetrize(&prob.value(vars.p, &x));
            let nvar = prob.value(vars.nvar, &x);
            let m = prob.value(vars.m, &x);
            let f = match recover_gain(&m, &nvar, opts.cond_cap) {
                Ok(f) => f,
                Err(e) => return Ok(SofVerdict::Inconclusive(format!("{e}"))),
            };
            let cert = SofCertificate { p, m, nvar, f, eps: opts.effective_eps(), m_dim: b.ncols(), r_dim: c.nrows() };
            let chk = check_certificate(a, b, c, &cert)?;
            if !(chk.max_re_closed_loop < 0.0) {
                return Ok(SofVerdict::Inconclusive(format!(
                    "recovered gain leaves closed-loop eigenvalue at {:.3e}",
                    chk.max_re_closed_loop
                )));
            }
            Ok(SofVerdict::Feasible(cert))
        }
    }
}

/// LMI test with default options and margin `eps`.
pub fn sof_feasible(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, eps: f64) -> Result<SofVerdict> {
    sof_feasible_with(a, b, c, &SofOptions::with_eps(eps))
}

/// Signed feasibility margin of the SOF problem: positive iff feasible. Used
/// to keep test instances away from the feasibility boundary.
pub fn sof_margin(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, opts: &SofOptions) -> Result<Option<f64>> {
    let (prob, vars) = build_sof_problem(a, b, c, opts)?;
    let so = SolveOptions { tol: opts.tol, start: Some(start_point(&prob, &vars, opts)), margin: true, ..Default::default() };
    Ok(ReferenceBackend.solve(&prob, &so)?.margin)
}

/// The LMI test on `(A, B_q, C_q)`. Selections without an active actuator
/// or sensor are infeasible without a solve.
pub fn selection_feasible_with(net: &DynNetwork, s: &Selection, opts: &SofOptions) -> Result<SofVerdict> {
    if s.n() != net.n_nodes() {
        return Err(Error::Dimension(format!("selection has N = {}, network has {}", s.n(), net.n_nodes())));
    }
    if s.count_actuators() == 0 || s.count_sensors() == 0 {
        return Ok(SofVerdict::Infeasible);
    }
    let (bq, cq) = netmodel::reduced_matrices(net, s)?;
    sof_feasible_with(net.a(), &bq, &cq, opts)
}

pub fn selection_feasible(net: &DynNetwork, s: &Selection, eps: f64) -> Result<SofVerdict> {
    selection_feasible_with(net, s, &SofOptions::with_eps(eps))
}

/// Feasibility answers for selections, as consumed by the search methods.
pub trait SelectionOracle {
    fn check(&mut self, s: &Selection) -> Result<SofVerdict>;
}

/// Oracle backed by [`selection_feasible_with`], counting solves.
#[derive(Debug, Clone)]
pub struct LmiOracle<'a> {
    pub net: &'a DynNetwork,
    pub opts: SofOptions,
    /// LMI solves performed (trivially infeasible selections are not counted).
    pub solves: usize,
}

impl<'a> LmiOracle<'a> {
    pub fn new(net: &'a DynNetwork, opts: SofOptions) -> Self {
        Self { net, opts, solves: 0 }
    }
}

impl SelectionOracle for LmiOracle<'_> {
    fn check(&mut self, s: &Selection) -> Result<SofVerdict> {
        if s.count_actuators() > 0 && s.count_sensors() > 0 {
            self.solves += 1;
        }
        selection_feasible_with(self.net, s, &self.opts)
    }
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub eps: f64,
    pub status: Status,
    /// Largest closed-loop real part for feasible entries.
    pub max_re: Option<f64>,
}

/// Solves the selection at each margin and reports the achieved spectral abscissa.
pub fn epsilon_sweep(net: &DynNetwork, s: &Selection, eps_list: &[f64], base: &SofOptions) -> Result<Vec<SweepPoint>> {
    let (pi, gamma) = netmodel::build_selection_matrices(s, net)?;
    let mut out = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let opts = SofOptions { eps, ..base.clone() };
        let v = selection_feasible_with(net, s, &opts)?;
        let max_re = match &v {
            SofVerdict::Feasible(cert) => {
                let f = net.embed_gain(s, &cert.f)?;
                Some(netmodel::closed_loop_abscissa(net, &pi, &gamma, &f)?)
            }
            _ => None,
        };
        out.push(SweepPoint { eps: opts.effective_eps(), status: v.status(), max_re });
    }
    Ok(out)
}

/// `M = (B'B)^{-1} B' P B` from the invertibility argument for `M`.
pub fn lemma_m(b: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(linalg::left_pseudo_inverse(b)? * p * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{gen_random_network, NodeDims, RandomNetworkParams};

    fn assert_cert_ok(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, v: &SofVerdict) {
        let cert = v.certificate().unwrap_or_else(|| panic!("not feasible: {v:?}"));
        let chk = check_certificate(a, b, c, cert).unwrap();
        assert!(chk.passes(DEFAULT_DELTA), "{chk:?}");
        assert!(chk.max_re_closed_loop <= -cert.eps + 1e-6, "{chk:?}");
    }

    #[test]
    fn stable_a_is_feasible() {
        let a = -DMatrix::identity(2, 2);
        let id = DMatrix::identity(2, 2);
        let v = sof_feasible(&a, &id, &id, DEFAULT_EPS).unwrap();
        assert_cert_ok(&a, &id, &id, &v);
    }

    #[test]
    fn double_integrator_depends_on_basis() {
        // [p, v]: BM = PB forces P_12 = 0 and the (1,1) entry of the LMI to 0
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::identity(2, 2);
        assert_eq!(sof_feasible(&a, &b, &c, DEFAULT_EPS).unwrap(), SofVerdict::Infeasible);
    }

    #[test]
    fn double_integrator_is_stabilized() {
        // [p, p + v]
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::identity(2, 2);
        let v = sof_feasible(&a, &b, &c, DEFAULT_EPS).unwrap();
        assert_cert_ok(&a, &b, &c, &v);
    }

    #[test]
    fn scalar_unstable_needs_gain_below_minus_one() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let v = sof_feasible(&one, &one, &one, DEFAULT_EPS).unwrap();
        let f = v.certificate().unwrap().f[(0, 0)];
        assert!(1.0 + f < 0.0);
    }

    #[test]
    fn diag_unstable_with_full_actuation() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let id = DMatrix::identity(2, 2);
        let v = sof_feasible(&a, &id, &id, DEFAULT_EPS).unwrap();
        assert_cert_ok(&a, &id, &id, &v);
    }

    #[test]
    fn unobservable_unstable_mode_is_infeasible() {
        // x1 unstable, only x2 measured and x1 never influences x2
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::identity(2, 2);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(sof_feasible(&a, &b, &c, DEFAULT_EPS).unwrap(), SofVerdict::Infeasible);
    }

    #[test]
    fn rank_deficient_input_is_an_error() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(sof_feasible(&a, &b, &a, 1e-3), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn recover_gain_identity_and_cap() {
        let n = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(recover_gain(&DMatrix::identity(2, 2), &n, 1e10).unwrap(), n);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12]);
        assert!(matches!(recover_gain(&sing, &n, 1e10), Err(Error::GainRecovery { .. })));
    }

    #[test]
    fn lemma_m_with_identity() {
        let id = DMatrix::<f64>::identity(3, 3);
        let m = lemma_m(&id, &id).unwrap();
        assert!((m - id).abs().max() < 1e-14);
    }

    #[test]
    fn selection_without_actuator_skips_solver() {
        let net = DynNetwork::new(
            alloc::vec![NodeDims::new(1, 1, 1); 2],
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let s = Selection::new(&[false, false], &[true, true]).unwrap();
        let mut o = LmiOracle::new(&net, SofOptions::default());
        assert_eq!(o.check(&s).unwrap(), SofVerdict::Infeasible);
        assert_eq!(o.solves, 0);
    }

    #[test]
    fn random_network_all_active_is_feasible() {
        let net = gen_random_network(&RandomNetworkParams { nodes: 4, seed: 11, ..Default::default() }).unwrap();
        let v = selection_feasible(&net, &Selection::all_active(4), DEFAULT_EPS).unwrap();
        let cert = v.certificate().unwrap_or_else(|| panic!("not feasible: {v:?}"));
        let (bq, cq) = netmodel::reduced_matrices(&net, &Selection::all_active(4)).unwrap();
        assert!(check_certificate(net.a(), &bq, &cq, cert).unwrap().passes(DEFAULT_DELTA));
    }

    #[test]
    fn sweep_respects_margin() {
        let net = gen_random_network(&RandomNetworkParams { nodes: 3, seed: 5, ..Default::default() }).unwrap();
        let pts = epsilon_sweep(&net, &Selection::all_active(3), &[0.0, 1e-3, 1e-2, 1e-1], &SofOptions::default()).unwrap();
        assert_eq!(pts[0].eps, DEFAULT_DELTA);
        for p in pts {
            if let Some(re) = p.max_re {
                assert!(re <= -p.eps + 1e-6, "{p:?}");
            }
        }
    }
}
