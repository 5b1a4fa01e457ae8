//! Primal-dual interior point method on the dual form
//! `max b.y  s.t.  Z = C - sum y_i A_i >= 0` (block diagonal, with a
//! diagonal block for linear rows). Iterates stay dual feasible; the primal
//! `X` may be infeasible. Search direction: HKM with Mehrotra
//! predictor-corrector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::presolve::Reduced;
use super::{Status, ToleranceSet};

const STEP_FACTOR: f64 = 0.98;
const CONVERGED_REL_GAP: f64 = 1e-9;

type Entries = Vec<(usize, usize, f64)>;

struct SBlock {
    n: usize,
    c: DMatrix<f64>,
    /// `(var, full symmetric entries, distinct columns)`.
    mats: Vec<(usize, Entries, Vec<usize>)>,
}

/// Reduced problem in IPM layout: blocks `C - sum y_i A_i >= 0`, rows
/// `a . y <= rhs` (scaled to unit max coefficient), minimize `obj . y`.
pub(super) struct IpmData {
    m: usize,
    blocks: Vec<SBlock>,
    lp: Vec<(Vec<(usize, f64)>, f64)>,
    obj: Vec<f64>,
}

fn full_entries(upper: &[(u32, u32, f64)], scale: f64) -> (Entries, Vec<usize>) {
    let mut out = Vec::with_capacity(2 * upper.len());
    let mut cols = Vec::new();
    for &(r, c, v) in upper {
        let (r, c) = (r as usize, c as usize);
        out.push((r, c, scale * v));
        cols.push(c);
        if r != c {
            out.push((c, r, scale * v));
            cols.push(r);
        }
    }
    cols.sort_unstable();
    cols.dedup();
    (out, cols)
}

impl IpmData {
    pub fn from_reduced(r: &Reduced) -> Self {
        let blocks = r
            .blocks
            .iter()
            .map(|b| SBlock {
                n: b.dim,
                c: -&b.constant,
                mats: b
                    .terms
                    .iter()
                    .map(|(k, e)| {
                        let (full, cols) = full_entries(e, 1.0);
                        (*k, full, cols)
                    })
                    .collect(),
            })
            .collect();
        let lp = r
            .rows
            .iter()
            .map(|(t, rhs)| {
                let s = t.iter().fold(0.0_f64, |m, x| m.max(x.1.abs()));
                (t.iter().map(|&(k, v)| (k, v / s)).collect(), rhs / s)
            })
            .collect();
        Self { m: r.kept.len(), blocks, lp, obj: r.obj.clone() }
    }

    fn is_empty(&self) -> bool {
        self.blocks.is_empty() && self.lp.is_empty()
    }

    /// Smallest slack over all blocks and rows at `y`.
    fn min_slack(&self, y: &[f64]) -> f64 {
        let mut lam = f64::INFINITY;
        for b in &self.blocks {
            let z = slack_matrix(b, y);
            lam = lam.min(crate::linalg::min_sym_eigenvalue(&z));
        }
        for (a, c) in &self.lp {
            lam = lam.min(c - dot(a, y));
        }
        lam
    }
}

fn dot(a: &[(usize, f64)], y: &[f64]) -> f64 {
    a.iter().map(|&(k, v)| v * y[k]).sum()
}

fn slack_matrix(b: &SBlock, y: &[f64]) -> DMatrix<f64> {
    let mut z = b.c.clone();
    for (k, e, _) in &b.mats {
        let yk = y[*k];
        if yk != 0.0 {
            for &(r, c, v) in e {
                z[(r, c)] -= yk * v;
            }
        }
    }
    z
}

fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Row-major lower Cholesky factor of a dense symmetric matrix.
struct DenseChol {
    n: usize,
    l: Vec<f64>,
}

impl DenseChol {
    fn new(mut a: Vec<f64>, n: usize) -> Option<Self> {
        for i in 0..n {
            let (done, rest) = a.split_at_mut(i * n);
            let row = &mut rest[..n];
            for j in 0..i {
                let lj = &done[j * n..j * n + j];
                let s = row[j] - dot_slices(&row[..j], lj);
                row[j] = s / done[j * n + j];
            }
            let d = row[i] - dot_slices(&row[..i], &row[..i]);
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            row[i] = libm::sqrt(d);
        }
        Some(Self { n, l: a })
    }

    fn solve(&self, mut b: DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let w = b.as_mut_slice();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            w[i] = (w[i] - dot_slices(row, &w[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            w[i] /= self.l[i * n + i];
            let xi = w[i];
            let row = &self.l[i * n..i * n + i];
            for (wk, lk) in w[..i].iter_mut().zip(row) {
                *wk -= lk * xi;
            }
        }
        b
    }
}

struct Sdp {
    m: usize,
    blocks: Vec<SBlock>,
    lp: Vec<(Vec<(usize, f64)>, f64)>,
    b: DVector<f64>,
}

struct Info<'a> {
    y: &'a DVector<f64>,
    dobj: f64,
    ub: f64,
    mu: f64,
}

enum Control {
    Continue,
    Stop,
}

struct RunResult {
    y: DVector<f64>,
    iterations: usize,
    failure: Option<&'static str>,
}

struct State {
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
    x: Vec<DMatrix<f64>>,
    zl: Vec<f64>,
    xl: Vec<f64>,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `alpha` with `m + alpha * d >= 0`, given `m > 0`.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(ch) = Cholesky::new(m.clone()) else { return 0.0 };
    let l = ch.l();
    let Some(w1) = l.solve_lower_triangular(d) else { return 0.0 };
    let Some(w) = l.solve_lower_triangular(&w1.transpose()) else { return 0.0 };
    let ev = SymmetricEigen::new(sym(&w)).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if lo >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lo
    }
}

fn max_step_lp(v: &[f64], d: &[f64]) -> f64 {
    v.iter().zip(d).filter(|(_, &dv)| dv < 0.0).map(|(&x, &dv)| -x / dv).fold(f64::INFINITY, f64::min)
}

impl Sdp {
    fn n_total(&self) -> usize {
        self.blocks.iter().map(|b| b.n).sum::<usize>() + self.lp.len()
    }

    fn slacks(&self, y: &DVector<f64>) -> Option<(Vec<DMatrix<f64>>, Vec<f64>)> {
        let ys = y.as_slice();
        let z: Vec<DMatrix<f64>> = self.blocks.iter().map(|b| slack_matrix(b, ys)).collect();
        let zl: Vec<f64> = self.lp.iter().map(|(a, c)| c - dot(a, ys)).collect();
        if zl.iter().any(|v| !(*v > 0.0)) {
            return None;
        }
        for zb in &z {
            Cholesky::new(zb.clone())?;
        }
        Some((z, zl))
    }

    /// `A(W)` for block matrices `w` and row values `wl`.
    fn apply_a(&self, w: &[DMatrix<f64>], wl: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (b, wb) in self.blocks.iter().zip(w) {
            for (k, e, _) in &b.mats {
                out[*k] += e.iter().map(|&(r, c, v)| v * wb[(r, c)]).sum::<f64>();
            }
        }
        for ((a, _), &x) in self.lp.iter().zip(wl) {
            for &(k, v) in a {
                out[k] += v * x;
            }
        }
        out
    }

    /// `-A*(dy)` per block and row.
    fn dz(&self, dy: &DVector<f64>) -> (Vec<DMatrix<f64>>, Vec<f64>) {
        let d = dy.as_slice();
        let z = self
            .blocks
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.n, b.n);
                for (k, e, _) in &b.mats {
                    let dk = d[*k];
                    if dk != 0.0 {
                        for &(r, c, v) in e {
                            m[(r, c)] -= dk * v;
                        }
                    }
                }
                m
            })
            .collect();
        let zl = self.lp.iter().map(|(a, _)| -dot(a, d)).collect();
        (z, zl)
    }

    fn schur(&self, st: &State, zinv: &[DMatrix<f64>]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m * m];
        for ((b, x), zi) in self.blocks.iter().zip(&st.x).zip(zinv) {
            let n = b.n;
            let (xs, zs) = (x.as_slice(), zi.as_slice());
            let mut pos = vec![0usize; n];
            let mut t: Vec<f64> = Vec::new();
            let mut g = vec![0.0; n * n];
            for (jpos, (j, ej, cols)) in b.mats.iter().enumerate() {
                // T = X A_j restricted to its nonzero columns; G = T Z^{-1}
                for (l, &c) in cols.iter().enumerate() {
                    pos[c] = l;
                }
                t.clear();
                t.resize(n * cols.len(), 0.0);
                for &(r, c, v) in ej {
                    let l = pos[c];
                    for (a, xv) in t[l * n..(l + 1) * n].iter_mut().zip(&xs[r * n..(r + 1) * n]) {
                        *a += v * xv;
                    }
                }
                for k in 0..n {
                    let gk = &mut g[k * n..(k + 1) * n];
                    gk.fill(0.0);
                    for (l, &c) in cols.iter().enumerate() {
                        let w = zs[c + k * n];
                        for (a, tv) in gk.iter_mut().zip(&t[l * n..(l + 1) * n]) {
                            *a += w * tv;
                        }
                    }
                }
                for (i, ei, _) in &b.mats[jpos..] {
                    let val: f64 = ei.iter().map(|&(r, c, v)| v * g[c + r * n]).sum();
                    out[i * m + j] += val;
                    if i != j {
                        out[j * m + i] += val;
                    }
                }
            }
        }
        for ((a, _), (&x, &z)) in self.lp.iter().zip(st.xl.iter().zip(&st.zl)) {
            let d = x / z;
            for &(i, ai) in a {
                for &(j, aj) in a {
                    out[i * m + j] += d * ai * aj;
                }
            }
        }
        out
    }

    fn factor(m: Vec<f64>, n: usize) -> Option<DenseChol> {
        let top = (0..n).fold(0.0_f64, |a, i| a.max(m[i * n + i].abs())).max(1e-300);
        if let Some(ch) = DenseChol::new(m.clone(), n) {
            return Some(ch);
        }
        let mut reg = 1e-14 * top;
        for _ in 0..8 {
            let mut mm = m.clone();
            for i in 0..n {
                mm[i * n + i] += reg;
            }
            if let Some(ch) = DenseChol::new(mm, n) {
                return Some(ch);
            }
            reg *= 100.0;
        }
        None
    }

    /// Directions for rhs `b - A(sigma mu Z^{-1} - R)`.
    #[allow(clippy::type_complexity)]
    fn direction(
        &self,
        st: &State,
        zinv: &[DMatrix<f64>],
        chol: &DenseChol,
        sigma_mu: f64,
        r: Option<(&[DMatrix<f64>], &[f64])>,
    ) -> (DVector<f64>, Vec<DMatrix<f64>>, Vec<f64>, Vec<DMatrix<f64>>, Vec<f64>) {
        let mut tgt: Vec<DMatrix<f64>> = zinv.iter().map(|zi| zi * sigma_mu).collect();
        let mut tgt_l: Vec<f64> = st.zl.iter().map(|z| sigma_mu / z).collect();
        if let Some((rb, rl)) = r {
            for (t, rr) in tgt.iter_mut().zip(rb) {
                *t -= rr;
            }
            for (t, rr) in tgt_l.iter_mut().zip(rl) {
                *t -= rr;
            }
        }
        let rhs = &self.b - self.apply_a(&tgt, &tgt_l);
        let dy = chol.solve(rhs);
        let (dzb, dzl) = self.dz(&dy);
        let dxb: Vec<DMatrix<f64>> = tgt
            .iter()
            .zip(&st.x)
            .zip(&dzb)
            .zip(zinv)
            .map(|(((t, x), dz), zi)| t - x - sym(&(x * dz * zi)))
            .collect();
        let dxl: Vec<f64> = tgt_l
            .iter()
            .zip(&st.xl)
            .zip(&dzl)
            .zip(&st.zl)
            .map(|(((t, x), dz), z)| t - x - x * dz / z)
            .collect();
        (dy, dzb, dzl, dxb, dxl)
    }

    fn steps(&self, st: &State, dzb: &[DMatrix<f64>], dzl: &[f64], dxb: &[DMatrix<f64>], dxl: &[f64]) -> (f64, f64) {
        let mut ap = max_step_lp(&st.xl, dxl);
        let mut ad = max_step_lp(&st.zl, dzl);
        for i in 0..self.blocks.len() {
            ap = ap.min(max_step(&st.x[i], &dxb[i]));
            ad = ad.min(max_step(&st.z[i], &dzb[i]));
        }
        (ap, ad)
    }

    fn run(&self, y0: DVector<f64>, max_iter: usize, mut ctl: impl FnMut(&Info) -> Control) -> RunResult {
        let Some((z, zl)) = self.slacks(&y0) else {
            return RunResult { y: y0, iterations: 0, failure: Some("start point not interior") };
        };
        let x = self.blocks.iter().map(|b| DMatrix::identity(b.n, b.n)).collect();
        let xl = vec![1.0; self.lp.len()];
        let mut st = State { y: y0, z, x, zl, xl };
        let n_tot = self.n_total().max(1) as f64;
        let mut iter = 0;
        loop {
            let mut zinv = Vec::with_capacity(self.blocks.len());
            for zb in &st.z {
                match Cholesky::new(zb.clone()) {
                    Some(ch) => zinv.push(sym(&ch.inverse())),
                    None => return RunResult { y: st.y, iterations: iter, failure: Some("slack lost definiteness") },
                }
            }
            let xz: f64 = st.x.iter().zip(&st.z).map(|(x, z)| x.dot(z)).sum::<f64>()
                + st.xl.iter().zip(&st.zl).map(|(x, z)| x * z).sum::<f64>();
            let mu = xz / n_tot;
            let ax = self.apply_a(&st.x, &st.xl);
            let rp = &self.b - ax;
            let dobj = self.b.dot(&st.y);
            let pobj: f64 = self.blocks.iter().zip(&st.x).map(|(b, x)| b.c.dot(x)).sum::<f64>()
                + self.lp.iter().zip(&st.xl).map(|((_, c), x)| c * x).sum::<f64>();
            let est: f64 = rp.iter().zip(st.y.iter()).map(|(r, y)| r.abs() * (2.0 * y.abs()).max(1.0)).sum();
            let ub = pobj + est;
            let info = Info { y: &st.y, dobj, ub, mu };
            log::trace!("ipm {iter}: dobj {dobj:.9e} ub {ub:.9e} mu {mu:.3e} |rp| {:.3e}", rp.amax());
            if let Control::Stop = ctl(&info) {
                return RunResult { y: st.y, iterations: iter, failure: None };
            }
            if iter >= max_iter {
                return RunResult { y: st.y, iterations: iter, failure: Some("iteration cap") };
            }
            if !mu.is_finite() || mu <= 1e-300 {
                return RunResult { y: st.y, iterations: iter, failure: Some("complementarity vanished") };
            }
            iter += 1;

            let Some(chol) = Self::factor(self.schur(&st, &zinv), self.m) else {
                return RunResult { y: st.y, iterations: iter, failure: Some("Schur complement singular") };
            };
            // predictor
            let (_, dzb_a, dzl_a, dxb_a, dxl_a) = self.direction(&st, &zinv, &chol, 0.0, None);
            let (ap, ad) = self.steps(&st, &dzb_a, &dzl_a, &dxb_a, &dxl_a);
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let mut xz_aff = 0.0;
            for i in 0..self.blocks.len() {
                xz_aff += (&st.x[i] + &dxb_a[i] * ap).dot(&(&st.z[i] + &dzb_a[i] * ad));
            }
            for i in 0..self.lp.len() {
                xz_aff += (st.xl[i] + ap * dxl_a[i]) * (st.zl[i] + ad * dzl_a[i]);
            }
            let mu_aff = (xz_aff / n_tot).max(0.0);
            let sigma = libm::pow(mu_aff / mu, 3.0).clamp(0.0, 1.0);
            // corrector
            let rb: Vec<DMatrix<f64>> =
                (0..self.blocks.len()).map(|i| sym(&(&dxb_a[i] * &dzb_a[i] * &zinv[i]))).collect();
            let rl: Vec<f64> = (0..self.lp.len()).map(|i| dxl_a[i] * dzl_a[i] / st.zl[i]).collect();
            let (dy, dzb, dzl, dxb, dxl) = self.direction(&st, &zinv, &chol, sigma * mu, Some((&rb, &rl)));
            if !dy.iter().all(|v| v.is_finite()) {
                return RunResult { y: st.y, iterations: iter, failure: Some("non-finite direction") };
            }
            let (ap, ad) = self.steps(&st, &dzb, &dzl, &dxb, &dxl);
            let ap = (STEP_FACTOR * ap).min(1.0);
            let mut ad = (STEP_FACTOR * ad).min(1.0);

            let mut accepted = None;
            for _ in 0..30 {
                let ny = &st.y + &dy * ad;
                if let Some(s) = self.slacks(&ny) {
                    accepted = Some((ny, s));
                    break;
                }
                ad *= 0.8;
            }
            let Some((ny, (nz, nzl))) = accepted else {
                return RunResult { y: st.y, iterations: iter, failure: Some("dual step failed") };
            };
            for i in 0..self.blocks.len() {
                st.x[i] = sym(&(&st.x[i] + &dxb[i] * ap));
            }
            for i in 0..self.lp.len() {
                st.xl[i] += ap * dxl[i];
            }
            st.y = ny;
            st.z = nz;
            st.zl = nzl;
            if ap < 1e-12 && ad < 1e-12 {
                return RunResult { y: st.y, iterations: iter, failure: Some("stalled") };
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Phase1Mode {
    /// Stop at the first decision.
    Decide,
    /// Continue past a decision until the point is well inside the feasible set.
    Deep,
    /// Solve the margin problem to optimality.
    Margin,
}

pub(super) struct Phase1 {
    pub status: Status,
    pub point: Option<Vec<f64>>,
    pub iterations: usize,
    pub margin: Option<f64>,
    pub note: Option<String>,
}

/// Maximizes the uniform shift `s` in `Z - s I >= 0` (capped at 1).
pub(super) fn phase1(data: &IpmData, y0: &[f64], tol: &ToleranceSet, mode: Phase1Mode) -> Phase1 {
    let theta = tol.decide_margin;
    if data.is_empty() {
        return Phase1 { status: Status::Feasible, point: Some(y0.to_vec()), iterations: 0, margin: None, note: None };
    }
    let lam = data.min_slack(y0);
    if mode == Phase1Mode::Decide && lam >= theta {
        return Phase1 { status: Status::Feasible, point: Some(y0.to_vec()), iterations: 0, margin: None, note: None };
    }
    let m = data.m;
    let s_idx = m;
    let blocks = data
        .blocks
        .iter()
        .map(|b| {
            let mut mats: Vec<(usize, Entries, Vec<usize>)> =
                b.mats.iter().map(|(k, e, c)| (*k, e.clone(), c.clone())).collect();
            mats.push((s_idx, (0..b.n).map(|d| (d, d, 1.0)).collect(), (0..b.n).collect()));
            SBlock { n: b.n, c: b.c.clone(), mats }
        })
        .collect();
    let mut lp: Vec<(Vec<(usize, f64)>, f64)> = data
        .lp
        .iter()
        .map(|(a, c)| {
            let mut a = a.clone();
            a.push((s_idx, 1.0));
            (a, *c)
        })
        .collect();
    lp.push((vec![(s_idx, 1.0)], 1.0));
    let mut b = DVector::zeros(m + 1);
    b[s_idx] = 1.0;
    let sdp = Sdp { m: m + 1, blocks, lp, b };
    let s0 = (lam - 1.0).min(0.5);
    let mut y = DVector::from_iterator(m + 1, y0.iter().copied().chain(core::iter::once(s0)));
    if !y.iter().all(|v| v.is_finite()) {
        y = DVector::zeros(m + 1);
        y[s_idx] = (data.min_slack(&vec![0.0; m]) - 1.0).min(0.5);
    }

    let mut decided: Option<Status> = None;
    let mut last_dobj = f64::NEG_INFINITY;
    let mut last_ub = f64::INFINITY;
    let res = sdp.run(y, tol.max_iter, |info| {
        let s = info.y[s_idx];
        last_dobj = info.dobj;
        last_ub = last_ub.min(info.ub);
        let converged = info.ub - info.dobj <= CONVERGED_REL_GAP * info.dobj.abs().max(1.0) || info.mu < 1e-16;
        if s >= theta {
            decided = Some(Status::Feasible);
        } else if info.ub < -theta {
            decided = Some(Status::Infeasible);
        }
        let stop = match mode {
            Phase1Mode::Decide => decided.is_some() || converged,
            Phase1Mode::Deep => match decided {
                Some(Status::Feasible) => s >= 0.5 * info.ub || converged,
                Some(_) => true,
                None => converged,
            },
            Phase1Mode::Margin => converged || decided == Some(Status::Infeasible) && info.ub < -1e3 * theta,
        };
        if stop {
            Control::Stop
        } else {
            Control::Continue
        }
    });
    let s_final = res.y[s_idx];
    let status = if s_final >= theta {
        Status::Feasible
    } else if decided == Some(Status::Infeasible) {
        Status::Infeasible
    } else {
        Status::Inconclusive
    };
    let note = match (status, res.failure) {
        (Status::Inconclusive, Some(f)) => Some(String::from(f)),
        (Status::Inconclusive, None) => Some(String::from("feasibility margin indistinguishable from zero")),
        _ => None,
    };
    let point = (status == Status::Feasible).then(|| res.y.as_slice()[..m].to_vec());
    let margin = (mode == Phase1Mode::Margin).then(|| if status == Status::Infeasible { last_ub } else { s_final });
    let _ = last_dobj;
    Phase1 { status, point, iterations: res.iterations, margin, note }
}

pub(super) struct Phase2 {
    pub point: Vec<f64>,
    pub iterations: usize,
    /// Lower bound on `min obj . y`.
    pub lower_bound: f64,
    pub converged: bool,
    pub cutoff_hit: bool,
    /// Stopped early: the point beats the cutoff and the gap is below `coarse_gap`.
    pub coarse_stop: bool,
}

/// Minimizes `obj . y` from a strictly feasible `y0`.
pub(super) fn phase2(data: &IpmData, y0: &[f64], max_iter: usize, cutoff: Option<f64>, coarse_gap: Option<f64>) -> Phase2 {
    let sdp = Sdp {
        m: data.m,
        blocks: data
            .blocks
            .iter()
            .map(|b| SBlock { n: b.n, c: b.c.clone(), mats: b.mats.iter().map(|(k, e, c)| (*k, e.clone(), c.clone())).collect() })
            .collect(),
        lp: data.lp.clone(),
        b: -DVector::from_column_slice(&data.obj),
    };
    if data.is_empty() {
        let v: f64 = data.obj.iter().zip(y0).map(|(c, y)| c * y).sum();
        return Phase2 { point: y0.to_vec(), iterations: 0, lower_bound: v, converged: true, cutoff_hit: false, coarse_stop: false };
    }
    let mut best_lb = f64::NEG_INFINITY;
    let mut converged = false;
    let mut cutoff_hit = false;
    let mut coarse_stop = false;
    let res = sdp.run(DVector::from_column_slice(y0), max_iter, |info| {
        best_lb = best_lb.max(-info.ub);
        if info.ub - info.dobj <= CONVERGED_REL_GAP * info.dobj.abs().max(1.0) || info.mu < 1e-16 {
            converged = true;
            return Control::Stop;
        }
        if let Some(c) = cutoff {
            if best_lb >= c {
                cutoff_hit = true;
                return Control::Stop;
            }
            if let Some(g) = coarse_gap {
                if -info.dobj < c && -info.dobj - best_lb <= g {
                    coarse_stop = true;
                    return Control::Stop;
                }
            }
        }
        Control::Continue
    });
    let _ = res.failure;
    Phase2 { point: res.y.as_slice().to_vec(), iterations: res.iterations, lower_bound: best_lb, converged, cutoff_hit, coarse_stop }
}
