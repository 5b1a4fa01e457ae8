//! Problem reduction ahead of the interior point method.
//!
//! Passes, repeated until nothing changes:
//! - equality rows are eliminated by substitution, pivoting on a variable that
//!   does not enter any matrix inequality when possible;
//! - constant rows are checked and dropped; parallel `<=` rows are merged and
//!   opposite pairs with zero width become equalities;
//! - rows whose minimum activity over the known variable bounds meets the
//!   right-hand side fix their variables;
//! - variables that only enter `<=` rows are projected out (Fourier-Motzkin)
//!   when that does not grow the row count.
//!
//! Every elimination is recorded so a reduced solution can be expanded back.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;
use nalgebra::DMatrix;

use super::{ConicProblem, RowKind};
use crate::linalg;

const DROP_REL: f64 = 1e-13;
const ROW_TOL: f64 = 1e-9;
const PIVOT_REL: f64 = 0.1;
const BLOCK_TOL: f64 = 1e-10;

type Sparse = Vec<(usize, f64)>;
type SymEntries = Vec<(u32, u32, f64)>;

pub(super) enum Presolved {
    Infeasible(String),
    Reduced(Reduced),
}

/// Reduced dual-form data: every block reads `constant + sum y_i F_i <= 0`,
/// every row `a . y <= rhs`; minimize `obj . y + obj_const`.
pub(super) struct Reduced {
    pub kept: Vec<usize>,
    pub blocks: Vec<RBlock>,
    pub rows: Vec<(Sparse, f64)>,
    pub obj: Vec<f64>,
    pub obj_const: f64,
    post: Vec<Post>,
    n_full: usize,
}

pub(super) struct RBlock {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    /// `(reduced var, upper-triangle entries)`.
    pub terms: Vec<(usize, SymEntries)>,
}

enum Post {
    /// `x_var = e0 + sum e_k x_k`.
    Subst { var: usize, e0: f64, e: Sparse },
    /// Pick a value inside the bounds implied by the removed rows.
    Project { var: usize, uppers: Vec<(Sparse, f64, f64)>, lowers: Vec<(Sparse, f64, f64)> },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VState {
    Active,
    Gone,
}

struct WRow {
    terms: Sparse,
    rhs: f64,
    eq: bool,
    alive: bool,
    scale: f64,
}

struct WBlock {
    dim: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, SymEntries>,
}

struct Work {
    rows: Vec<WRow>,
    var_rows: Vec<Vec<u32>>,
    blocks: Vec<WBlock>,
    var_blocks: Vec<Vec<u32>>,
    obj: Vec<f64>,
    obj_const: f64,
    state: Vec<VState>,
    post: Vec<Post>,
}

fn max_abs(s: &[(usize, f64)]) -> f64 {
    s.iter().fold(0.0_f64, |m, t| m.max(t.1.abs()))
}

/// `a + alpha * b` over sorted sparse vectors, dropping cancelled entries.
fn axpy(a: &[(usize, f64)], alpha: f64, b: &[(usize, f64)]) -> Sparse {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i]);
            i += 1;
        } else if i >= a.len() || b[j].0 < a[i].0 {
            out.push((b[j].0, alpha * b[j].1));
            j += 1;
        } else {
            let x = a[i].1 + alpha * b[j].1;
            if x.abs() > DROP_REL * a[i].1.abs().max((alpha * b[j].1).abs()) {
                out.push((a[i].0, x));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

fn axpy_sym(a: &[(u32, u32, f64)], alpha: f64, b: &[(u32, u32, f64)]) -> SymEntries {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let key = |t: &(u32, u32, f64)| (t.0, t.1);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && key(&a[i]) < key(&b[j])) {
            out.push(a[i]);
            i += 1;
        } else if i >= a.len() || key(&b[j]) < key(&a[i]) {
            out.push((b[j].0, b[j].1, alpha * b[j].2));
            j += 1;
        } else {
            let x = a[i].2 + alpha * b[j].2;
            if x.abs() > DROP_REL * a[i].2.abs().max((alpha * b[j].2).abs()) {
                out.push((a[i].0, a[i].1, x));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

fn coef_of(terms: &[(usize, f64)], v: usize) -> Option<f64> {
    terms.binary_search_by_key(&v, |t| t.0).ok().map(|k| terms[k].1)
}

fn without(terms: &[(usize, f64)], v: usize) -> Sparse {
    terms.iter().copied().filter(|t| t.0 != v).collect()
}

impl Work {
    fn new(p: &ConicProblem) -> Self {
        let n = p.n_scalars;
        let mut w = Work {
            rows: Vec::new(),
            var_rows: vec![Vec::new(); n],
            blocks: Vec::new(),
            var_blocks: vec![Vec::new(); n],
            obj: vec![0.0; n],
            obj_const: 0.0,
            state: vec![VState::Active; n],
            post: Vec::new(),
        };
        for r in &p.rows {
            w.push_row(r.terms.clone(), r.rhs, r.kind == RowKind::Eq);
        }
        for l in &p.lmis {
            let mut constant = DMatrix::zeros(l.dim, l.dim);
            for &(r, c, v) in &l.constant {
                constant[(r, c)] += v;
                if r != c {
                    constant[(c, r)] += v;
                }
            }
            for d in 0..l.dim {
                constant[(d, d)] += l.margin;
            }
            let mut terms: BTreeMap<usize, SymEntries> = BTreeMap::new();
            for &(s, r, c, v) in &l.terms {
                terms.entry(s).or_default().push((r as u32, c as u32, v));
            }
            let bi = w.blocks.len() as u32;
            for (s, e) in terms.iter_mut() {
                e.sort_by_key(|t| (t.0, t.1));
                w.var_blocks[*s].push(bi);
            }
            w.blocks.push(WBlock { dim: l.dim, constant, terms });
        }
        if let Some(o) = &p.objective {
            for &(s, v) in o {
                w.obj[s] += v;
            }
        }
        w
    }

    fn push_row(&mut self, terms: Sparse, rhs: f64, eq: bool) {
        let idx = self.rows.len() as u32;
        for t in &terms {
            self.var_rows[t.0].push(idx);
        }
        let scale = max_abs(&terms).max(1.0);
        self.rows.push(WRow { terms, rhs, eq, alive: true, scale });
    }

    fn in_any_block(&self, v: usize) -> bool {
        self.var_blocks[v].iter().any(|&b| self.blocks[b as usize].terms.contains_key(&v))
    }

    fn live_rows_of(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.var_rows[v]
            .iter()
            .map(|&r| r as usize)
            .filter(|&r| self.rows[r].alive && coef_of(&self.rows[r].terms, v).is_some())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn substitute(&mut self, p: usize, e0: f64, e: &Sparse) {
        for ri in self.live_rows_of(p) {
            let row = &mut self.rows[ri];
            let c = coef_of(&row.terms, p).expect("live row holds var");
            let base = without(&row.terms, p);
            row.terms = axpy(&base, c, e);
            row.rhs -= c * e0;
            row.scale = row.scale.max(max_abs(&row.terms));
            for t in e {
                self.var_rows[t.0].push(ri as u32);
            }
        }
        let blocks: Vec<u32> = self.var_blocks[p].clone();
        for bi in blocks {
            let blk = &mut self.blocks[bi as usize];
            let Some(tp) = blk.terms.remove(&p) else { continue };
            for &(k, ek) in e {
                let cur = blk.terms.remove(&k).unwrap_or_default();
                let merged = axpy_sym(&cur, ek, &tp);
                if !merged.is_empty() {
                    blk.terms.insert(k, merged);
                    self.var_blocks[k].push(bi);
                }
            }
            if e0 != 0.0 {
                for &(r, c, v) in &tp {
                    let (r, c) = (r as usize, c as usize);
                    blk.constant[(r, c)] += e0 * v;
                    if r != c {
                        blk.constant[(c, r)] += e0 * v;
                    }
                }
            }
        }
        let cp = self.obj[p];
        if cp != 0.0 {
            for &(k, ek) in e {
                self.obj[k] += cp * ek;
            }
            self.obj_const += cp * e0;
            self.obj[p] = 0.0;
        }
        self.state[p] = VState::Gone;
        self.post.push(Post::Subst { var: p, e0, e: e.clone() });
    }

    fn eliminate_equalities(&mut self) -> Result<(), String> {
        for ri in 0..self.rows.len() {
            if !self.rows[ri].alive || !self.rows[ri].eq {
                continue;
            }
            let terms = self.rows[ri].terms.clone();
            let rhs = self.rows[ri].rhs;
            let scale = self.rows[ri].scale;
            let big = max_abs(&terms);
            if terms.is_empty() || big <= DROP_REL * scale {
                if rhs.abs() > ROW_TOL * scale {
                    return Err(format!("inconsistent equality (residual {rhs:.3e})"));
                }
                self.rows[ri].alive = false;
                continue;
            }
            let pivot = terms
                .iter()
                .filter(|t| t.1.abs() >= PIVOT_REL * big)
                .min_by_key(|t| (self.in_any_block(t.0), self.var_rows[t.0].len(), t.0))
                .copied()
                .expect("nonempty row has a pivot");
            self.rows[ri].alive = false;
            let (p, ap) = pivot;
            let e: Sparse = terms.iter().filter(|t| t.0 != p).map(|&(k, v)| (k, -v / ap)).collect();
            self.substitute(p, rhs / ap, &e);
        }
        Ok(())
    }

    fn clean(&mut self) -> Result<(), String> {
        for row in self.rows.iter_mut().filter(|r| r.alive) {
            let big = max_abs(&row.terms);
            let thresh = DROP_REL * row.scale.max(big);
            row.terms.retain(|t| t.1.abs() > thresh);
            if row.terms.is_empty() && !row.eq {
                if row.rhs < -ROW_TOL * row.scale {
                    return Err(format!("constant inequality violated by {:.3e}", -row.rhs));
                }
                row.alive = false;
            }
        }
        Ok(())
    }

    /// Merges parallel `<=` rows; zero-width opposite pairs become equalities.
    fn detect_pairs(&mut self) -> Result<bool, String> {
        let mut groups: HashMap<Vec<(usize, u64)>, [Option<(usize, f64)>; 2]> = HashMap::new();
        let mut order: Vec<Vec<(usize, u64)>> = Vec::new();
        for ri in 0..self.rows.len() {
            let row = &self.rows[ri];
            if !row.alive || row.eq || row.terms.is_empty() {
                continue;
            }
            let lead = row.terms[0].1;
            let sign = if lead > 0.0 { 0 } else { 1 };
            let norm = lead.abs();
            let key: Vec<(usize, u64)> = row
                .terms
                .iter()
                .map(|&(k, v)| {
                    let x = if sign == 0 { v / norm } else { -v / norm };
                    (k, (x + 0.0).to_bits())
                })
                .collect();
            let rhs = row.rhs / norm;
            let slot = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                [None, None]
            });
            match slot[sign] {
                Some((other, orhs)) => {
                    if rhs < orhs {
                        self.rows[other].alive = false;
                        slot[sign] = Some((ri, rhs));
                    } else {
                        self.rows[ri].alive = false;
                    }
                }
                None => slot[sign] = Some((ri, rhs)),
            }
        }
        let mut changed = false;
        for key in order {
            let [Some((rp, b1)), Some((rn, b2))] = groups[&key] else { continue };
            let width = b1 + b2;
            let tol = ROW_TOL * b1.abs().max(b2.abs()).max(1.0);
            if width < -tol {
                return Err(format!("opposite inequalities leave an empty interval (width {width:.3e})"));
            }
            if width <= tol {
                let lead = self.rows[rp].terms[0].1;
                let terms: Sparse = self.rows[rp].terms.iter().map(|&(k, v)| (k, v / lead)).collect();
                self.rows[rp].alive = false;
                self.rows[rn].alive = false;
                self.push_row(terms, 0.5 * (b1 - b2), true);
                changed = true;
            }
        }
        Ok(changed)
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.state.len();
        let mut lb = vec![f64::NEG_INFINITY; n];
        let mut ub = vec![f64::INFINITY; n];
        for row in self.rows.iter().filter(|r| r.alive && !r.eq && r.terms.len() == 1) {
            let (k, a) = row.terms[0];
            if a > 0.0 {
                ub[k] = ub[k].min(row.rhs / a);
            } else {
                lb[k] = lb[k].max(row.rhs / a);
            }
        }
        (lb, ub)
    }

    /// Rows whose minimum activity already meets the bound fix their variables.
    fn forcing_rows(&mut self) -> Result<bool, String> {
        let (lb, ub) = self.bounds();
        for k in 0..lb.len() {
            if lb[k] > ub[k] + ROW_TOL * lb[k].abs().max(ub[k].abs()).max(1.0) {
                return Err(format!("variable bounds cross ({:.3e} > {:.3e})", lb[k], ub[k]));
            }
        }
        let mut fixes: Vec<(usize, f64)> = Vec::new();
        let mut changed = false;
        for ri in 0..self.rows.len() {
            let row = &self.rows[ri];
            if !row.alive || row.eq || row.terms.len() < 2 {
                continue;
            }
            let mut minact = 0.0;
            let mut ok = true;
            for &(k, a) in &row.terms {
                let b = if a > 0.0 { lb[k] } else { ub[k] };
                if !b.is_finite() {
                    ok = false;
                    break;
                }
                minact += a * b;
            }
            if !ok {
                continue;
            }
            let tol = ROW_TOL * row.scale.max(row.rhs.abs());
            if minact > row.rhs + tol {
                return Err(format!("row cannot be satisfied within variable bounds ({minact:.3e} > {:.3e})", row.rhs));
            }
            if minact >= row.rhs - tol {
                for &(k, a) in &row.terms {
                    fixes.push((k, if a > 0.0 { lb[k] } else { ub[k] }));
                }
                self.rows[ri].alive = false;
                changed = true;
            }
        }
        fixes.sort_by(|a, b| a.0.cmp(&b.0));
        fixes.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        for (k, v) in fixes {
            self.push_row(vec![(k, 1.0)], v, true);
        }
        Ok(changed)
    }

    /// Projects out variables that only enter `<=` rows.
    fn project(&mut self) -> bool {
        let mut changed = false;
        for v in 0..self.state.len() {
            if self.state[v] != VState::Active || self.obj[v] != 0.0 || self.in_any_block(v) {
                continue;
            }
            let rows = self.live_rows_of(v);
            if rows.is_empty() || rows.iter().any(|&r| self.rows[r].eq) {
                continue;
            }
            let (pos, neg): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| coef_of(&self.rows[r].terms, v).unwrap() > 0.0);
            if pos.len() * neg.len() > pos.len() + neg.len() {
                continue;
            }
            let take = |w: &Work, r: usize| {
                let a = coef_of(&w.rows[r].terms, v).unwrap();
                (without(&w.rows[r].terms, v), w.rows[r].rhs, a)
            };
            let uppers: Vec<(Sparse, f64, f64)> = pos.iter().map(|&r| take(self, r)).collect();
            let lowers: Vec<(Sparse, f64, f64)> = neg.iter().map(|&r| take(self, r)).collect();
            for &r in &rows {
                self.rows[r].alive = false;
            }
            for (tu, bu, au) in &uppers {
                for (tl, bl, al) in &lowers {
                    let su: Sparse = tu.iter().map(|&(k, x)| (k, x / au)).collect();
                    let terms = axpy(&su, 1.0 / al.abs(), tl);
                    let rhs = bu / au + bl / al.abs();
                    self.push_row(terms, rhs, false);
                }
            }
            self.state[v] = VState::Gone;
            self.post.push(Post::Project { var: v, uppers, lowers });
            changed = true;
        }
        changed
    }

    fn run(&mut self) -> Result<(), String> {
        let mut rounds = 0;
        loop {
            rounds += 1;
            self.eliminate_equalities()?;
            self.clean()?;
            if rounds > 10_000 {
                break;
            }
            if self.detect_pairs()? {
                continue;
            }
            if self.forcing_rows()? {
                continue;
            }
            if self.project() {
                continue;
            }
            break;
        }
        for blk in &self.blocks {
            if blk.terms.is_empty() && blk.dim > 0 {
                let top = linalg::max_sym_eigenvalue(&blk.constant);
                let scale = linalg::max_abs(&blk.constant).max(1.0);
                if top > BLOCK_TOL * scale {
                    return Err(format!("constant matrix inequality violated by {top:.3e}"));
                }
            }
        }
        Ok(())
    }
}

pub(super) fn presolve(p: &ConicProblem) -> Presolved {
    let mut w = Work::new(p);
    if let Err(why) = w.run() {
        return Presolved::Infeasible(why);
    }
    let n = p.n_scalars;
    // variables still referenced by a constraint or the objective stay
    let mut used = vec![false; n];
    for row in w.rows.iter().filter(|r| r.alive) {
        for t in &row.terms {
            used[t.0] = true;
        }
    }
    for blk in &w.blocks {
        for k in blk.terms.keys() {
            used[*k] = true;
        }
    }
    for k in 0..n {
        if w.obj[k] != 0.0 {
            used[k] = true;
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&k| w.state[k] == VState::Active && used[k]).collect();
    let mut index = vec![usize::MAX; n];
    for (i, &k) in kept.iter().enumerate() {
        index[k] = i;
    }
    let rows: Vec<(Sparse, f64)> = w
        .rows
        .iter()
        .filter(|r| r.alive && !r.terms.is_empty())
        .map(|r| (r.terms.iter().map(|&(k, v)| (index[k], v)).collect(), r.rhs))
        .collect();
    let blocks: Vec<RBlock> = w
        .blocks
        .iter()
        .filter(|b| !b.terms.is_empty())
        .map(|b| RBlock {
            dim: b.dim,
            constant: b.constant.clone(),
            terms: b.terms.iter().map(|(k, e)| (index[*k], e.clone())).collect(),
        })
        .collect();
    let obj = kept.iter().map(|&k| w.obj[k]).collect();
    Presolved::Reduced(Reduced { kept, blocks, rows, obj, obj_const: w.obj_const, post: w.post, n_full: n })
}

impl Reduced {
    /// Expands reduced values to all scalars. Unreferenced scalars keep their
    /// `start` value.
    pub fn postsolve(&self, y: &[f64], start: &[f64]) -> Vec<f64> {
        let mut x = start.to_vec();
        debug_assert_eq!(x.len(), self.n_full);
        for (i, &k) in self.kept.iter().enumerate() {
            x[k] = y[i];
        }
        let eval = |x: &[f64], terms: &Sparse| terms.iter().map(|&(k, v)| v * x[k]).sum::<f64>();
        for step in self.post.iter().rev() {
            match step {
                Post::Subst { var, e0, e } => x[*var] = e0 + eval(&x, e),
                Post::Project { var, uppers, lowers } => {
                    let u = uppers.iter().map(|(t, b, a)| (b - eval(&x, t)) / a).fold(f64::INFINITY, f64::min);
                    let l = lowers.iter().map(|(t, b, a)| (b - eval(&x, t)) / a).fold(f64::NEG_INFINITY, f64::max);
                    x[*var] = match (l.is_finite(), u.is_finite()) {
                        (true, true) => 0.5 * (l + u),
                        (true, false) => l.max(x[*var]),
                        (false, true) => u.min(x[*var]),
                        (false, false) => x[*var],
                    };
                }
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ConicProblem, LmiBuilder};
    use super::*;

    #[test]
    fn axpy_merges_and_cancels() {
        let a = vec![(0, 1.0), (2, 2.0)];
        let b = vec![(1, 1.0), (2, 1.0)];
        assert_eq!(axpy(&a, -2.0, &b), vec![(0, 1.0), (1, -2.0)]);
    }

    #[test]
    fn zero_width_pair_becomes_fixed_value() {
        // x <= 0, -x <= 0, x in LMI: [x] <= -1 is infeasible once x = 0 is known
        let mut p = ConicProblem::new();
        let v = p.add_rect("x", 1, 1);
        let x = p.rect(v, 0, 0);
        p.add_abs_le(&[(x, 1.0)], 0.0, &[]).unwrap();
        let mut b = LmiBuilder::new(1, 1.0);
        b.add(x, 0, 0, 1.0);
        p.add_lmi(b).unwrap();
        assert!(matches!(presolve(&p), Presolved::Infeasible(_)));
    }

    #[test]
    fn projection_recovers_interval_midpoint() {
        // n appears only in |n - t| <= 1 and |n| <= 3; t is pinned by an LMI-free row set
        let mut p = ConicProblem::new();
        let v = p.add_rect("v", 1, 2);
        let (n, t) = (p.rect(v, 0, 0), p.rect(v, 0, 1));
        p.add_abs_le(&[(n, 1.0), (t, -1.0)], 1.0, &[]).unwrap();
        p.add_abs_le(&[(n, 1.0)], 3.0, &[]).unwrap();
        p.add_eq(vec![(t, 1.0)], 2.5).unwrap();
        let Presolved::Reduced(r) = presolve(&p) else { panic!("infeasible") };
        assert!(r.kept.is_empty());
        let x = r.postsolve(&[], &[0.0, 0.0]);
        assert_eq!(x[t], 2.5);
        // interval [1.5, 3]
        assert!((x[n] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn forcing_row_fixes_bits() {
        // b1 + b2 <= 0 with 0 <= b <= 1 pins both to zero
        let mut p = ConicProblem::new();
        let v = p.add_rect("b", 1, 2);
        let (b1, b2) = (p.rect(v, 0, 0), p.rect(v, 0, 1));
        for s in [b1, b2] {
            p.add_le(vec![(s, -1.0)], 0.0).unwrap();
            p.add_le(vec![(s, 1.0)], 1.0).unwrap();
        }
        p.add_le(vec![(b1, 1.0), (b2, 1.0)], 0.0).unwrap();
        let mut b = LmiBuilder::new(1, 0.0);
        b.add(b1, 0, 0, 1.0);
        b.add(b2, 0, 0, 1.0);
        p.add_lmi(b).unwrap();
        let Presolved::Reduced(r) = presolve(&p) else { panic!("infeasible") };
        assert!(r.kept.is_empty());
        assert!(r.blocks.is_empty());
    }
}
