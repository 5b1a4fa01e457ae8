//! Forbidden-set heuristic with random candidate generation.

use alloc::vec::Vec;

use hashbrown::HashSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netmodel::{LogisticConstraint, Selection};
use crate::sof::{SelectionOracle, SofCertificate, SofVerdict};

/// Selections known to be infeasible (by solve, or by logistics when drawn).
#[derive(Debug, Clone, Default)]
pub struct ForbiddenSet {
    masks: HashSet<u128>,
    inserts: usize,
}

impl ForbiddenSet {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn insert(&mut self, s: &Selection) -> bool {
        self.inserts += 1;
        self.masks.insert(s.mask())
    }
    pub fn contains(&self, s: &Selection) -> bool {
        self.masks.contains(&s.mask())
    }
    pub fn len(&self) -> usize {
        self.masks.len()
    }
    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
    /// Insert calls made, including repeats.
    pub fn inserts(&self) -> usize {
        self.inserts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicOptions {
    pub max_iter: usize,
    pub max_infeasibility: usize,
    pub max_random: usize,
    pub seed: u64,
    /// Overrides for the activation window; default to the constraint's bounds.
    pub wmin: Option<usize>,
    pub wmax: Option<usize>,
}

impl Default for HeuristicOptions {
    fn default() -> Self {
        Self { max_iter: 50, max_infeasibility: 10, max_random: 10_000, seed: 0, wmin: None, wmax: None }
    }
}

impl HeuristicOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.max_infeasibility == 0 || self.max_random == 0 {
            return Err(Error::InvalidInput("max_iter, max_infeasibility and max_random must be positive".into()));
        }
        Ok(())
    }
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIter,
    WindowExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicStats {
    /// LMI checks performed (the iteration counter `p - 1`).
    pub solves: usize,
    pub infeasible: usize,
    pub inconclusive: usize,
    pub rejected_draws: usize,
    /// Times the generator gave up at some `q`.
    pub exhausted: usize,
    pub wmin: usize,
    pub wmax: usize,
    pub q: usize,
    pub termination: Termination,
    /// `(iteration, H)` at each improvement.
    pub improvements: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicResult {
    pub best: Selection,
    pub certificate: Option<SofCertificate>,
    pub improved: bool,
    pub stats: HeuristicStats,
}

/// Draws a selection with exactly `q` active bits that satisfies the
/// constraint and is not forbidden. Returns `None` (the zero tuple) after
/// `max_random` rejected draws, raising `wmin` to `q + 1`.
pub fn gen_candidate(
    q: usize,
    forbidden: &ForbiddenSet,
    constraint: &LogisticConstraint,
    max_random: usize,
    wmin: &mut usize,
    rng: &mut ChaCha8Rng,
    rejected: &mut usize,
) -> Option<Selection> {
    let n = constraint.n();
    if q == 0 || q > 2 * n {
        // the only string with no active bit is the zero tuple itself
        *wmin = q + 1;
        return None;
    }
    let mut r = 1;
    while r <= max_random {
        let mut mask = 0u128;
        for pos in rand::seq::index::sample(rng, 2 * n, q) {
            mask |= 1 << pos;
        }
        let s = Selection::from_mask(n, mask).expect("positions below 2N");
        if constraint.membership(&s) && !forbidden.contains(&s) {
            return Some(s);
        }
        *rejected += 1;
        r += 1;
        if r > max_random {
            *wmin = q + 1;
        }
    }
    None
}

/// Runs the heuristic from `S* = (1, ..., 1)`. Inconclusive checks are
/// treated as infeasible and counted.
pub fn heu<O: SelectionOracle + ?Sized>(
    oracle: &mut O,
    constraint: &LogisticConstraint,
    opts: &HeuristicOptions,
) -> Result<HeuristicResult> {
    opts.validate()?;
    let n = constraint.n();
    let mut wmin = opts.wmin.unwrap_or(constraint.wmin());
    let mut wmax = opts.wmax.unwrap_or(constraint.wmax()).min(2 * n);
    if wmin > wmax {
        return Err(Error::InvalidInput(alloc::format!("empty activation window [{wmin}, {wmax}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut forbidden = ForbiddenSet::new();
    let mut best = Selection::all_active(n);
    let mut certificate = None;
    let mut stats = HeuristicStats {
        solves: 0,
        infeasible: 0,
        inconclusive: 0,
        rejected_draws: 0,
        exhausted: 0,
        wmin,
        wmax,
        q: 0,
        termination: Termination::MaxIter,
        improvements: Vec::new(),
    };
    let (mut t, mut p) = (1usize, 1usize);
    let mut q = (wmin + wmax).div_ceil(2);
    while p <= opts.max_iter && wmin <= q && q <= wmax {
        while p <= opts.max_iter && t <= opts.max_infeasibility {
            let cand = gen_candidate(q, &forbidden, constraint, opts.max_random, &mut wmin, &mut rng, &mut stats.rejected_draws);
            let Some(s) = cand else {
                stats.exhausted += 1;
                log::debug!("heu: no fresh candidate with H = {q}, wmin -> {wmin}");
                t = 1;
                break;
            };
            stats.solves += 1;
            match oracle.check(&s)? {
                SofVerdict::Feasible(cert) => {
                    log::debug!("heu: p {p} {s} feasible, H = {q}");
                    best = s;
                    certificate = Some(cert);
                    stats.improvements.push((p, q));
                    wmax = q.saturating_sub(1);
                    t = 1;
                    p += 1;
                    break;
                }
                other => {
                    if let SofVerdict::Inconclusive(note) = other {
                        log::debug!("heu: {s} inconclusive ({note}), treated as infeasible");
                        stats.inconclusive += 1;
                    }
                    stats.infeasible += 1;
                    forbidden.insert(&s);
                    t += 1;
                    p += 1;
                }
            }
        }
        if t > opts.max_infeasibility {
            q = (q + wmax).div_ceil(2);
            t = 1;
        } else {
            q = (wmin + wmax).div_ceil(2);
        }
    }
    if p <= opts.max_iter {
        stats.termination = Termination::WindowExhausted;
    }
    stats.wmin = wmin;
    stats.wmax = wmax;
    stats.q = q;
    let improved = certificate.is_some();
    Ok(HeuristicResult { best, certificate, improved, stats })
}
