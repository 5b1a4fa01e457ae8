//! Candidate sets, the binary search algorithm over them and the exhaustive
//! oracle used to certify optima on small networks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::netmodel::{LogisticConstraint, Selection};
use crate::sdp::Status;
use crate::sof::{SelectionOracle, SofCertificate, SofVerdict};

/// Largest `N` for which candidate sets are enumerated (`2^{2N}` strings).
pub const ENUMERATION_CAP: usize = 12;

/// Lexicographic key of the tuple `(pi_1..pi_N, gamma_1..gamma_N)`: the first
/// tuple entry becomes the most significant bit.
fn lex_key(n: usize, mask: u64) -> u64 {
    let w = 2 * n as u32;
    if w == 0 {
        0
    } else {
        mask.reverse_bits() >> (64 - w)
    }
}

/// Candidate order: fewer active bits first, then lexicographically
/// descending tuples, which lists `(1,0,0,0)` before `(0,1,0,0)`.
pub fn mask_cmp(n: usize, a: u64, b: u64) -> Ordering {
    a.count_ones().cmp(&b.count_ones()).then_with(|| lex_key(n, b).cmp(&lex_key(n, a)))
}

/// `S_q | S == S_q`, i.e. every bit of `s` is also set in `sq`.
pub fn submask(sq: &Selection, s: &Selection) -> bool {
    sq.n() == s.n() && sq.mask() | s.mask() == sq.mask()
}

/// Ordered, duplicate-free list of admissible selections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    n: usize,
    masks: Vec<u64>,
}

impl CandidateSet {
    /// Validates order, uniqueness and width of an existing mask list.
    pub fn from_masks(n: usize, masks: Vec<u64>) -> Result<Self> {
        check_cap(n)?;
        let limit = if n == 0 { 1 } else { 1u64 << (2 * n) };
        if let Some(m) = masks.iter().find(|&&m| m >= limit) {
            return Err(Error::InvalidInput(format!("mask {m:#x} has bits beyond 2N = {}", 2 * n)));
        }
        for w in masks.windows(2) {
            if mask_cmp(n, w[0], w[1]) != Ordering::Less {
                return Err(Error::InvalidInput(format!(
                    "masks {:#x} and {:#x} are duplicated or out of order",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { n, masks })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.masks.len()
    }
    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
    pub fn masks(&self) -> &[u64] {
        &self.masks
    }
    pub fn get(&self, i: usize) -> Option<Selection> {
        self.masks.get(i).map(|&m| to_selection(self.n, m))
    }
    pub fn iter(&self) -> impl Iterator<Item = Selection> + '_ {
        self.masks.iter().map(move |&m| to_selection(self.n, m))
    }
}

fn to_selection(n: usize, m: u64) -> Selection {
    Selection::from_mask(n, m as u128).expect("mask width checked on construction")
}

fn check_cap(n: usize) -> Result<()> {
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { n, cap: ENUMERATION_CAP });
    }
    Ok(())
}

/// Every logistic-feasible string, sorted by [`mask_cmp`].
pub fn build_candidate_set(constraint: &LogisticConstraint) -> Result<CandidateSet> {
    let n = constraint.n();
    check_cap(n)?;
    let mut masks: Vec<u64> = (0..1u64 << (2 * n))
        .filter(|&m| (m.count_ones() as usize) >= constraint.wmin() && (m.count_ones() as usize) <= constraint.wmax())
        .filter(|&m| constraint.membership(&to_selection(n, m)))
        .collect();
    masks.sort_unstable_by(|&a, &b| mask_cmp(n, a, b));
    Ok(CandidateSet { n, masks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsaStep {
    pub sigma: usize,
    /// 1-based midpoint index.
    pub q: usize,
    pub candidate: Selection,
    pub status: Status,
    /// The set left after pruning, recorded when requested.
    pub remaining: Option<Vec<Selection>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsaResult {
    pub best: Selection,
    pub certificate: Option<SofCertificate>,
    /// False when no candidate was feasible and `best` is the all-ones start.
    pub improved: bool,
    pub iterations: usize,
    pub inconclusive: usize,
    pub steps: Vec<BsaStep>,
}

/// Binary search over the candidate set. Inconclusive answers are handled as
/// infeasible and counted.
pub fn bsa<O: SelectionOracle + ?Sized>(oracle: &mut O, candidates: &CandidateSet, record_sets: bool) -> Result<BsaResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("candidate set is empty".into()));
    }
    let n = candidates.n;
    let mut set = candidates.masks.clone();
    let mut best = Selection::all_active(n);
    let mut certificate = None;
    let mut improved = false;
    let mut inconclusive = 0;
    let mut steps = Vec::new();
    while !set.is_empty() {
        let sigma = set.len();
        let q = sigma.div_ceil(2);
        let sq_mask = set[q - 1];
        let sq = to_selection(n, sq_mask);
        let verdict = oracle.check(&sq)?;
        let status = verdict.status();
        match verdict {
            SofVerdict::Feasible(cert) => {
                best = sq;
                certificate = Some(cert);
                improved = true;
                let h = sq_mask.count_ones();
                set.retain(|m| m.count_ones() < h);
            }
            other => {
                if let SofVerdict::Inconclusive(note) = other {
                    log::debug!("bsa: {sq} inconclusive ({note}), treated as infeasible");
                    inconclusive += 1;
                }
                set.retain(|m| sq_mask | m != sq_mask);
            }
        }
        log::trace!("bsa: sigma {sigma} q {q} {sq} {status:?} -> {}", set.len());
        steps.push(BsaStep {
            sigma,
            q,
            candidate: sq,
            status,
            remaining: record_sets.then(|| set.iter().map(|&m| to_selection(n, m)).collect()),
        });
    }
    Ok(BsaResult { best, certificate, improved, iterations: steps.len(), inconclusive, steps })
}

/// Solves every candidate, in candidate order.
pub fn sweep_statuses<O: SelectionOracle + ?Sized>(
    oracle: &mut O,
    candidates: &CandidateSet,
) -> Result<(Vec<Status>, Option<(usize, SofCertificate)>)> {
    let mut statuses = Vec::with_capacity(candidates.len());
    let mut first = None;
    for (i, s) in candidates.iter().enumerate() {
        let v = oracle.check(&s)?;
        statuses.push(v.status());
        if first.is_none() {
            if let SofVerdict::Feasible(c) = v {
                first = Some((i, c));
            }
        }
    }
    Ok((statuses, first))
}

/// A feasible selection with an infeasible superset, contradicting the
/// premise that subsets of infeasible selections are infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotonicityViolation {
    pub infeasible: Selection,
    pub feasible_subset: Selection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAnalysis {
    /// Index of the first feasible candidate.
    pub optimum: Option<usize>,
    pub h_opt: Option<usize>,
    pub feasible: usize,
    pub inconclusive: usize,
    /// Strictly infeasible candidates that have a feasible subset.
    pub violations: Vec<MonotonicityViolation>,
    /// Inconclusive candidates with a feasible subset; not counted as violations.
    pub suspect: usize,
}

impl SweepAnalysis {
    pub fn monotone(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Optimum and monotonicity check from per-candidate statuses.
pub fn analyze_sweep(candidates: &CandidateSet, statuses: &[Status]) -> Result<SweepAnalysis> {
    if statuses.len() != candidates.len() {
        return Err(Error::Dimension(format!("{} statuses for {} candidates", statuses.len(), candidates.len())));
    }
    let n = candidates.n;
    let bits = 2 * n;
    // witness[m]: some feasible submask of m, if any
    const NONE: u64 = u64::MAX;
    let mut witness = vec![NONE; 1usize << bits];
    for (&m, st) in candidates.masks.iter().zip(statuses) {
        if *st == Status::Feasible {
            witness[m as usize] = m;
        }
    }
    for b in 0..bits {
        for m in 0..witness.len() {
            if m >> b & 1 == 1 && witness[m] == NONE {
                witness[m] = witness[m ^ (1 << b)];
            }
        }
    }
    let mut violations = Vec::new();
    let mut suspect = 0;
    for (&m, st) in candidates.masks.iter().zip(statuses) {
        let w = witness[m as usize];
        if w == NONE || w == m {
            continue;
        }
        match st {
            Status::Infeasible => violations.push(MonotonicityViolation {
                infeasible: to_selection(n, m),
                feasible_subset: to_selection(n, w),
            }),
            Status::Inconclusive => suspect += 1,
            Status::Feasible => {}
        }
    }
    let optimum = statuses.iter().position(|s| *s == Status::Feasible);
    Ok(SweepAnalysis {
        optimum,
        h_opt: optimum.map(|i| candidates.masks[i].count_ones() as usize),
        feasible: statuses.iter().filter(|s| **s == Status::Feasible).count(),
        inconclusive: statuses.iter().filter(|s| **s == Status::Inconclusive).count(),
        violations,
        suspect,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// First feasible candidate and its certificate; `None` if nothing is feasible.
    pub optimum: Option<(Selection, SofCertificate)>,
    pub analysis: SweepAnalysis,
    pub statuses: Vec<Status>,
}

impl OracleResult {
    pub fn h_opt(&self) -> Option<usize> {
        self.analysis.h_opt
    }
}

/// Ground-truth optimum over the candidate set: solves every member, returns
/// the first feasible one in candidate order and reports monotonicity
/// violations found along the way.
pub fn exhaustive_oracle<O: SelectionOracle + ?Sized>(oracle: &mut O, candidates: &CandidateSet) -> Result<OracleResult> {
    let (statuses, first) = sweep_statuses(oracle, candidates)?;
    let analysis = analyze_sweep(candidates, &statuses)?;
    let optimum = first.map(|(i, c)| (to_selection(candidates.n, candidates.masks[i]), c));
    Ok(OracleResult { optimum, analysis, statuses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::StructuredConstraint;
    use alloc::collections::BTreeMap;
    use nalgebra::DMatrix;

    fn sel(t: &[u8]) -> Selection {
        Selection::from_tuple(t).unwrap()
    }

    fn one_to_three(n: usize) -> LogisticConstraint {
        StructuredConstraint { min_total: Some(1), max_total: Some(3), ..Default::default() }.compile(n).unwrap()
    }

    fn dummy_cert() -> SofCertificate {
        let z = DMatrix::zeros(1, 1);
        SofCertificate { p: z.clone(), m: z.clone(), nvar: z.clone(), f: z, eps: 0.0, m_dim: 1, r_dim: 1 }
    }

    /// Answers from a fixed table; anything else is infeasible.
    struct Stub {
        feasible: BTreeMap<u128, bool>,
        calls: Vec<Selection>,
    }

    impl Stub {
        fn new(feasible: &[&[u8]]) -> Self {
            Self { feasible: feasible.iter().map(|t| (sel(t).mask(), true)).collect(), calls: Vec::new() }
        }
    }

    impl SelectionOracle for Stub {
        fn check(&mut self, s: &Selection) -> Result<SofVerdict> {
            self.calls.push(*s);
            Ok(if self.feasible.contains_key(&s.mask()) { SofVerdict::Feasible(dummy_cert()) } else { SofVerdict::Infeasible })
        }
    }

    /// Feasible iff at least `k` bits set (monotone).
    struct Threshold(usize);
    impl SelectionOracle for Threshold {
        fn check(&mut self, s: &Selection) -> Result<SofVerdict> {
            Ok(if s.count_active() >= self.0 { SofVerdict::Feasible(dummy_cert()) } else { SofVerdict::Infeasible })
        }
    }

    #[test]
    fn example_candidate_set() {
        let set = build_candidate_set(&one_to_three(2)).unwrap();
        let expect: Vec<Selection> = [
            [1, 0, 0, 0],
            [0, 1, 0, 0],
            [0, 0, 1, 0],
            [0, 0, 0, 1],
            [1, 1, 0, 0],
            [1, 0, 1, 0],
            [1, 0, 0, 1],
            [0, 1, 1, 0],
            [0, 1, 0, 1],
            [0, 0, 1, 1],
            [1, 1, 1, 0],
            [1, 1, 0, 1],
            [1, 0, 1, 1],
            [0, 1, 1, 1],
        ]
        .iter()
        .map(|t| sel(t))
        .collect();
        assert_eq!(set.iter().collect::<Vec<_>>(), expect);
    }

    #[test]
    fn unconstrained_has_full_cube() {
        let set = build_candidate_set(&LogisticConstraint::unconstrained(2)).unwrap();
        assert_eq!(set.len(), 16);
        assert_eq!(set.get(0).unwrap(), Selection::empty(2));
    }

    #[test]
    fn forced_bit_is_respected() {
        let c = StructuredConstraint { forced_on_actuators: vec![0], ..Default::default() }.compile(3).unwrap();
        let set = build_candidate_set(&c).unwrap();
        assert_eq!(set.len(), 32);
        assert!(set.iter().all(|s| s.actuator(0)));
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            build_candidate_set(&LogisticConstraint::unconstrained(13)),
            Err(Error::EnumerationCap { n: 13, cap: 12 })
        ));
    }

    #[test]
    fn submask_cases() {
        let sq = sel(&[1, 0, 0, 1]);
        assert!(submask(&sq, &sq));
        assert!(submask(&sq, &Selection::empty(2)));
        assert!(submask(&sq, &sel(&[0, 0, 0, 1])));
        assert!(!submask(&sq, &sel(&[0, 1, 0, 0])));
    }

    #[test]
    fn example_walkthrough() {
        let set = build_candidate_set(&one_to_three(2)).unwrap();
        let mut stub = Stub::new(&[&[0, 1, 0, 1]]);
        let r = bsa(&mut stub, &set, true).unwrap();
        assert_eq!(r.steps[0].candidate, sel(&[1, 0, 0, 1]));
        assert_eq!(r.steps[0].status, Status::Infeasible);
        let s2 = r.steps[0].remaining.as_ref().unwrap();
        assert_eq!(s2.len(), 11);
        for gone in [[1, 0, 0, 0], [0, 0, 0, 1], [1, 0, 0, 1]] {
            assert!(!s2.contains(&sel(&gone)));
        }
        assert_eq!(r.steps[1].candidate, sel(&[0, 1, 0, 1]));
        assert_eq!(r.steps[1].remaining.as_ref().unwrap(), &vec![sel(&[0, 1, 0, 0]), sel(&[0, 0, 1, 0])]);
        assert_eq!(r.best, sel(&[0, 1, 0, 1]));
        assert!(r.improved);
        assert_eq!(r.iterations, 4);
    }

    #[test]
    fn single_feasible_candidate() {
        let set = CandidateSet::from_masks(2, vec![0b0101]).unwrap();
        let r = bsa(&mut Threshold(0), &set, false).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.best.mask(), 0b0101);
    }

    #[test]
    fn nothing_feasible_keeps_start() {
        let set = build_candidate_set(&one_to_three(2)).unwrap();
        let r = bsa(&mut Stub::new(&[]), &set, false).unwrap();
        assert!(!r.improved);
        assert_eq!(r.best, Selection::all_active(2));
        assert!(r.certificate.is_none());
        assert!(bsa(&mut Threshold(0), &CandidateSet::from_masks(2, vec![]).unwrap(), false).is_err());
    }

    #[test]
    fn bsa_matches_oracle_on_threshold() {
        for k in 1..=4 {
            let set = build_candidate_set(&LogisticConstraint::at_least_one_each(3)).unwrap();
            let r = bsa(&mut Threshold(k), &set, false).unwrap();
            let o = exhaustive_oracle(&mut Threshold(k), &set).unwrap();
            assert!(o.analysis.monotone());
            assert_eq!(Some(r.best.count_active()), o.h_opt());
        }
    }

    #[test]
    fn violation_is_reported() {
        // (1,0,1,0) feasible but its superset (1,1,1,0) is not
        let set = build_candidate_set(&one_to_three(2)).unwrap();
        let mut stub = Stub::new(&[&[1, 0, 1, 0], &[1, 0, 1, 1], &[0, 1, 1, 1]]);
        let o = exhaustive_oracle(&mut stub, &set).unwrap();
        assert_eq!(o.h_opt(), Some(2));
        assert_eq!(
            o.analysis.violations,
            vec![MonotonicityViolation { infeasible: sel(&[1, 1, 1, 0]), feasible_subset: sel(&[1, 0, 1, 0]) }]
        );
    }

    #[test]
    fn from_masks_validates() {
        assert!(CandidateSet::from_masks(2, vec![0b0011, 0b0001]).is_err());
        assert!(CandidateSet::from_masks(2, vec![0b0001, 0b0001]).is_err());
        assert!(CandidateSet::from_masks(2, vec![0b1_0000]).is_err());
        let set = build_candidate_set(&one_to_three(2)).unwrap();
        assert_eq!(CandidateSet::from_masks(2, set.masks().to_vec()).unwrap(), set);
    }

    proptest::proptest! {
        #[test]
        fn bsa_sets_shrink_and_incumbent_improves(seed in 0u64..500) {
            // random monotone oracle: feasible iff superset of one of a few seeds
            let n = 3;
            let gens: Vec<u64> = (0..3).map(|i| (seed.wrapping_mul(2654435761).rotate_left(7 * i) & 0x3f) | 1).collect();
            struct Up(Vec<u64>);
            impl SelectionOracle for Up {
                fn check(&mut self, s: &Selection) -> Result<SofVerdict> {
                    let m = s.mask() as u64;
                    Ok(if self.0.iter().any(|g| g & m == *g) { SofVerdict::Feasible(dummy_cert()) } else { SofVerdict::Infeasible })
                }
            }
            let set = build_candidate_set(&LogisticConstraint::unconstrained(n)).unwrap();
            let r = bsa(&mut Up(gens.clone()), &set, true).unwrap();
            let mut prev = set.len();
            let mut h = usize::MAX;
            for st in &r.steps {
                let now = st.remaining.as_ref().unwrap().len();
                proptest::prop_assert!(now < prev);
                prev = now;
                if st.status == Status::Feasible {
                    proptest::prop_assert!(st.candidate.count_active() < h);
                    h = st.candidate.count_active();
                }
            }
            let o = exhaustive_oracle(&mut Up(gens), &set).unwrap();
            proptest::prop_assert!(o.analysis.monotone());
            proptest::prop_assert_eq!(Some(r.best.count_active()), o.h_opt());
        }
    }
}
