//! Candidate sets on disk: a three-line header followed by one hex mask per
//! line, in candidate order.
//!
//! ```text
//! # sensact candidate set v1
//! N 4
//! constraint-sha256 9f2c...
//! 0x11
//! ...
//! ```
//!
//! Mask bit `k` is `pi_{k+1}` for `k < N` and `gamma_{k-N+1}` otherwise.

use std::fmt::Write as _;
use std::path::Path;

use sensact_core::combsearch::CandidateSet;
use sensact_core::netmodel::LogisticConstraint;

use crate::constraint::constraint_hash;
use crate::io::{read_to_string, write_new};
use crate::{AppError, Result};

const MAGIC: &str = "# sensact candidate set v1";

pub fn export(set: &CandidateSet, constraint: &LogisticConstraint) -> String {
    let mut out = String::with_capacity(12 * set.len() + 128);
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "N {}", set.n());
    let _ = writeln!(out, "constraint-sha256 {}", constraint_hash(constraint));
    for m in set.masks() {
        let _ = writeln!(out, "{m:#x}");
    }
    out
}

/// Parses a set and checks it against `constraint`: same `N`, same hash,
/// and the order, uniqueness and width checks of [`CandidateSet::from_masks`].
pub fn import(text: &str, constraint: &LogisticConstraint) -> Result<CandidateSet> {
    let mut lines = text.lines();
    let bad = |what: &str| AppError::Input(format!("candidate set: {what}"));
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing header line"));
    }
    let n: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("N "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad("missing or malformed N line"))?;
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("constraint-sha256 "))
        .map(str::trim)
        .ok_or_else(|| bad("missing constraint hash"))?;
    if n != constraint.n() {
        return Err(bad(&format!("built for N = {n}, constraint has N = {}", constraint.n())));
    }
    if hash != constraint_hash(constraint) {
        return Err(bad("constraint hash does not match the given constraint"));
    }
    let mut masks = Vec::new();
    for (i, l) in lines.enumerate() {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let digits = l.strip_prefix("0x").ok_or_else(|| bad(&format!("line {}: expected 0x prefix", i + 4)))?;
        let m = u64::from_str_radix(digits, 16).map_err(|e| bad(&format!("line {}: {e}", i + 4)))?;
        masks.push(m);
    }
    let set = CandidateSet::from_masks(n, masks)?;
    if let Some(s) = set.iter().find(|s| !constraint.membership(s)) {
        return Err(bad(&format!("{s} violates the constraint")));
    }
    Ok(set)
}

pub fn write(path: &Path, set: &CandidateSet, constraint: &LogisticConstraint, force: bool) -> Result<()> {
    write_new(path, export(set, constraint).as_bytes(), force)
}

pub fn read(path: &Path, constraint: &LogisticConstraint) -> Result<CandidateSet> {
    import(&read_to_string(path)?, constraint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sensact_core::combsearch::build_candidate_set;

    #[test]
    fn round_trip() {
        let c = LogisticConstraint::at_least_one_each(3);
        let set = build_candidate_set(&c).unwrap();
        let text = export(&set, &c);
        assert_eq!(import(&text, &c).unwrap(), set);
    }

    #[test]
    fn rejects_foreign_constraint_and_bad_order() {
        let c = LogisticConstraint::at_least_one_each(2);
        let text = export(&build_candidate_set(&c).unwrap(), &c);
        let other = LogisticConstraint::unconstrained(2);
        assert!(import(&text, &other).is_err());

        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(3, 4);
        assert!(import(&lines.join("\n"), &c).is_err());
        assert!(import(&text.replacen("N 2", "N 3", 1), &c).is_err());
    }
}
