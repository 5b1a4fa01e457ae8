//! Export in the sparse SDPA text format for cross-checking with other solvers.
//!
//! Unknowns are all scalars of the problem. Each matrix inequality becomes a
//! block `-(constant + margin I) - sum x_s F_s >= 0`; each `<=` row one
//! diagonal entry, each equality two. The objective is minimized (zero when
//! the problem is a pure feasibility problem).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{ConicProblem, RowKind};

pub fn write_sdpa(p: &ConicProblem) -> String {
    let mut out = String::new();
    let n_lp: usize = p.rows().iter().map(|r| if r.kind == RowKind::Eq { 2 } else { 1 }).sum();
    let mut sizes: Vec<String> = p.lmis().iter().map(|l| format!("{}", l.dim)).collect();
    if n_lp > 0 {
        sizes.push(format!("-{n_lp}"));
    }
    let _ = writeln!(out, "* sensact conic problem");
    let _ = writeln!(out, "{}", p.n_scalars());
    let _ = writeln!(out, "{}", sizes.len());
    let _ = writeln!(out, "{}", sizes.join(" "));
    let mut c = alloc::vec![0.0; p.n_scalars()];
    if let Some(o) = p.objective() {
        for &(s, v) in o {
            c[s] += v;
        }
    }
    let cs: Vec<String> = c.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(out, "{}", cs.join(" "));
    // entries: matno blkno i j value, 1-based; F0 is matrix 0
    for (bi, l) in p.lmis().iter().enumerate() {
        let blk = bi + 1;
        let mut constant = alloc::collections::BTreeMap::new();
        for &(r, col, v) in &l.constant {
            *constant.entry((r, col)).or_insert(0.0) += v;
        }
        for d in 0..l.dim {
            *constant.entry((d, d)).or_insert(0.0) += l.margin;
        }
        for ((r, col), v) in constant {
            if v != 0.0 {
                let _ = writeln!(out, "0 {blk} {} {} {:e}", r + 1, col + 1, v);
            }
        }
        for &(s, r, col, v) in &l.terms {
            let _ = writeln!(out, "{} {blk} {} {} {:e}", s + 1, r + 1, col + 1, -v);
        }
    }
    if n_lp > 0 {
        let blk = p.lmis().len() + 1;
        let mut k = 0;
        for r in p.rows() {
            let signs: &[f64] = if r.kind == RowKind::Eq { &[1.0, -1.0] } else { &[1.0] };
            for &sg in signs {
                k += 1;
                // sg * (rhs - a.x) >= 0
                if r.rhs != 0.0 {
                    let _ = writeln!(out, "0 {blk} {k} {k} {:e}", -sg * r.rhs);
                }
                for &(s, v) in &r.terms {
                    let _ = writeln!(out, "{} {blk} {k} {k} {:e}", s + 1, -sg * v);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{ConicProblem, LmiBuilder};
    use super::*;

    #[test]
    fn header_and_entry_counts() {
        let mut p = ConicProblem::new();
        let v = p.add_sym("P", 2, Some(1.0), None);
        let mut b = LmiBuilder::new(2, 0.0);
        b.add(p.sym(v, 0, 1), 0, 1, 1.0);
        p.add_lmi(b).unwrap();
        p.add_eq(vec![(p.sym(v, 0, 0), 1.0)], 2.0).unwrap();
        let s = write_sdpa(&p);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "3");
        assert_eq!(lines[2], "3");
        assert_eq!(lines[3], "2 2 -2");
        assert!(s.contains("0 3 1 1 -2e0"));
        assert!(s.contains("0 3 2 2 2e0"));
    }
}
