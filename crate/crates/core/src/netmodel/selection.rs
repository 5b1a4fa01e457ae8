use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use nalgebra::DMatrix;

use super::DynNetwork;
use crate::error::{Error, Result};

/// Largest node count a [`Selection`] can hold (two bits per node in a `u128`).
pub const MAX_NODES: usize = 64;

/// Activation pattern `S = (S_pi, S_gamma)` over the `N` nodes.
///
/// Bit `k` of the mask is actuator `pi_{k+1}`; bit `N + k` is sensor
/// `gamma_{k+1}`. The tuple order used for printing and lexicographic
/// comparison is `(pi_1, ..., pi_N, gamma_1, ..., gamma_N)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Selection {
    n: usize,
    bits: u128,
}

impl Selection {
    pub fn new(pi: &[bool], gamma: &[bool]) -> Result<Self> {
        if pi.len() != gamma.len() {
            return Err(Error::Dimension(format!(
                "actuator tuple has {} bits, sensor tuple has {}",
                pi.len(),
                gamma.len()
            )));
        }
        let n = pi.len();
        check_n(n)?;
        let mut bits = 0u128;
        for (k, (&p, &g)) in pi.iter().zip(gamma).enumerate() {
            if p {
                bits |= 1 << k;
            }
            if g {
                bits |= 1 << (n + k);
            }
        }
        Ok(Self { n, bits })
    }

    /// Builds a selection from the concatenated tuple `(pi_1..pi_N, gamma_1..gamma_N)`.
    pub fn from_tuple(tuple: &[u8]) -> Result<Self> {
        if tuple.len() % 2 != 0 {
            return Err(Error::Dimension(format!("tuple length {} is odd", tuple.len())));
        }
        let n = tuple.len() / 2;
        check_n(n)?;
        let mut bits = 0u128;
        for (k, &b) in tuple.iter().enumerate() {
            match b {
                0 => {}
                1 => bits |= 1 << k,
                other => return Err(Error::InvalidInput(format!("tuple entry {other} is not a bit"))),
            }
        }
        Ok(Self { n, bits })
    }

    pub fn from_mask(n: usize, mask: u128) -> Result<Self> {
        check_n(n)?;
        if 2 * n < 128 && mask >> (2 * n) != 0 {
            return Err(Error::InvalidInput(format!("mask {mask:#x} has bits beyond 2N = {}", 2 * n)));
        }
        Ok(Self { n, bits: mask })
    }

    pub fn all_active(n: usize) -> Self {
        assert!(n <= MAX_NODES);
        Self { n, bits: full_mask(n) }
    }

    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_NODES);
        Self { n, bits: 0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn mask(&self) -> u128 {
        self.bits
    }
    pub fn actuator(&self, k: usize) -> bool {
        self.bits >> k & 1 == 1
    }
    pub fn sensor(&self, k: usize) -> bool {
        self.bits >> (self.n + k) & 1 == 1
    }
    /// Bit at tuple position `pos` (0-based over the 2N bits).
    pub fn bit(&self, pos: usize) -> bool {
        self.bits >> pos & 1 == 1
    }
    pub fn with_bit(&self, pos: usize, on: bool) -> Self {
        let bits = if on { self.bits | 1 << pos } else { self.bits & !(1 << pos) };
        Self { n: self.n, bits }
    }
    pub fn count_actuators(&self) -> usize {
        (self.bits & low_mask(self.n)).count_ones() as usize
    }
    pub fn count_sensors(&self) -> usize {
        (self.bits >> self.n).count_ones() as usize
    }
    pub fn count_active(&self) -> usize {
        self.bits.count_ones() as usize
    }
    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    /// True iff every active bit of `self` is also active in `sup`
    /// (`sup | self == sup`).
    pub fn is_submask_of(&self, sup: &Selection) -> bool {
        sup.bits | self.bits == sup.bits
    }

    pub fn pi(&self) -> Vec<bool> {
        (0..self.n).map(|k| self.actuator(k)).collect()
    }
    pub fn gamma(&self) -> Vec<bool> {
        (0..self.n).map(|k| self.sensor(k)).collect()
    }
    pub fn tuple(&self) -> Vec<u8> {
        (0..2 * self.n).map(|p| self.bit(p) as u8).collect()
    }

    /// Lexicographic comparison of the `(pi, gamma)` tuples.
    pub fn tuple_cmp(&self, other: &Selection) -> Ordering {
        let diff = self.bits ^ other.bits;
        if diff == 0 {
            return self.n.cmp(&other.n);
        }
        if self.bits >> diff.trailing_zeros() & 1 == 1 {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }

    /// Candidate-set order: activation count ascending, then tuple
    /// lexicographically descending, so `(1,0,0,0)` precedes `(0,1,0,0)`.
    pub fn candidate_cmp(&self, other: &Selection) -> Ordering {
        self.count_active().cmp(&other.count_active()).then_with(|| other.tuple_cmp(self))
    }

    pub fn pi_string(&self) -> String {
        (0..self.n).map(|k| if self.actuator(k) { '1' } else { '0' }).collect()
    }
    pub fn gamma_string(&self) -> String {
        (0..self.n).map(|k| if self.sensor(k) { '1' } else { '0' }).collect()
    }

    /// Parses the `pi`/`gamma` bit strings written by [`Self::pi_string`].
    pub fn from_strings(pi: &str, gamma: &str) -> Result<Self> {
        let parse = |s: &str| -> Result<Vec<bool>> {
            s.chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(Error::InvalidInput(format!("'{other}' is not a bit"))),
                })
                .collect()
        };
        Self::new(&parse(pi)?, &parse(gamma)?)
    }
}

impl fmt::Debug for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for p in 0..2 * self.n {
            if p > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", self.bit(p) as u8)?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n > MAX_NODES {
        return Err(Error::InvalidInput(format!("at most {MAX_NODES} nodes supported, got {n}")));
    }
    Ok(())
}

fn low_mask(n: usize) -> u128 {
    if n >= 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

fn full_mask(n: usize) -> u128 {
    low_mask(2 * n)
}

/// `H(S)`: number of active actuators plus active sensors.
pub fn count_active(s: &Selection) -> usize {
    s.count_active()
}

/// Binary diagonal selection matrices `Pi` (n_u x n_u) and `Gamma` (n_y x n_y).
pub fn build_selection_matrices(s: &Selection, net: &DynNetwork) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if s.n() != net.n_nodes() {
        return Err(Error::Dimension(format!("selection has N = {}, network has {}", s.n(), net.n_nodes())));
    }
    let mut pi = DMatrix::zeros(net.nu(), net.nu());
    let mut gamma = DMatrix::zeros(net.ny(), net.ny());
    for k in 0..s.n() {
        if s.actuator(k) {
            for i in net.input_range(k) {
                pi[(i, i)] = 1.0;
            }
        }
        if s.sensor(k) {
            for j in net.output_range(k) {
                gamma[(j, j)] = 1.0;
            }
        }
    }
    Ok((pi, gamma))
}

/// `(B_q, C_q)`: the columns of `B` and rows of `C` belonging to active
/// actuators and sensors, order preserved. Either may have zero width.
pub fn reduced_matrices(net: &DynNetwork, s: &Selection) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if s.n() != net.n_nodes() {
        return Err(Error::Dimension(format!("selection has N = {}, network has {}", s.n(), net.n_nodes())));
    }
    let cols = net.active_inputs(s);
    let rows = net.active_outputs(s);
    let bq = net.b().select_columns(cols.iter());
    let cq = net.c().select_rows(rows.iter());
    Ok((bq, cq))
}

#[cfg(test)]
mod tests {
    use super::super::NodeDims;
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn net_2nodes() -> DynNetwork {
        // n_u1 = n_u2 = 1, n_y1 = n_y2 = 2, two states per node
        let b = DMatrix::from_row_slice(4, 2, &[1., 0., 0.5, 0., 0., 2., 0., 1.]);
        let mut c = DMatrix::zeros(4, 4);
        for i in 0..4 {
            c[(i, i)] = 1.0 + i as f64;
        }
        DynNetwork::new(vec![NodeDims::new(2, 1, 2); 2], DMatrix::zeros(4, 4), b, c).unwrap()
    }

    #[test]
    fn count_active_examples() {
        assert_eq!(count_active(&Selection::from_tuple(&[1, 0, 0, 1]).unwrap()), 2);
        assert_eq!(count_active(&Selection::all_active(10)), 20);
        assert_eq!(count_active(&Selection::empty(3)), 0);
    }

    #[test]
    fn selection_matrices_all_and_none() {
        let net = net_2nodes();
        let (pi, gamma) = build_selection_matrices(&Selection::all_active(2), &net).unwrap();
        assert_eq!(pi, DMatrix::identity(2, 2));
        assert_eq!(gamma, DMatrix::identity(4, 4));
        let (pi, gamma) = build_selection_matrices(&Selection::empty(2), &net).unwrap();
        assert_eq!(pi, DMatrix::zeros(2, 2));
        assert_eq!(gamma, DMatrix::zeros(4, 4));
    }

    #[test]
    fn selection_matrices_block_structure() {
        let net = net_2nodes();
        let s = Selection::new(&[true, false], &[false, true]).unwrap();
        let (pi, gamma) = build_selection_matrices(&s, &net).unwrap();
        assert_eq!(pi, DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[1., 0.])));
        assert_eq!(gamma, DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[0., 0., 1., 1.])));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = net_2nodes();
        assert!(matches!(build_selection_matrices(&Selection::empty(3), &net), Err(Error::Dimension(_))));
        assert!(matches!(reduced_matrices(&net, &Selection::empty(1)), Err(Error::Dimension(_))));
    }

    #[test]
    fn reduced_keeps_active_blocks() {
        let net = net_2nodes();
        let (bq, cq) = reduced_matrices(&net, &Selection::all_active(2)).unwrap();
        assert_eq!(&bq, net.b());
        assert_eq!(&cq, net.c());
        let s = Selection::new(&[true, false], &[false, false]).unwrap();
        let (bq, cq) = reduced_matrices(&net, &s).unwrap();
        assert_eq!(bq, DMatrix::from_row_slice(4, 1, &[1., 0.5, 0., 0.]));
        assert_eq!(cq.shape(), (0, 4));
    }

    #[test]
    fn submask_examples() {
        let sq = Selection::from_tuple(&[1, 0, 0, 1]).unwrap();
        assert!(sq.is_submask_of(&sq));
        assert!(Selection::empty(2).is_submask_of(&sq));
        assert!(!Selection::from_tuple(&[0, 1, 0, 0]).unwrap().is_submask_of(&sq));
    }

    #[test]
    fn candidate_order_matches_listing() {
        let a = Selection::from_tuple(&[1, 0, 0, 0]).unwrap();
        let b = Selection::from_tuple(&[0, 1, 0, 0]).unwrap();
        let c = Selection::from_tuple(&[1, 1, 0, 0]).unwrap();
        assert_eq!(a.candidate_cmp(&b), Ordering::Less);
        assert_eq!(b.candidate_cmp(&c), Ordering::Less);
    }

    #[test]
    fn string_round_trip() {
        let s = Selection::from_tuple(&[0, 1, 1, 1, 0, 0]).unwrap();
        assert_eq!(s.pi_string(), "011");
        assert_eq!(s.gamma_string(), "100");
        assert_eq!(Selection::from_strings(&s.pi_string(), &s.gamma_string()).unwrap(), s);
        assert!(Selection::from_strings("01", "0x").is_err());
        assert!(Selection::from_strings("01", "0").is_err());
    }

    fn mask_compress(net: &DynNetwork, s: &Selection) -> (DMatrix<f64>, DMatrix<f64>) {
        // oracle: zero the inactive columns/rows, then drop every all-inactive index
        let (pi, gamma) = build_selection_matrices(s, net).unwrap();
        let bp = net.b() * &pi;
        let gc = &gamma * net.c();
        let keep_cols: Vec<usize> = (0..net.nu()).filter(|&i| pi[(i, i)] == 1.0).collect();
        let keep_rows: Vec<usize> = (0..net.ny()).filter(|&j| gamma[(j, j)] == 1.0).collect();
        (bp.select_columns(keep_cols.iter()), gc.select_rows(keep_rows.iter()))
    }

    proptest! {
        #[test]
        fn reduced_matches_mask_and_compress(seed in 0u64..200, mask in 0u128..(1 << 8)) {
            let net = crate::netmodel::gen_random_network(&crate::netmodel::RandomNetworkParams {
                nodes: 4, states_per_node: 2, seed, ..Default::default()
            }).unwrap();
            let s = Selection::from_mask(4, mask).unwrap();
            let (bq, cq) = reduced_matrices(&net, &s).unwrap();
            let (ob, oc) = mask_compress(&net, &s);
            prop_assert_eq!(&bq, &ob);
            prop_assert_eq!(&cq, &oc);
            let m: usize = (0..4).filter(|&k| s.actuator(k)).map(|k| net.node_dims()[k].nu).sum();
            let r: usize = (0..4).filter(|&k| s.sensor(k)).map(|k| net.node_dims()[k].ny).sum();
            prop_assert_eq!(bq.ncols(), m);
            prop_assert_eq!(cq.nrows(), r);
        }

        #[test]
        fn selection_matrices_are_binary_idempotent(mask in 0u128..(1 << 8)) {
            let net = crate::netmodel::gen_random_network(&crate::netmodel::RandomNetworkParams {
                nodes: 4, states_per_node: 2, seed: 3, ..Default::default()
            }).unwrap();
            let s = Selection::from_mask(4, mask).unwrap();
            let (pi, gamma) = build_selection_matrices(&s, &net).unwrap();
            prop_assert_eq!(&(&pi * &pi), &pi);
            prop_assert_eq!(&(&gamma * &gamma), &gamma);
            let trace_count = pi.trace() as usize / 1 + gamma.trace() as usize / 2;
            prop_assert_eq!(trace_count, s.count_active());
            // B Pi keeps exactly the columns of B_q (zeros elsewhere); Gamma C likewise for rows
            let (bq, cq) = reduced_matrices(&net, &s).unwrap();
            let bp = net.b() * &pi;
            let cols = net.active_inputs(&s);
            prop_assert_eq!(bp.select_columns(cols.iter()), bq);
            let gc = &gamma * net.c();
            let rows = net.active_outputs(&s);
            prop_assert_eq!(gc.select_rows(rows.iter()), cq);
            let nz_cols = (0..net.nu()).filter(|&i| bp.column(i).iter().any(|v| *v != 0.0)).count();
            prop_assert_eq!(nz_cols, cols.len());
        }

        #[test]
        fn submask_is_bitwise_or_identity(a in 0u128..256, b in 0u128..256) {
            let sa = Selection::from_mask(4, a).unwrap();
            let sb = Selection::from_mask(4, b).unwrap();
            prop_assert_eq!(sb.is_submask_of(&sa), a | b == a);
        }
    }
}
