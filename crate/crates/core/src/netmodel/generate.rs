use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DynNetwork, NodeDims};
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_COUPLING_DECAY: f64 = 2.0;
pub const DEFAULT_INSTABILITY_SHIFT: f64 = 0.5;
pub const DEFAULT_PASSIVE_MARGIN: f64 = 0.5;

/// Parameters of the seeded random-network generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetworkParams {
    pub nodes: usize,
    pub states_per_node: usize,
    pub coupling_decay: f64,
    pub instability_shift: f64,
    /// Decay rate of the dynamics restricted to the unactuated states.
    pub passive_margin: f64,
    pub seed: u64,
}

impl Default for RandomNetworkParams {
    fn default() -> Self {
        Self {
            nodes: 10,
            states_per_node: 2,
            coupling_decay: DEFAULT_COUPLING_DECAY,
            instability_shift: DEFAULT_INSTABILITY_SHIFT,
            passive_margin: DEFAULT_PASSIVE_MARGIN,
            seed: 0,
        }
    }
}

/// Random spatially decaying network.
///
/// Nodes sit uniformly in the unit square. Diagonal blocks have entries
/// uniform in `[-1, 1]`; the block `A_ij` has entries uniform in `[-1, 1]`
/// scaled by `exp(-coupling_decay * dist(i, j))`. Each node has one actuator
/// driving its first state and measures all of its states (`B_i = e_1`,
/// `C_i = I`).
///
/// The diagonal is then shifted in two steps. The unactuated states get a
/// common shift so that `A` restricted to them has spectral abscissa
/// `-passive_margin`; the actuated states get a common shift, found by
/// bisection, so that the spectral abscissa of `A` equals `instability_shift`.
/// The first step matters for the LMI test: `BM = PB` makes the complement of
/// `range(B)` invariant under `P`, so the test can only succeed when `A`
/// compressed to that complement is Hurwitz.
///
/// Draw order (ChaCha8 seeded with `seed`): node coordinates, then the blocks
/// of `A` in row-major block order.
pub fn gen_random_network(p: &RandomNetworkParams) -> Result<DynNetwork> {
    if p.nodes == 0 || p.states_per_node == 0 {
        return Err(Error::InvalidInput("nodes and states_per_node must be positive".into()));
    }
    if p.nodes > super::MAX_NODES {
        return Err(Error::InvalidInput(alloc::format!("at most {} nodes supported", super::MAX_NODES)));
    }
    if p.coupling_decay.is_nan() || p.coupling_decay < 0.0 || !p.instability_shift.is_finite() {
        return Err(Error::InvalidInput("coupling_decay must be >= 0 and instability_shift finite".into()));
    }
    if !p.passive_margin.is_finite() || (p.states_per_node > 1 && p.instability_shift <= -p.passive_margin) {
        return Err(Error::InvalidInput("passive_margin must be finite and above -instability_shift".into()));
    }
    let (n, k) = (p.nodes, p.states_per_node);
    let nx = n * k;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let mut a = DMatrix::zeros(nx, nx);
    for i in 0..n {
        for j in 0..n {
            let scale = if i == j {
                1.0
            } else if p.coupling_decay == f64::INFINITY {
                0.0
            } else {
                let d = libm::hypot(pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                libm::exp(-p.coupling_decay * d)
            };
            for r in 0..k {
                for c in 0..k {
                    let v: f64 = rng.random_range(-1.0..=1.0);
                    a[(i * k + r, j * k + c)] = scale * v;
                }
            }
        }
    }
    let passive: Vec<usize> = (0..nx).filter(|d| d % k != 0).collect();
    if !passive.is_empty() {
        let sub = DMatrix::from_fn(passive.len(), passive.len(), |i, j| a[(passive[i], passive[j])]);
        let s2 = -p.passive_margin - linalg::spectral_abscissa(&sub)?;
        for &d in &passive {
            a[(d, d)] += s2;
        }
    }
    let active_shift = |a: &DMatrix<f64>, s: f64| -> Result<f64> {
        let mut b = a.clone();
        for i in 0..n {
            b[(i * k, i * k)] += s;
        }
        linalg::spectral_abscissa(&b)
    };
    // the abscissa tends to -passive_margin as s -> -inf and grows without
    // bound as s -> inf, so a sign change is bracketed
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut guard = 0;
    while active_shift(&a, lo)? > p.instability_shift || active_shift(&a, hi)? < p.instability_shift {
        lo *= 2.0;
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::InvalidInput("could not place the spectral abscissa".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if active_shift(&a, mid)? > p.instability_shift {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    for i in 0..n {
        a[(i * k, i * k)] += hi;
    }
    let mut b = DMatrix::zeros(nx, n);
    for i in 0..n {
        b[(i * k, i)] = 1.0;
    }
    let c = DMatrix::identity(nx, nx);
    DynNetwork::new(vec![NodeDims::new(k, 1, k); n], a, b, c)
}

/// `lambda_min(T) + 0.01` for the `N`-mass chain, which puts the largest
/// real eigenvalue of the generated `A` at about `0.1`.
pub fn mass_spring_default_perturbation(n: usize) -> f64 {
    let lam_min = 2.0 - 2.0 * libm::cos(core::f64::consts::PI / (n as f64 + 1.0));
    lam_min + 0.01
}

/// Chain of `N` unit masses joined by unit springs, with fixed ends.
///
/// The physical dynamics are `p' = v`, `v' = (-T + delta I) p + u` with
/// `T = tridiag(-1, 2, -1)`. Node `i` carries the state `z_i = [p_i, p_i + v_i]`,
/// interleaved per node so that `B` and `C` stay block diagonal. Each mass has
/// one force actuator (`B_i = [0; 1]`) and measures both of its states
/// (`C_i = I_2`).
///
/// The change of coordinates matters for the LMI test, which depends on the
/// state basis: with plain `[p_i, v_i]` the position block of `A'P + PA` is
/// forced to zero by `BM = PB` and no selection is ever feasible.
pub fn gen_mass_spring(n: usize, stiffness_perturbation: f64) -> Result<DynNetwork> {
    if n < 2 {
        return Err(Error::InvalidInput("mass-spring chain needs at least 2 masses".into()));
    }
    if n > super::MAX_NODES {
        return Err(Error::InvalidInput(alloc::format!("at most {} nodes supported", super::MAX_NODES)));
    }
    if !stiffness_perturbation.is_finite() {
        return Err(Error::NonFinite("stiffness perturbation"));
    }
    let nx = 2 * n;
    let mut phys = DMatrix::zeros(nx, nx);
    for i in 0..n {
        phys[(2 * i, 2 * i + 1)] = 1.0;
        phys[(2 * i + 1, 2 * i)] = -2.0 + stiffness_perturbation;
        if i > 0 {
            phys[(2 * i + 1, 2 * (i - 1))] = 1.0;
        }
        if i + 1 < n {
            phys[(2 * i + 1, 2 * (i + 1))] = 1.0;
        }
    }
    let a = mass_spring_transform(n) * phys * mass_spring_transform_inv(n);
    let mut b = DMatrix::zeros(nx, n);
    for i in 0..n {
        b[(2 * i + 1, i)] = 1.0;
    }
    DynNetwork::new(vec![NodeDims::new(2, 1, 2); n], a, b, DMatrix::identity(nx, nx))
}

/// Block-diagonal map from `[p_i, v_i]` to the generator's node coordinates.
pub fn mass_spring_transform(n: usize) -> DMatrix<f64> {
    let mut t = DMatrix::identity(2 * n, 2 * n);
    for i in 0..n {
        t[(2 * i + 1, 2 * i)] = 1.0;
    }
    t
}

fn mass_spring_transform_inv(n: usize) -> DMatrix<f64> {
    let mut t = DMatrix::identity(2 * n, 2 * n);
    for i in 0..n {
        t[(2 * i + 1, 2 * i)] = -1.0;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_network_is_deterministic() {
        let p = RandomNetworkParams { seed: 42, ..Default::default() };
        assert_eq!(gen_random_network(&p).unwrap(), gen_random_network(&p).unwrap());
        let q = RandomNetworkParams { seed: 43, ..Default::default() };
        assert_ne!(gen_random_network(&p).unwrap().a(), gen_random_network(&q).unwrap().a());
    }

    #[test]
    fn random_network_dims_and_instability() {
        let net = gen_random_network(&RandomNetworkParams { seed: 7, ..Default::default() }).unwrap();
        assert_eq!((net.nx(), net.nu(), net.ny()), (20, 10, 20));
        let abscissa = linalg::spectral_abscissa(net.a()).unwrap();
        assert!(abscissa > 0.0);
        assert!((abscissa - 0.5).abs() < 1e-9);
        let passive: Vec<usize> = (0..20).filter(|d| d % 2 == 1).collect();
        let sub = DMatrix::from_fn(10, 10, |i, j| net.a()[(passive[i], passive[j])]);
        assert!((linalg::spectral_abscissa(&sub).unwrap() + 0.5).abs() < 1e-9);
    }

    #[test]
    fn single_state_nodes_have_no_passive_part() {
        let net = gen_random_network(&RandomNetworkParams { nodes: 3, states_per_node: 1, seed: 2, ..Default::default() })
            .unwrap();
        assert!((linalg::spectral_abscissa(net.a()).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn infinite_decay_decouples_nodes() {
        let net = gen_random_network(&RandomNetworkParams {
            nodes: 4,
            coupling_decay: f64::INFINITY,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let blk = net.a().view((2 * i, 2 * j), (2, 2));
                assert!(blk.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn coupling_shrinks_with_decay() {
        let mk = |decay| {
            gen_random_network(&RandomNetworkParams { nodes: 5, coupling_decay: decay, seed: 9, ..Default::default() })
                .unwrap()
        };
        let off = |net: &DynNetwork| {
            let mut s = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    if i != j {
                        s += net.a().view((2 * i, 2 * j), (2, 2)).abs().sum();
                    }
                }
            }
            s
        };
        assert!(off(&mk(50.0)) < off(&mk(1.0)));
    }

    #[test]
    fn invalid_random_params() {
        assert!(gen_random_network(&RandomNetworkParams { nodes: 0, ..Default::default() }).is_err());
        assert!(gen_random_network(&RandomNetworkParams { coupling_decay: f64::NAN, ..Default::default() }).is_err());
    }

    #[test]
    fn mass_spring_undamped_is_marginal() {
        let net = gen_mass_spring(4, 0.0).unwrap();
        for z in linalg::eigenvalues(net.a()).unwrap() {
            assert!(z.re.abs() < 1e-9, "{z}");
        }
    }

    #[test]
    fn mass_spring_two_masses_stiffness() {
        let net = gen_mass_spring(2, 0.0).unwrap();
        let n = 2;
        let phys = mass_spring_transform_inv(n) * net.a() * mass_spring_transform(n);
        let net = DynNetwork::new(alloc::vec![NodeDims::new(2, 1, 2); n], phys, net.b().clone(), net.c().clone()).unwrap();
        // velocity rows read back -T
        let t = DMatrix::from_row_slice(2, 2, &[net.a()[(1, 0)], net.a()[(1, 2)], net.a()[(3, 0)], net.a()[(3, 2)]]);
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]));
        assert!(gen_mass_spring(1, 0.0).is_err());
    }

    #[test]
    fn mass_spring_perturbation_destabilizes() {
        let n = 6;
        let lam_min = mass_spring_default_perturbation(n) - 0.01;
        let net = gen_mass_spring(n, lam_min + 0.04).unwrap();
        let eigs = linalg::eigenvalues(net.a()).unwrap();
        let pos_real = eigs.iter().filter(|z| z.re > 1e-9 && z.im.abs() < 1e-9).count();
        assert!(pos_real >= 1);
        let net = gen_mass_spring(10, mass_spring_default_perturbation(10)).unwrap();
        let ab = linalg::spectral_abscissa(net.a()).unwrap();
        assert!((ab - 0.1).abs() < 1e-6);
    }
}
