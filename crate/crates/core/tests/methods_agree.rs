use approx::assert_relative_eq;
use nalgebra::DMatrix;

use sensact_core::combsearch::{bsa, build_candidate_set, exhaustive_oracle};
use sensact_core::heuristic::{heu, HeuristicOptions};
use sensact_core::linalg::spectral_abscissa;
use sensact_core::misdp::{assemble_bigm, solve_bnb, BigMParams, BnbOptions};
use sensact_core::netmodel::{
    build_selection_matrices, closed_loop_abscissa, gen_mass_spring, gen_random_network, mass_spring_default_perturbation,
    reduced_matrices, LogisticConstraint, RandomNetworkParams, Selection,
};
use sensact_core::sof::{check_certificate, LmiOracle, SofOptions, DEFAULT_DELTA};

#[test]
fn three_methods_agree_on_small_networks() {
    for seed in 0..3 {
        let net = gen_random_network(&RandomNetworkParams { nodes: 3, seed, ..Default::default() }).unwrap();
        let c = LogisticConstraint::at_least_one_each(3);
        let set = build_candidate_set(&c).unwrap();
        let mut o = LmiOracle::new(&net, SofOptions::default());

        let oracle = exhaustive_oracle(&mut o, &set).unwrap();
        let h_opt = oracle.h_opt().expect("seeded nets are stabilizable with everything on");
        let b = bsa(&mut o, &set, false).unwrap();
        assert_eq!(b.best.count_active(), h_opt, "seed {seed}");

        let model = assemble_bigm(&net, &c, &BigMParams::default()).unwrap();
        let r = solve_bnb(&model, &mut o, &BnbOptions::default()).unwrap();
        assert!(r.optimal);
        assert_eq!(r.h(), Some(h_opt), "seed {seed}");

        let h = heu(&mut o, &c, &HeuristicOptions { seed, ..Default::default() }).unwrap();
        assert!(h.best.count_active() >= h_opt);

        for (s, cert) in [(b.best, b.certificate.unwrap()), (r.best.unwrap(), r.certificate.unwrap())] {
            let (bq, cq) = reduced_matrices(&net, &s).unwrap();
            let chk = check_certificate(net.a(), &bq, &cq, &cert).unwrap();
            assert!(chk.passes(DEFAULT_DELTA), "{chk:?}");
            // the reduced and the embedded closed loops are the same matrix
            let (pi, gamma) = build_selection_matrices(&s, &net).unwrap();
            let f = net.embed_gain(&s, &cert.f).unwrap();
            let full = closed_loop_abscissa(&net, &pi, &gamma, &f).unwrap();
            assert_relative_eq!(full, chk.max_re_closed_loop, epsilon = 1e-9);
            // F solves M F = N
            assert!((&cert.m * &cert.f - &cert.nvar).abs().max() <= 1e-8 * cert.nvar.abs().max().max(1.0));
        }
    }
}

#[test]
fn mass_spring_chain_has_the_requested_instability() {
    for n in [2, 3, 5] {
        let net = gen_mass_spring(n, mass_spring_default_perturbation(n)).unwrap();
        assert_eq!(net.nx(), 2 * n);
        let re = spectral_abscissa(net.a()).unwrap();
        assert_relative_eq!(re, 0.1, epsilon = 1e-6);
    }
}

#[test]
fn empty_selection_is_never_chosen() {
    let net = gen_random_network(&RandomNetworkParams { nodes: 2, seed: 0, ..Default::default() }).unwrap();
    let c = LogisticConstraint::at_least_one_each(2);
    let set = build_candidate_set(&c).unwrap();
    assert!(set.iter().all(|s| s.count_actuators() >= 1 && s.count_sensors() >= 1));
    let mut o = LmiOracle::new(&net, SofOptions::default());
    let b = bsa(&mut o, &set, false).unwrap();
    assert_ne!(b.best, Selection::empty(2));
    let (pi, gamma) = build_selection_matrices(&b.best, &net).unwrap();
    assert_eq!(pi.shape(), (net.nu(), net.nu()));
    assert_eq!(gamma.shape(), (net.ny(), net.ny()));
    let zero = DMatrix::zeros(net.nu(), net.ny());
    assert!(closed_loop_abscissa(&net, &pi, &gamma, &zero).unwrap() > 0.0);
}
