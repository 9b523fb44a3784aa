use deceptive_nes_core::deception::{deceptive_equilibrium, perturbed_pseudogradient};
use deceptive_nes_core::dynamics::{simulate, SimConfig, SimState};
use deceptive_nes_core::{
    Deceiver, DeceptionTopology, ModelKind, NesTuning, OligopolyParams, QuadraticGame, Ratio,
};

fn market() -> QuadraticGame {
    let params = OligopolyParams::new(vec![0.67, 0.36, 0.8], vec![20.0, 29.0, 30.0], 100.0).unwrap();
    QuadraticGame::new(&params)
}

fn tuning(scale: f64) -> NesTuning {
    let ratios = [6346, 4089, 6115].map(|n| Ratio::integer(n).unwrap()).to_vec();
    NesTuning::new(vec![0.04, 0.03, 0.05], vec![0.02, 0.019, 0.22], 1.0, ratios)
        .unwrap()
        .with_frequency_scale(scale)
        .unwrap()
}

fn deception(j_ref: f64) -> DeceptionTopology {
    let d = Deceiver { player: 0, victims: vec![2], gain: 1.0, j_ref };
    DeceptionTopology::new(3, 1e-4, vec![d]).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[test]
fn boundary_layer_contracts_at_the_spectral_rate() {
    let game = market();
    let topo = deception(-1200.0);
    let tuning = tuning(1.0);
    for d in [0.0, 0.5, 1.5] {
        let alpha = perturbed_pseudogradient(&game, &topo, &[d])
            .unwrap()
            .stability_abscissa(tuning.gains())
            .unwrap();
        assert!(alpha < 0.0);
        let h = deceptive_equilibrium(&game, &topo, &[d]).unwrap();
        let u0: Vec<f64> = h.iter().zip([5.0, -5.0, 2.0]).map(|(h, y)| h + y).collect();
        let cfg = SimConfig { horizon: 400.0, stride: 1.0, ..SimConfig::default() };
        let traj = simulate(
            ModelKind::Boundary,
            &game,
            &topo,
            &tuning,
            &SimState { t: 0.0, u: u0, delta: vec![d] },
            &cfg,
        )
        .unwrap();
        let a = &traj.samples[200];
        let b = traj.last();
        let rate = (dist(&a.u, &h) / dist(&b.u, &h)).ln() / (b.t - a.t);
        assert!(rate >= 0.9 * alpha.abs(), "delta {d}: rate {rate} vs {alpha}");
        assert!(b.delta == vec![d]);
    }
}

#[test]
fn full_model_is_converged_in_step_size() {
    let game = market();
    let topo = deception(-1200.0);
    let tuning = tuning(0.1);
    let init = SimState { t: 0.0, u: game.nash_equilibrium().unwrap(), delta: vec![0.0] };
    let run = |s: usize| {
        let cfg = SimConfig { horizon: 20.0, stride: 1.0, oversampling: s, ..SimConfig::default() };
        simulate(ModelKind::Full, &game, &topo, &tuning, &init, &cfg).unwrap()
    };
    let (a, b, c) = (run(32), run(64), run(128));
    let mut gap_ab: f64 = 0.0;
    let mut gap_bc: f64 = 0.0;
    for ((a, b), c) in a.samples.iter().zip(&b.samples).zip(&c.samples) {
        let flat = |s: &deceptive_nes_core::Sample| [s.u.clone(), s.delta.clone()].concat();
        let (a, b, c) = (flat(a), flat(b), flat(c));
        for k in 0..a.len() {
            let scale = c[k].abs().max(1.0);
            gap_ab = gap_ab.max((a[k] - b[k]).abs() / scale);
            gap_bc = gap_bc.max((b[k] - c[k]).abs() / scale);
        }
    }
    assert!(gap_bc <= 1e-6, "{gap_bc}");
    // fourth order: halving the step cuts the gap about sixteenfold
    assert!(gap_ab / gap_bc > 10.0, "{gap_ab} / {gap_bc}");
}

#[test]
fn averaged_and_reduced_models_settle_on_the_attainable_gain() {
    let game = market();
    let topo = deception(-1200.0);
    let tuning = tuning(1.0);
    let init = SimState { t: 0.0, u: game.nash_equilibrium().unwrap(), delta: vec![0.0] };
    let cfg = SimConfig { horizon: 1500.0, stride: 1.0, ..SimConfig::default() };
    let reduced = simulate(ModelKind::Reduced, &game, &topo, &tuning, &init, &cfg).unwrap();
    let averaged = simulate(ModelKind::Averaged, &game, &topo, &tuning, &init, &cfg).unwrap();
    let d_red = reduced.steady_state.delta[0];
    let d_avg = averaged.steady_state.delta[0];
    assert!((d_red - 1.0871802719).abs() < 1e-4, "{d_red}");
    assert!((d_avg - d_red).abs() < 0.05, "{d_avg} vs {d_red}");
    assert!((reduced.steady_state.costs[0] + 1200.0).abs() < 0.5);
}

/// Full-frequency deceptive run over the whole horizon; several seconds in
/// release mode.
#[test]
#[ignore]
fn full_frequency_deception_run() {
    let game = market();
    let topo = deception(-1200.0);
    let tuning = tuning(1.0);
    let init = SimState { t: 0.0, u: game.nash_equilibrium().unwrap(), delta: vec![0.0] };
    let cfg = SimConfig { horizon: 1500.0, stride: 0.5, ..SimConfig::default() };
    let traj = simulate(ModelKind::Full, &game, &topo, &tuning, &init, &cfg).unwrap();
    let ss = &traj.steady_state;
    assert!((ss.delta[0] - 1.0871802719).abs() < 0.01, "{}", ss.delta[0]);
    assert!((ss.profits[0] - 1200.0).abs() < 12.0, "{}", ss.profits[0]);
}
