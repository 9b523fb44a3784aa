//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so every line is shown.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use deceptive_nes::{dispatch, load_scenario, CommandKind, Options, Scenario};
use deceptive_nes_core::deception::{self, SearchConfig};
use deceptive_nes_core::deceptive_game::{build_deceptive_game, verify_deceptive_nash};
use deceptive_nes_core::dynamics::{simulate, simulate_with_costs, SimConfig, SimState};
use deceptive_nes_core::numerics::{self, DenseMatrix, Rk4};
use deceptive_nes_core::{
    Deceiver, DeceptionTopology, ModelKind, NesTuning, OligopolyParams, QuadraticGame,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

const EXPECTED_X0: [f64; 3] = [49.55, 57.13, 47.9];
const EXPECTED_PROFITS: [f64; 3] = [950.7, 1092.0, 239.2];
const EXPECTED_DELTA_STAR: f64 = 2.486;
const EXPECTED_LAMBDA: f64 = -190.0;
const P1_REF: f64 = 1200.0;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            notes: Vec::new(),
        }
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/examples/three_firm.json")
}

fn example() -> Scenario {
    load_scenario(&scenario_path()).expect("bundled scenario loads")
}

fn run_cli(cmd: CommandKind, s: &Scenario, opts: &Options) -> Value {
    let dir = tempfile::tempdir().unwrap();
    dispatch(cmd, s, opts, dir.path()).expect("command succeeds");
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Best of `reps` timings, to keep scheduler noise out of sub-millisecond
/// budgets.
fn best_time<T>(reps: usize, mut f: impl FnMut() -> T) -> Duration {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed()
        })
        .min()
        .unwrap()
}

/// Variant of the market's pseudogradient whose (3,3) entry equals the
/// (1,1) entry. Reproduces the published example numbers; used only to
/// explain discrepancies.
fn q33_variant(s: &Scenario) -> (DenseMatrix, Vec<f64>, DenseMatrix, Vec<f64>) {
    let g = &s.game;
    let mut q = g.pseudogradient_matrix().clone();
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| if (i, j) == (2, 2) { q[(0, 0)] } else { q[(i, j)] })
                .collect()
        })
        .collect();
    q = DenseMatrix::from_rows(&rows);
    let p0 = deception::perturbed_pseudogradient(g, &s.topology, &[0.0]).unwrap();
    let p1 = deception::perturbed_pseudogradient(g, &s.topology, &[1.0]).unwrap();
    let dq_rows: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| p1.qbar[(i, j)] - p0.qbar[(i, j)]).collect())
        .collect();
    let dq = DenseMatrix::from_rows(&dq_rows);
    let db: Vec<f64> = p1.bbar.iter().zip(&p0.bbar).map(|(a, b)| a - b).collect();
    (q, g.pseudogradient_offset().to_vec(), dq, db)
}

fn variant_h(q: &DenseMatrix, b: &[f64], dq: &DenseMatrix, db: &[f64], d: f64) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| q[(i, j)] + d * dq[(i, j)]).collect())
        .collect();
    let m = DenseMatrix::from_rows(&rows);
    let rhs: Vec<f64> = b.iter().zip(db).map(|(b, db)| -(b + d * db)).collect();
    numerics::solve_linear(&m, &rhs).unwrap()
}

fn criterion_1() -> Outcome {
    let s = example();
    let v = run_cli(CommandKind::Nash, &s, &Options::default());
    let x = floats(&v["x_star"]);
    let p = floats(&v["profits"]);
    let dx = max_abs_diff(&x, &EXPECTED_X0);
    let dp = max_abs_diff(&p, &EXPECTED_PROFITS);
    let time = best_time(20, || {
        let x = s.game.nash_equilibrium().unwrap();
        s.market.profits(&x).unwrap()
    });
    let pass = dx <= 0.01 && dp <= 0.5 && time < Duration::from_millis(1);
    let (q, b, _, _) = q33_variant(&s);
    let xv = numerics::solve_linear(&q, &b.iter().map(|v| -v).collect::<Vec<_>>()).unwrap();
    let pv = s.market.profits(&xv).unwrap();
    Outcome::new(
        pass,
        format!(
            "x0 = {} (|dx| = {dx:.3}, tol 0.01), P = {} (|dP| = {dp:.2}, tol 0.5), {time:?}",
            fmt_vec(&x),
            fmt_vec(&p)
        ),
    )
    .note(format!(
        "with the (3,3) pseudogradient entry replaced by the (1,1) entry: x0 = {}, P = {}",
        fmt_vec(&xv),
        fmt_vec(&pv)
    ))
}

fn criterion_2() -> Outcome {
    let s = example();
    let want_q = [[2.18, -0.75, -0.34], [-0.75, 2.76, -0.63], [-0.34, -0.63, 2.18]];
    let want_b = [-48.82, -90.34, -51.65];
    let p0 = deception::perturbed_pseudogradient(&s.game, &s.topology, &[0.0]).unwrap();
    let p1 = deception::perturbed_pseudogradient(&s.game, &s.topology, &[1.0]).unwrap();
    let mut bad = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            let got = p0.qbar[(i, j)];
            if (got - want_q[i][j]).abs() > 0.01 {
                bad.push(format!("Q[{}][{}] = {got:.4} vs {}", i + 1, j + 1, want_q[i][j]));
            }
            let coeff = p1.qbar[(i, j)] - p0.qbar[(i, j)];
            let want = if (i, j) == (2, 2) { -0.34 } else { 0.0 };
            if (coeff - want).abs() > 0.01 {
                bad.push(format!("dQ[{}][{}] = {coeff:.4} vs {want}", i + 1, j + 1));
            }
        }
        if (p0.bbar[i] - want_b[i]).abs() > 0.01 {
            bad.push(format!("B[{}] = {:.4} vs {}", i + 1, p0.bbar[i], want_b[i]));
        }
        let coeff = p1.bbar[i] - p0.bbar[i];
        let want = if i == 2 { 10.14 } else { 0.0 };
        if (coeff - want).abs() > 0.01 {
            bad.push(format!("dB[{}] = {coeff:.4} vs {want}", i + 1));
        }
    }
    let coeffs = format!(
        "delta coefficients {:.4} and {:.4}",
        p1.qbar[(2, 2)] - p0.qbar[(2, 2)],
        p1.bbar[2] - p0.bbar[2]
    );
    if bad.is_empty() {
        Outcome::new(true, format!("all 24 entries within 0.01; {coeffs}"))
    } else {
        Outcome::new(false, format!("{} of 24 entries off: {}; {coeffs}", bad.len(), bad.join(", ")))
    }
}

fn criterion_3() -> Outcome {
    let s = example();
    let v = run_cli(CommandKind::Attain, &s, &Options::default());
    let d = floats(&v["delta_star"])[0];
    let lambda = v["lambda"][0][0].as_f64().unwrap();
    let attainable = v["attainable"].as_bool().unwrap();
    let in_delta = v["in_delta"].as_bool().unwrap();
    let time = best_time(5, || {
        deception::solve_attainability(
            &s.game,
            &s.topology,
            &s.topology.references(),
            s.tuning.gains(),
            &SearchConfig::default(),
        )
        .unwrap()
    });
    let pass = (d - EXPECTED_DELTA_STAR).abs() <= 0.005
        && (lambda - EXPECTED_LAMBDA).abs() <= 2.0
        && attainable
        && in_delta
        && time < Duration::from_millis(10);

    let (q, b, dq, db) = q33_variant(&s);
    let j1 = |d: f64| s.market.cost_of(0, &variant_h(&q, &b, &dq, &db, d)) + P1_REF;
    let dv = numerics::find_root_scalar(j1, 0.0, 4.0, 1e-6).unwrap();
    let h = 1e-5;
    let lv = (j1(dv + h) - j1(dv - h)) / (2.0 * h);
    Outcome::new(
        pass,
        format!(
            "delta* = {d:.4} (tol 0.005), Lambda = {lambda:.2} (tol 2), attainable = {attainable}, in_delta = {in_delta}, {time:?}"
        ),
    )
    .note(format!(
        "with the (3,3) entries of the pseudogradient and Q_3 replaced by the (1,1) entry: delta* = {dv:.4}, Lambda = {lv:.2}"
    ))
}

fn random_market(rng: &mut StdRng) -> OligopolyParams {
    let n = rng.gen_range(2..=6);
    let r: Vec<f64> = (0..n).map(|_| 5.0 - rng.gen_range(0.0..4.9)).collect();
    let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=50.0)).collect();
    let sd = 200.0 - rng.gen_range(0.0..199.0);
    OligopolyParams::new(r, m, sd).unwrap()
}

fn random_topology(rng: &mut StdRng, n: usize) -> DeceptionTopology {
    let mut deceivers = Vec::new();
    for i in 0..n {
        if !rng.gen_bool(0.5) {
            continue;
        }
        let victims: Vec<usize> = (0..n).filter(|&j| j != i && rng.gen_bool(0.5)).collect();
        if !victims.is_empty() {
            deceivers.push(Deceiver { player: i, victims, gain: 1.0, j_ref: 0.0 });
        }
    }
    if deceivers.is_empty() {
        let i = rng.gen_range(0..n);
        deceivers.push(Deceiver { player: i, victims: vec![(i + 1) % n], gain: 1.0, j_ref: 0.0 });
    }
    DeceptionTopology::new(n, 1.0, deceivers).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x4c31);
    let start = Instant::now();
    let mut failures = 0;
    for _ in 0..500 {
        let params = random_market(&mut rng);
        let n = params.players();
        let game = QuadraticGame::new(&params);
        let topo = random_topology(&mut rng, n);
        let gains: Vec<f64> = (0..n).map(|_| 10.0 - rng.gen_range(0.0..10.0)).collect();
        let delta: Vec<f64> = (0..topo.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pert = deception::perturbed_pseudogradient(&game, &topo, &delta).unwrap();
        if !deception::in_stability_set(&pert, &gains).unwrap() {
            failures += 1;
        }
    }
    let time = start.elapsed();
    Outcome::new(
        failures == 0 && time < Duration::from_secs(5),
        format!("500 instances, {failures} outside the stability set, {time:?}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x7432);
    let start = Instant::now();
    let (mut checked, mut failures, mut skipped) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    while checked < 200 {
        let params = random_market(&mut rng);
        let game = QuadraticGame::new(&params);
        let topo = random_topology(&mut rng, params.players());
        let delta: Vec<f64> = (0..topo.len())
            .map(|_| {
                let mag = rng.gen_range(1e-6..2.0);
                if rng.gen_bool(0.5) { mag } else { -mag }
            })
            .collect();
        let dg = build_deceptive_game(&game, &topo, &delta).unwrap();
        let Ok(u) = deception::deceptive_equilibrium(&game, &topo, &delta) else {
            skipped += 1;
            continue;
        };
        let v = verify_deceptive_nash(&dg, &u);
        worst = worst.max(v.first_order_residual);
        if !v.is_ne || v.first_order_residual > 1e-8 {
            failures += 1;
        }
        checked += 1;
    }
    let time = start.elapsed();
    Outcome::new(
        failures == 0 && time < Duration::from_secs(5),
        format!(
            "200 instances ({skipped} singular draws skipped), {failures} failures, worst residual {worst:.1e}, {time:?}"
        ),
    )
}

fn neighborhood_tolerance(tuning: &NesTuning) -> f64 {
    2.0 * (1.0 / tuning.min_frequency() + tuning.max_amplitude())
}

fn criterion_6() -> Outcome {
    let s = example();
    let tuning = s.tuning.with_frequency_scale(0.1).unwrap();
    let tol = neighborhood_tolerance(&tuning);
    let x0 = s.game.nash_equilibrium().unwrap();
    let empty = DeceptionTopology::empty(3);
    let cfg = SimConfig {
        horizon: 600.0,
        stride: 1.0,
        freeze_delta: true,
        ..SimConfig::default()
    };
    let start = Instant::now();
    let compare = |d: f64| -> Result<(Vec<f64>, Vec<f64>), String> {
        let dg = build_deceptive_game(&s.game, &s.topology, &[d]).map_err(|e| e.to_string())?;
        let deceptive = simulate(
            ModelKind::Full,
            &s.game,
            &s.topology,
            &tuning,
            &SimState { t: 0.0, u: x0.clone(), delta: vec![d] },
            &cfg,
        )
        .map_err(|e| format!("deceptive NES on the true costs: {e}"))?;
        let plain = simulate_with_costs(
            ModelKind::Full,
            &s.game,
            &dg,
            &empty,
            &tuning,
            &SimState { t: 0.0, u: x0.clone(), delta: vec![] },
            &cfg,
        )
        .map_err(|e| format!("plain NES on the deceptive costs: {e}"))?;
        Ok((deceptive.steady_state.u, plain.steady_state.u))
    };
    let outcome = match compare(EXPECTED_DELTA_STAR) {
        Ok((a, b)) => {
            let gap = max_abs_diff(&a, &b);
            Outcome::new(
                gap <= tol,
                format!("delta = {EXPECTED_DELTA_STAR}: terminal u gap {gap:.4} (tol {tol:.4}), {:?}", start.elapsed()),
            )
        }
        Err(e) => Outcome::new(
            false,
            format!("delta = {EXPECTED_DELTA_STAR}: {e} (tol {tol:.4}), {:?}", start.elapsed()),
        ),
    };
    let d_star = deception::solve_attainability(
        &s.game,
        &s.topology,
        &s.topology.references(),
        s.tuning.gains(),
        &SearchConfig::default(),
    )
    .unwrap()
    .delta_star[0];
    let note = match compare(d_star) {
        Ok((a, b)) => format!("at the model's own delta* = {d_star:.4}: terminal u gap {:.4}", max_abs_diff(&a, &b)),
        Err(e) => format!("at the model's own delta* = {d_star:.4}: {e}"),
    };
    outcome.note(note)
}

fn criterion_7() -> Outcome {
    let s = example();
    let tuning = s.tuning.with_frequency_scale(0.1).unwrap();
    let r = deception::solve_attainability(
        &s.game,
        &s.topology,
        &s.topology.references(),
        s.tuning.gains(),
        &SearchConfig::default(),
    )
    .unwrap();
    let eps = s.topology.eps() * s.topology.gains()[0];
    let time_constant = 1.0 / (eps * r.lambda.matrix[(0, 0)].abs());
    let horizon = (20.0 * time_constant).ceil();
    let x0 = s.game.nash_equilibrium().unwrap();
    let cfg = SimConfig {
        horizon,
        stride: 1.0,
        ..SimConfig::default()
    };
    let start = Instant::now();
    let traj = match simulate(
        ModelKind::Full,
        &s.game,
        &s.topology,
        &tuning,
        &SimState { t: 0.0, u: x0.clone(), delta: vec![0.0] },
        &cfg,
    ) {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("simulation failed: {e}")),
    };
    let ss = &traj.steady_state;
    let d = ss.delta[0];
    let p1 = ss.profits[0];
    let delta_ok = (d - EXPECTED_DELTA_STAR).abs() <= 0.05;
    let profit_ok = (p1 - P1_REF).abs() <= 0.01 * P1_REF;
    let price_ok = ss.x[2] > x0[2];
    Outcome::new(
        delta_ok && profit_ok && price_ok,
        format!(
            "horizon {horizon} (20 x {time_constant:.1}): delta1 = {d:.4} [{}], P1 = {p1:.2} [{}], x3 {:.3} -> {:.3} [{}], {:?}",
            if delta_ok { "ok" } else { "off by more than 0.05" },
            if profit_ok { "ok" } else { "off by more than 1%" },
            x0[2],
            ss.x[2],
            if price_ok { "ok" } else { "not increased" },
            start.elapsed()
        ),
    )
    .note(format!(
        "attainability root of the same model: delta* = {:.4}; the averaged dither bias at frequency scale 0.1 moves the settled gain by {:.4}",
        r.delta_star[0],
        d - r.delta_star[0]
    ))
}

fn criterion_8() -> Outcome {
    let s = example();
    let x0 = s.game.nash_equilibrium().unwrap();
    let u0: Vec<f64> = x0.iter().zip([1.0, -1.0, 1.0]).map(|(x, o)| x + o).collect();
    let empty = DeceptionTopology::empty(3);
    let cfg = SimConfig {
        horizon: 100.0,
        stride: 0.05,
        ..SimConfig::default()
    };
    let start = Instant::now();
    let init = SimState { t: 0.0, u: u0, delta: vec![] };
    let gaps: Vec<f64> = [0.1, 0.2, 0.4]
        .iter()
        .map(|&scale| {
            let tuning = s.tuning.with_frequency_scale(scale).unwrap();
            let full = simulate(ModelKind::Full, &s.game, &empty, &tuning, &init, &cfg).unwrap();
            let avg = simulate(ModelKind::Averaged, &s.game, &empty, &tuning, &init, &cfg).unwrap();
            full.samples
                .iter()
                .zip(&avg.samples)
                .map(|(a, b)| max_abs_diff(&a.u, &b.u))
                .fold(0.0, f64::max)
        })
        .collect();
    let time = start.elapsed();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        monotone && time < Duration::from_secs(120),
        format!(
            "sup |u_full - u_avg| at scales 0.1/0.2/0.4 = {:.4} / {:.4} / {:.4}, {time:?}",
            gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn criterion_9() -> Outcome {
    // RK4 on x' = -x
    let err = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let mut x = vec![1.0];
        let mut rk = Rk4::new(1);
        for k in 0..steps {
            rk.step::<_, ()>(
                |_, y, dy| {
                    dy[0] = -y[0];
                    Ok(())
                },
                k as f64 * dt,
                &mut x,
                dt,
            )
            .unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| err(dt)).collect();
    let ratios = [e[0] / e[1], e[1] / e[2]];
    let order_ok = ratios.iter().all(|&r| r >= 14.0);

    let mut rng = StdRng::seed_from_u64(0x9a);
    let mut worst_solve: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=20);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                r[i] += n as f64 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                r
            })
            .collect();
        let a = DenseMatrix::from_rows(&rows);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x = numerics::solve_linear(&a, &b).unwrap();
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        let rel = numerics::norm_inf(&r) / (a.norm_inf() * numerics::norm_inf(&x) + numerics::norm_inf(&b));
        worst_solve = worst_solve.max(rel);
    }
    let solve_ok = worst_solve <= 1e-10;

    let mut worst_t: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=8);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let a = DenseMatrix::from_rows(&rows);
        let d = numerics::spectral_abscissa(&a).unwrap() - numerics::spectral_abscissa(&a.transpose()).unwrap();
        worst_t = worst_t.max(d.abs());
    }
    let transpose_ok = worst_t <= 1e-9;
    Outcome::new(
        order_ok && solve_ok && transpose_ok,
        format!(
            "RK4 error ratios {:.2}, {:.2} (min 14); worst solve residual {worst_solve:.1e} (max 1e-10); worst abscissa transpose gap {worst_t:.1e} (max 1e-9)",
            ratios[0], ratios[1]
        ),
    )
}

fn criterion_10() -> Outcome {
    let s = example();
    // boundary-layer contraction at several gains inside the stability set
    let mut contraction = Vec::new();
    let mut contraction_ok = true;
    for d in [0.0, 1.0, EXPECTED_DELTA_STAR] {
        let pert = deception::perturbed_pseudogradient(&s.game, &s.topology, &[d]).unwrap();
        let alpha = pert.stability_abscissa(s.tuning.gains()).unwrap();
        let h = deception::deceptive_equilibrium(&s.game, &s.topology, &[d]).unwrap();
        let u0: Vec<f64> = h.iter().zip([3.0, -2.0, 4.0]).map(|(h, y)| h + y).collect();
        let horizon = (12.0 / alpha.abs()).ceil();
        let cfg = SimConfig { horizon, stride: 0.5, ..SimConfig::default() };
        let traj = simulate(
            ModelKind::Boundary,
            &s.game,
            &s.topology,
            &s.tuning,
            &SimState { t: 0.0, u: u0, delta: vec![d] },
            &cfg,
        )
        .unwrap();
        let norm = |k: usize| -> f64 {
            let u = &traj.samples[k].u;
            u.iter().zip(&h).map(|(u, h)| (u - h) * (u - h)).sum::<f64>().sqrt()
        };
        let last = traj.samples.len() - 1;
        let from = last / 2;
        let monotone = (from..last).all(|k| norm(k + 1) < norm(k));
        let rate = (norm(from) / norm(last)).ln() / (traj.samples[last].t - traj.samples[from].t);
        let ok = monotone && rate >= 0.9 * alpha.abs();
        contraction_ok &= ok;
        contraction.push(format!("delta {d}: rate {rate:.4} vs |alpha| {:.4}", alpha.abs()));
    }

    // convergence to a shrinking neighborhood of the Nash equilibrium
    let x0 = s.game.nash_equilibrium().unwrap();
    let u0: Vec<f64> = x0.iter().zip([1.0, -1.0, 1.0]).map(|(x, o)| x + o).collect();
    let empty = DeceptionTopology::empty(3);
    let cfg = SimConfig { horizon: 600.0, stride: 1.0, ..SimConfig::default() };
    let mut devs = Vec::new();
    let mut tol_last = 0.0;
    for scale in [0.1, 0.2, 0.4] {
        let tuning = s.tuning.with_frequency_scale(scale).unwrap();
        let traj = simulate(
            ModelKind::Full,
            &s.game,
            &empty,
            &tuning,
            &SimState { t: 0.0, u: u0.clone(), delta: vec![] },
            &cfg,
        )
        .unwrap();
        devs.push(max_abs_diff(&traj.steady_state.x, &x0));
        tol_last = neighborhood_tolerance(&tuning);
    }
    let shrink_ok = devs.windows(2).all(|w| w[1] < w[0]) && devs[2] <= tol_last;
    Outcome::new(
        contraction_ok && shrink_ok,
        format!(
            "qualitative only: boundary layer {}; steady |x - x0| at scales 0.1/0.2/0.4 = {:.4} / {:.4} / {:.4} (last within {tol_last:.4})",
            contraction.join(", "),
            devs[0],
            devs[1],
            devs[2]
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "Nash equilibrium of the example", criterion_1),
        (2, "perturbed pseudogradient", criterion_2),
        (3, "attainability", criterion_3),
        (4, "stability set for |delta| < 1", criterion_4),
        (5, "deceptive Nash for |delta| < 2", criterion_5),
        (6, "deceptive game equivalence", criterion_6),
        (7, "full deception simulation", criterion_7),
        (8, "averaging order", criterion_8),
        (9, "numerical substrate", criterion_9),
        (10, "qualitative stability properties", criterion_10),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Outcome::new(false, "panicked"));
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name}: {}", outcome.detail);
        for note in &outcome.notes {
            println!("             note: {note}");
        }
        if !outcome.pass {
            failed.push(n);
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if !failed.is_empty() {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
