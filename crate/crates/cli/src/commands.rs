//! Subcommands. Each one validates its flags, computes, and writes its files
//! into the output directory.

use std::path::{Path, PathBuf};

use deceptive_nes_core::deception::{self, SearchConfig};
use deceptive_nes_core::deceptive_game::{self, PriceDirection};
use deceptive_nes_core::dynamics::{self, SimConfig, SimState};
use deceptive_nes_core::{DenseMatrix, Error, ModelKind};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{self, fmt_sig, WriteError};
use crate::scenario::{ModelSpec, Scenario, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CommandKind {
    Nash,
    Stability,
    Attain,
    Simulate,
    DeceptiveGame,
    Sweep,
}

/// Optional flags shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub delta: Option<Vec<f64>>,
    pub delta_grid: Option<Grid>,
    pub model: Option<ModelSpec>,
    pub freq_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=count).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error(transparent)]
    Write(#[from] WriteError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Scenario(_) => 2,
            Self::Numerical(_) => 3,
            Self::Write(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Scenario(e) => e.kind(),
            Self::Numerical(_) => "numerical",
            Self::Write(_) => "io",
        }
    }
}

pub fn parse_delta(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            let v: f64 = p.trim().parse().map_err(|_| format!("invalid number `{p}`"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{p}` is not finite"))
            }
        })
        .collect()
}

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(format!("expected lo:hi:step, got `{s}`"));
    };
    let num = |p: &str| p.trim().parse::<f64>().map_err(|_| format!("invalid number `{p}`"));
    let grid = Grid {
        lo: num(lo)?,
        hi: num(hi)?,
        step: num(step)?,
    };
    if !(grid.lo.is_finite() && grid.hi.is_finite() && grid.step.is_finite()) {
        return Err("grid bounds must be finite".into());
    }
    if grid.step <= 0.0 || grid.hi < grid.lo {
        return Err(format!("grid `{s}` needs lo <= hi and step > 0"));
    }
    if (grid.hi - grid.lo) / grid.step > 1e7 {
        return Err(format!("grid `{s}` has too many points"));
    }
    Ok(grid)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn reject(cmd: CommandKind, flag: &str, given: bool) -> Result<(), CliError> {
    if given {
        Err(usage(format!("{flag} is not used by `{}`", command_name(cmd))))
    } else {
        Ok(())
    }
}

pub fn command_name(cmd: CommandKind) -> &'static str {
    match cmd {
        CommandKind::Nash => "nash",
        CommandKind::Stability => "stability",
        CommandKind::Attain => "attain",
        CommandKind::Simulate => "simulate",
        CommandKind::DeceptiveGame => "deceptive-game",
        CommandKind::Sweep => "sweep",
    }
}

/// Runs `cmd` and returns the files written.
pub fn dispatch(
    cmd: CommandKind,
    scenario: &Scenario,
    opts: &Options,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let sim_only = opts.model.is_some() || opts.freq_scale.is_some();
    if !matches!(cmd, CommandKind::Simulate) {
        reject(cmd, "--model/--freq-scale", sim_only)?;
    }
    match cmd {
        CommandKind::Nash => {
            reject(cmd, "--delta/--delta-grid", opts.delta.is_some() || opts.delta_grid.is_some())?;
            nash(scenario, out)
        }
        CommandKind::Stability => stability(scenario, opts, out),
        CommandKind::Attain => {
            reject(cmd, "--delta/--delta-grid", opts.delta.is_some() || opts.delta_grid.is_some())?;
            attain(scenario, out)
        }
        CommandKind::Simulate => {
            reject(cmd, "--delta-grid", opts.delta_grid.is_some())?;
            simulate(scenario, opts, out)
        }
        CommandKind::DeceptiveGame => {
            reject(cmd, "--delta-grid", opts.delta_grid.is_some())?;
            deceptive(scenario, opts, out)
        }
        CommandKind::Sweep => {
            reject(cmd, "--delta", opts.delta.is_some())?;
            sweep(scenario, opts, out)
        }
    }
}

fn require_deception(s: &Scenario, cmd: CommandKind) -> Result<(), CliError> {
    if s.has_deception() {
        Ok(())
    } else {
        Err(usage(format!("`{}` needs a deception block in the scenario", command_name(cmd))))
    }
}

fn check_delta_len(s: &Scenario, delta: &[f64]) -> Result<(), CliError> {
    if delta.len() != s.topology.len() {
        return Err(usage(format!(
            "--delta has {} entries but the scenario has {} deceivers",
            delta.len(),
            s.topology.len()
        )));
    }
    Ok(())
}

fn single_deceiver_grid(s: &Scenario, cmd: CommandKind, grid: Grid) -> Result<Vec<f64>, CliError> {
    if s.topology.len() != 1 {
        return Err(usage(format!(
            "`{}` with --delta-grid needs exactly one deceiver, the scenario has {}",
            command_name(cmd),
            s.topology.len()
        )));
    }
    Ok(grid.points())
}

fn negated(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn one_based(players: impl IntoIterator<Item = usize>) -> Vec<usize> {
    players.into_iter().map(|p| p + 1).collect()
}

fn matrix_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

#[derive(Serialize)]
struct NashSummary {
    x_star: Vec<f64>,
    costs: Vec<f64>,
    profits: Vec<f64>,
}

fn nash(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let x = s.game.nash_equilibrium()?;
    let costs = s.market.costs(&x)?;
    let summary = NashSummary {
        profits: negated(&costs),
        x_star: x,
        costs,
    };
    Ok(vec![output::write_json(out, output::SUMMARY_FILE, &summary)?])
}

#[derive(Serialize)]
struct StabilityPoint {
    delta: Vec<f64>,
    abscissa: f64,
    in_delta: bool,
}

#[derive(Serialize)]
struct StabilityGridSummary {
    deceivers: Vec<usize>,
    points: usize,
    in_delta_count: usize,
    /// Consecutive grid values where membership flips.
    transitions: Vec<[f64; 2]>,
}

fn stability_point(s: &Scenario, delta: &[f64]) -> Result<StabilityPoint, Error> {
    let pert = deception::perturbed_pseudogradient(&s.game, &s.topology, delta)?;
    Ok(StabilityPoint {
        delta: delta.to_vec(),
        abscissa: pert.stability_abscissa(s.tuning.gains())?,
        in_delta: deception::in_stability_set(&pert, s.tuning.gains())?,
    })
}

fn stability_csv(s: &Scenario, points: &[StabilityPoint]) -> String {
    let mut header: Vec<String> = s
        .topology
        .deceivers()
        .iter()
        .map(|d| format!("delta_{}", d.player + 1))
        .collect();
    header.push("abscissa".into());
    header.push("in_delta".into());
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut r: Vec<String> = p.delta.iter().map(|v| fmt_sig(*v)).collect();
            r.push(fmt_sig(p.abscissa));
            r.push(p.in_delta.to_string());
            r
        })
        .collect();
    output::csv(&header, &rows)
}

fn stability(s: &Scenario, opts: &Options, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_deception(s, CommandKind::Stability)?;
    match (&opts.delta, opts.delta_grid) {
        (Some(_), Some(_)) => Err(usage("give either --delta or --delta-grid")),
        (None, None) => Err(usage("`stability` needs --delta or --delta-grid")),
        (Some(delta), None) => {
            check_delta_len(s, delta)?;
            let p = stability_point(s, delta)?;
            let csv = stability_csv(s, std::slice::from_ref(&p));
            Ok(vec![
                output::write_file(out, output::STABILITY_FILE, &csv)?,
                output::write_json(out, output::SUMMARY_FILE, &p)?,
            ])
        }
        (None, Some(grid)) => {
            let values = single_deceiver_grid(s, CommandKind::Stability, grid)?;
            let points = values
                .par_iter()
                .map(|&d| stability_point(s, &[d]))
                .collect::<Result<Vec<_>, _>>()?;
            let transitions = points
                .windows(2)
                .filter(|w| w[0].in_delta != w[1].in_delta)
                .map(|w| [w[0].delta[0], w[1].delta[0]])
                .collect();
            let summary = StabilityGridSummary {
                deceivers: one_based(s.topology.deceivers().iter().map(|d| d.player)),
                points: points.len(),
                in_delta_count: points.iter().filter(|p| p.in_delta).count(),
                transitions,
            };
            Ok(vec![
                output::write_file(out, output::STABILITY_FILE, &stability_csv(s, &points))?,
                output::write_json(out, output::SUMMARY_FILE, &summary)?,
            ])
        }
    }
}

#[derive(Serialize)]
struct AttainSummary {
    deceivers: Vec<usize>,
    j_ref: Vec<f64>,
    delta_star: Vec<f64>,
    x_star: Vec<f64>,
    lambda: Vec<Vec<f64>>,
    lambda_condition: f64,
    lambda_ill_conditioned: bool,
    lambda_hurwitz: bool,
    attainable: bool,
    in_delta: bool,
    residual: Vec<f64>,
    failure: Option<String>,
    costs: Vec<f64>,
    profits: Vec<f64>,
}

fn attain(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_deception(s, CommandKind::Attain)?;
    let j_ref = s.topology.references();
    let r = deception::solve_attainability(
        &s.game,
        &s.topology,
        &j_ref,
        s.tuning.gains(),
        &SearchConfig::default(),
    )?;
    let costs = if r.u_star.iter().all(|v| v.is_finite()) {
        s.market.costs(&r.u_star)?
    } else {
        vec![f64::NAN; s.players()]
    };
    let summary = AttainSummary {
        deceivers: one_based(s.topology.deceivers().iter().map(|d| d.player)),
        j_ref,
        lambda: matrix_rows(&r.lambda.matrix),
        lambda_condition: r.lambda.condition,
        lambda_ill_conditioned: r.lambda.ill_conditioned(),
        lambda_hurwitz: r.lambda_hurwitz,
        attainable: r.attainable,
        in_delta: r.in_delta,
        residual: r.residual.clone(),
        failure: r.failure.as_ref().map(|f| format!("{f:?}")),
        profits: negated(&costs),
        costs,
        delta_star: r.delta_star,
        x_star: r.u_star,
    };
    Ok(vec![output::write_json(out, output::SUMMARY_FILE, &summary)?])
}

#[derive(Serialize)]
struct SimulateSummary {
    model: &'static str,
    freq_scale: f64,
    dt: f64,
    samples: usize,
    window: [f64; 2],
    deceivers: Vec<usize>,
    x_star: Vec<f64>,
    u: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    delta_star: Vec<f64>,
    costs: Vec<f64>,
    profits: Vec<f64>,
}

/// Initial state from the scenario: `u` if given, else the Nash equilibrium
/// shifted by `offset`.
pub fn initial_state(s: &Scenario) -> Result<SimState, Error> {
    let u = match (&s.file.initial.u, &s.file.initial.offset) {
        (Some(u), _) => u.clone(),
        (None, offset) => {
            let mut x = s.game.nash_equilibrium()?;
            if let Some(off) = offset {
                x.iter_mut().zip(off).for_each(|(x, o)| *x += o);
            }
            x
        }
    };
    Ok(SimState {
        t: 0.0,
        u,
        delta: s.initial_delta(),
    })
}

fn simulate(s: &Scenario, opts: &Options, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model: ModelKind = opts.model.unwrap_or(s.file.sim.model).into();
    let scale = opts.freq_scale.unwrap_or(s.file.sim.freq_scale);
    if !(scale.is_finite() && scale > 0.0) {
        return Err(usage(format!("--freq-scale must be positive, got {scale}")));
    }
    let tuning = s.tuning.with_frequency_scale(scale)?;
    let mut init = initial_state(s)?;
    if let Some(delta) = &opts.delta {
        check_delta_len(s, delta)?;
        init.delta = delta.clone();
    }
    let cfg = SimConfig {
        horizon: s.file.sim.horizon,
        stride: s.file.sim.stride,
        oversampling: s.file.sim.oversampling,
        smooth_dt: s.file.sim.smooth_dt,
        freeze_delta: false,
    };
    let traj = dynamics::simulate(model, &s.game, &s.topology, &tuning, &init, &cfg)?;
    let ss = &traj.steady_state;
    let summary = SimulateSummary {
        model: model.name(),
        freq_scale: scale,
        dt: traj.dt,
        samples: traj.samples.len(),
        window: [ss.window.0, ss.window.1],
        deceivers: one_based(traj.deceivers.iter().copied()),
        x_star: ss.x.clone(),
        u: ss.u.clone(),
        delta_star: ss.delta.clone(),
        costs: ss.costs.clone(),
        profits: ss.profits.clone(),
    };
    Ok(vec![
        output::write_file(out, output::TRAJECTORY_FILE, &output::trajectory_csv(&traj))?,
        output::write_json(out, output::SUMMARY_FILE, &summary)?,
    ])
}

#[derive(Serialize)]
struct DesirabilityOut {
    victim: usize,
    true_aggregate: f64,
    perceived_aggregate: f64,
    perceived_per_deceiver: Vec<PerDeceiver>,
    direction: &'static str,
}

#[derive(Serialize)]
struct PerDeceiver {
    deceiver: usize,
    perceived: f64,
}

#[derive(Serialize)]
struct NashCheck {
    u_star: Vec<f64>,
    is_ne: bool,
    first_order_residual: f64,
    second_order_margins: Vec<f64>,
}

#[derive(Serialize)]
struct DeceptiveGameSummary {
    deceivers: Vec<usize>,
    delta: Vec<f64>,
    sigma: Vec<f64>,
    gamma: Vec<f64>,
    desirability: Vec<DesirabilityOut>,
    nash: NashCheck,
    profits: Vec<f64>,
}

fn direction_name(d: PriceDirection) -> &'static str {
    match d {
        PriceDirection::RaisesPrice => "raises_price",
        PriceDirection::LowersPrice => "lowers_price",
        PriceDirection::Neutral => "neutral",
    }
}

fn deceptive(s: &Scenario, opts: &Options, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_deception(s, CommandKind::DeceptiveGame)?;
    let delta = match &opts.delta {
        Some(d) => {
            check_delta_len(s, d)?;
            d.clone()
        }
        None => {
            let r = deception::solve_attainability(
                &s.game,
                &s.topology,
                &s.topology.references(),
                s.tuning.gains(),
                &SearchConfig::default(),
            )?;
            if !r.attainable {
                return Err(usage(
                    "the reference costs are not attainable; pass --delta explicitly",
                ));
            }
            r.delta_star
        }
    };
    let dg = deceptive_game::build_deceptive_game(&s.game, &s.topology, &delta)?;
    let u = dg.nash_equilibrium()?;
    let verdict = deceptive_game::verify_deceptive_nash(&dg, &u);
    let mut desirability = Vec::new();
    for j in 0..s.players() {
        if s.topology.attackers(j).is_empty() {
            continue;
        }
        let rep = deceptive_game::perceived_desirability(&s.game, &s.topology, &delta, j)?;
        desirability.push(DesirabilityOut {
            victim: j + 1,
            true_aggregate: rep.true_aggregate,
            perceived_aggregate: rep.perceived_aggregate,
            perceived_per_deceiver: rep
                .perceived_per_deceiver
                .iter()
                .map(|&(k, v)| PerDeceiver {
                    deceiver: k + 1,
                    perceived: v,
                })
                .collect(),
            direction: direction_name(rep.direction),
        });
    }
    let profits = negated(&s.market.costs(&u)?);
    let summary = DeceptiveGameSummary {
        deceivers: one_based(s.topology.deceivers().iter().map(|d| d.player)),
        sigma: dg.sigma().to_vec(),
        gamma: dg.inflation().to_vec(),
        delta,
        desirability,
        nash: NashCheck {
            u_star: u,
            is_ne: verdict.is_ne,
            first_order_residual: verdict.first_order_residual,
            second_order_margins: verdict.second_order_margins,
        },
        profits,
    };
    Ok(vec![output::write_json(out, output::SUMMARY_FILE, &summary)?])
}

fn sweep(s: &Scenario, opts: &Options, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_deception(s, CommandKind::Sweep)?;
    let grid = opts.delta_grid.unwrap_or(Grid {
        lo: -10.0,
        hi: 10.0,
        step: 0.1,
    });
    let values = single_deceiver_grid(s, CommandKind::Sweep, grid)?;
    let z = s.topology.deceivers()[0].player + 1;
    let rows = values
        .par_iter()
        .map(|&d| -> Result<Vec<String>, Error> {
            let pert = deception::perturbed_pseudogradient(&s.game, &s.topology, &[d])?;
            let in_delta = deception::in_stability_set(&pert, s.tuning.gains())?;
            let cost = match deception::deceiver_costs_at(&s.game, &s.topology, &[d]) {
                Ok(c) => c[0],
                Err(Error::SingularPerturbation { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            Ok(vec![fmt_sig(d), fmt_sig(cost), in_delta.to_string()])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let header = vec!["delta".to_string(), format!("J_{z}"), "in_delta".to_string()];
    Ok(vec![output::write_file(out, output::SWEEP_FILE, &output::csv(&header, &rows))?])
}
