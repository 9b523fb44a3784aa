//! Nash equilibrium seeking dynamics with sinusoidal dithers.
//!
//! Four models share one physical time axis `t`:
//!
//! - `Full`: the dithered ODEs, `x = u + mu(t)`,
//!   `du_i/dt = -(2 k_i / a_i) J_i(x) sin(w_i t)`,
//!   `d delta_k/dt = eps eps_k (J_k(x) - J_k^ref)`.
//! - `Averaged`: `du/dt = -K (Qbar(delta) u + Bbar(delta))`,
//!   `d delta_k/dt = eps eps_k (J_k(u) - J_k^ref + P_k(a))`.
//! - `Reduced`: `d delta/dt = eps diag(eps_z) (J*(h(delta)) - J^ref)`.
//! - `Boundary`: `dy/dt = -K Qbar(delta) y` at frozen `delta`, with
//!   `u = h(delta) + y`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::deception::{self, DeceptionTopology, PerturbedPseudogradient};
use crate::error::Error;
use crate::numerics::{self, Rk4};
use crate::oligopoly::{OligopolyParams, QuadraticGame};

/// Exact positive rational `num / den` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    num: u64,
    den: u64,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self, Error> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidParameter {
                name: "frequency ratio",
                index: None,
                value: if den == 0 { f64::INFINITY } else { 0.0 },
                requirement: "a positive rational",
            });
        }
        let g = gcd(num as u128, den as u128) as u64;
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(n: u64) -> Result<Self, Error> {
        Self::new(n, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn recip(&self) -> Self {
        Self {
            num: self.den,
            den: self.num,
        }
    }
}

/// Least common multiple of positive rationals, `lcm(a/b, c/d) =
/// lcm(a, c) / gcd(b, d)` in lowest terms.
fn lcm_ratios(values: &[Ratio]) -> Result<Ratio, Error> {
    let mut acc: Option<(u128, u128)> = None;
    for r in values {
        let (n, d) = (r.num as u128, r.den as u128);
        acc = Some(match acc {
            None => (n, d),
            Some((an, ad)) => {
                let g = gcd(an, n);
                let l = (an / g).checked_mul(n).ok_or(Error::RationalOverflow)?;
                (l, gcd(ad, d))
            }
        });
    }
    let (n, d) = acc.ok_or(Error::TooFewPlayers { players: 0 })?;
    let g = gcd(n, d);
    let (n, d) = (n / g, d / g);
    if n > u64::MAX as u128 || d > u64::MAX as u128 {
        return Err(Error::RationalOverflow);
    }
    Ok(Ratio {
        num: n as u64,
        den: d as u64,
    })
}

/// Common period `T = 2 pi lcm(1/r_1, ..., 1/r_N)` of `sin(r_i tau)`,
/// computed exactly in rational arithmetic before the final scaling.
pub fn common_period(ratios: &[Ratio]) -> Result<f64, Error> {
    let inv: Vec<Ratio> = ratios.iter().map(Ratio::recip).collect();
    let l = lcm_ratios(&inv)?;
    Ok(2.0 * PI * l.to_f64())
}

/// Dither amplitudes, adaptation gains and frequencies `w_i = omega r_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NesTuning {
    amplitudes: Vec<f64>,
    gains: Vec<f64>,
    omega: f64,
    ratios: Vec<Ratio>,
    frequencies: Vec<f64>,
}

impl NesTuning {
    pub fn new(
        amplitudes: Vec<f64>,
        gains: Vec<f64>,
        omega: f64,
        ratios: Vec<Ratio>,
    ) -> Result<Self, Error> {
        let n = amplitudes.len();
        for (what, len) in [("adaptation gains", gains.len()), ("frequency ratios", ratios.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        for (name, values) in [("amplitude", &amplitudes), ("adaptation gain", &gains)] {
            for (i, &v) in values.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidParameter {
                        name,
                        index: Some(i),
                        value: v,
                        requirement: "positive and finite",
                    });
                }
            }
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter {
                name: "omega",
                index: None,
                value: omega,
                requirement: "positive and finite",
            });
        }
        for i in 0..n {
            for j in 0..i {
                if ratios[i] == ratios[j] {
                    return Err(Error::DuplicateFrequency { first: j, second: i });
                }
            }
        }
        let frequencies = ratios.iter().map(|r| omega * r.to_f64()).collect();
        Ok(Self {
            amplitudes,
            gains,
            omega,
            ratios,
            frequencies,
        })
    }

    /// Same tuning with every frequency multiplied by `factor`.
    pub fn with_frequency_scale(&self, factor: f64) -> Result<Self, Error> {
        Self::new(
            self.amplitudes.clone(),
            self.gains.clone(),
            self.omega * factor,
            self.ratios.clone(),
        )
    }

    pub fn players(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn ratios(&self) -> &[Ratio] {
        &self.ratios
    }

    /// Effective frequencies `w_i`.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amplitudes.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_frequency(&self) -> f64 {
        self.frequencies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies.iter().copied().fold(0.0, f64::max)
    }

    /// Common period of all dithers in physical time, `T / omega`.
    pub fn period(&self) -> Result<f64, Error> {
        Ok(common_period(&self.ratios)? / self.omega)
    }
}

fn fill_sines(tuning: &NesTuning, t: f64, out: &mut [f64]) {
    for (s, w) in out.iter_mut().zip(tuning.frequencies()) {
        *s = libm::sin(w * t);
    }
}

fn fill_dither(
    tuning: &NesTuning,
    topology: &DeceptionTopology,
    delta: &[f64],
    sines: &[f64],
    out: &mut [f64],
) {
    let a = tuning.amplitudes();
    for i in 0..out.len() {
        out[i] = a[i] * sines[i];
    }
    for (slot, d) in topology.deceivers().iter().enumerate() {
        let injected: f64 = d.victims.iter().map(|&j| a[j] * sines[j]).sum();
        out[d.player] += delta[slot] * injected;
    }
}

/// Dither `mu(t)`: `a_i sin(w_i t)`, plus `delta_i sum_{j in D_i} a_j
/// sin(w_j t)` for deceivers.
pub fn dither_vector(
    tuning: &NesTuning,
    topology: &DeceptionTopology,
    delta: &[f64],
    t: f64,
) -> Result<Vec<f64>, Error> {
    topology.check_delta(delta)?;
    let n = tuning.players();
    let mut sines = vec![0.0; n];
    fill_sines(tuning, t, &mut sines);
    let mut mu = vec![0.0; n];
    fill_dither(tuning, topology, delta, &sines, &mut mu);
    Ok(mu)
}

/// Cost oracle queried by the seeking dynamics.
pub trait CostModel {
    fn players(&self) -> usize;

    /// Cost of player `i` at the action profile `x`.
    fn cost(&self, i: usize, x: &[f64]) -> f64;
}

impl CostModel for OligopolyParams {
    fn players(&self) -> usize {
        OligopolyParams::players(self)
    }

    fn cost(&self, i: usize, x: &[f64]) -> f64 {
        self.cost_of(i, x)
    }
}

impl CostModel for QuadraticGame {
    fn players(&self) -> usize {
        QuadraticGame::players(self)
    }

    fn cost(&self, i: usize, x: &[f64]) -> f64 {
        self.params().cost_of(i, x)
    }
}

/// `O(a)` residual of the averaged deceptive-gain dynamics, one entry per
/// deceiver.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedResidual {
    pub p_term: Vec<f64>,
}

/// Coefficient of `sin(w_f t)` in `mu_j`, as columns `c_f`.
fn dither_coefficients(
    tuning: &NesTuning,
    topology: &DeceptionTopology,
    delta: &[f64],
) -> Vec<Vec<f64>> {
    let n = tuning.players();
    let a = tuning.amplitudes();
    let mut cols = vec![vec![0.0; n]; n];
    for f in 0..n {
        cols[f][f] = a[f];
    }
    for (slot, d) in topology.deceivers().iter().enumerate() {
        for &v in &d.victims {
            cols[v][d.player] += delta[slot] * a[v];
        }
    }
    cols
}

/// Period average of `mu^T Q_i mu / 2` for each deceiver `i`.
///
/// With pairwise distinct commensurate frequencies only matched products
/// survive averaging, so the average is `(1/4) sum_f c_f^T Q_i c_f` where
/// `c_f` collects the coefficients of `sin(w_f t)` across players.
pub fn averaged_residual(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    tuning: &NesTuning,
    delta: &[f64],
) -> Result<AveragedResidual, Error> {
    topology.check_delta(delta)?;
    let cols = dither_coefficients(tuning, topology, delta);
    let p_term = topology
        .deceivers()
        .iter()
        .map(|d| dither_second_moment(game, d.player, &cols))
        .collect();
    Ok(AveragedResidual { p_term })
}

fn dither_second_moment(game: &QuadraticGame, i: usize, cols: &[Vec<f64>]) -> f64 {
    let qi = game.q(i);
    0.25 * cols
        .iter()
        .map(|c| numerics::dot(c, &qi.mul_vec(c)))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Full,
    Averaged,
    Reduced,
    Boundary,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Averaged => "averaged",
            Self::Reduced => "reduced",
            Self::Boundary => "boundary",
        }
    }
}

/// Simulation state: time, learned actions and deceptive gains.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    /// Time between recorded samples.
    pub stride: f64,
    /// Steps per period of the fastest dither in the full model (>= 16).
    pub oversampling: usize,
    /// Nominal step for the dither-free models.
    pub smooth_dt: f64,
    /// Hold the deceptive gains at their initial values.
    pub freeze_delta: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            stride: 0.1,
            oversampling: 32,
            smooth_dt: 1e-2,
            freeze_delta: false,
        }
    }
}

/// One recorded row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub u: Vec<f64>,
    pub delta: Vec<f64>,
    pub x: Vec<f64>,
    pub costs: Vec<f64>,
    pub profits: Vec<f64>,
}

/// Means over the final common dither period.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub window: (f64, f64),
    pub u: Vec<f64>,
    pub delta: Vec<f64>,
    pub x: Vec<f64>,
    pub costs: Vec<f64>,
    pub profits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: ModelKind,
    pub dt: f64,
    pub stride: f64,
    /// Players acting as deceivers, in gain-vector order.
    pub deceivers: Vec<usize>,
    pub samples: Vec<Sample>,
    pub steady_state: SteadyState,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories hold at least one sample")
    }
}

/// Everything the right-hand sides need, prepared once per run.
pub struct NesSystem<'a> {
    game: &'a QuadraticGame,
    costs: &'a dyn CostModel,
    topology: &'a DeceptionTopology,
    tuning: &'a NesTuning,
    j_ref: Vec<f64>,
    freeze_delta: bool,
    // boundary model only
    frozen: Option<(PerturbedPseudogradient, Vec<f64>)>,
}

impl<'a> NesSystem<'a> {
    /// Dynamics on the true oligopoly costs.
    pub fn new(
        game: &'a QuadraticGame,
        topology: &'a DeceptionTopology,
        tuning: &'a NesTuning,
    ) -> Result<Self, Error> {
        Self::with_costs(game, game, topology, tuning)
    }

    /// Dynamics whose full model measures `costs` instead of the true
    /// oligopoly costs. The averaged, reduced and boundary models always use
    /// the quadratic structure of `game`.
    pub fn with_costs(
        game: &'a QuadraticGame,
        costs: &'a dyn CostModel,
        topology: &'a DeceptionTopology,
        tuning: &'a NesTuning,
    ) -> Result<Self, Error> {
        let n = game.players();
        for (what, found) in [
            ("tuning player count", tuning.players()),
            ("cost model player count", costs.players()),
            ("topology player count", topology.players()),
        ] {
            if found != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found,
                });
            }
        }
        Ok(Self {
            game,
            costs,
            topology,
            tuning,
            j_ref: topology.references(),
            freeze_delta: false,
            frozen: None,
        })
    }

    fn players(&self) -> usize {
        self.game.players()
    }

    fn n_delta(&self) -> usize {
        self.topology.len()
    }

    fn state_dim(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::Full | ModelKind::Averaged => self.players() + self.n_delta(),
            ModelKind::Reduced => self.n_delta(),
            ModelKind::Boundary => self.players(),
        }
    }

    /// Time derivative of the packed state of `kind` at time `t`.
    ///
    /// Layouts: full and averaged `[u, delta]`; reduced `[delta]`; boundary
    /// `[y]` with `delta` frozen by [`NesSystem::freeze_boundary`].
    pub fn rhs(&self, kind: ModelKind, t: f64, state: &[f64], out: &mut [f64]) -> Result<(), Error> {
        let dim = self.state_dim(kind);
        if state.len() != dim || out.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: dim,
                found: state.len(),
            });
        }
        let n = self.players();
        match kind {
            ModelKind::Full => {
                let mut sines = vec![0.0; n];
                let mut x = vec![0.0; n];
                self.full_rhs(t, state, out, &mut sines, &mut x);
                Ok(())
            }
            ModelKind::Averaged => self.averaged_rhs(state, out),
            ModelKind::Reduced => self.reduced_rhs(state, out),
            ModelKind::Boundary => {
                let (pert, _) = self.frozen.as_ref().ok_or(Error::DimensionMismatch {
                    what: "frozen deceptive gains",
                    expected: self.n_delta(),
                    found: 0,
                })?;
                let ky = pert.qbar.mul_vec(state);
                for i in 0..n {
                    out[i] = -self.tuning.gains()[i] * ky[i];
                }
                Ok(())
            }
        }
    }

    fn full_rhs(&self, t: f64, state: &[f64], out: &mut [f64], sines: &mut [f64], x: &mut [f64]) {
        let n = self.players();
        let (u, delta) = state.split_at(n);
        fill_sines(self.tuning, t, sines);
        fill_dither(self.tuning, self.topology, delta, sines, x);
        for i in 0..n {
            x[i] += u[i];
        }
        let a = self.tuning.amplitudes();
        let k = self.tuning.gains();
        for i in 0..n {
            out[i] = -2.0 * k[i] / a[i] * self.costs.cost(i, x) * sines[i];
        }
        let eps = self.topology.eps();
        for (slot, d) in self.topology.deceivers().iter().enumerate() {
            out[n + slot] = if self.freeze_delta {
                0.0
            } else {
                eps * d.gain * (self.costs.cost(d.player, x) - self.j_ref[slot])
            };
        }
    }

    fn averaged_rhs(&self, state: &[f64], out: &mut [f64]) -> Result<(), Error> {
        let n = self.players();
        let (u, delta) = state.split_at(n);
        let pert = deception::perturbed_pseudogradient(self.game, self.topology, delta)?;
        let grad = pert.apply(u);
        for i in 0..n {
            out[i] = -self.tuning.gains()[i] * grad[i];
        }
        if self.n_delta() > 0 {
            let residual = averaged_residual(self.game, self.topology, self.tuning, delta)?;
            let eps = self.topology.eps();
            for (slot, d) in self.topology.deceivers().iter().enumerate() {
                out[n + slot] = if self.freeze_delta {
                    0.0
                } else {
                    let j = self.game.params().cost_of(d.player, u);
                    eps * d.gain * (j - self.j_ref[slot] + residual.p_term[slot])
                };
            }
        }
        Ok(())
    }

    fn reduced_rhs(&self, delta: &[f64], out: &mut [f64]) -> Result<(), Error> {
        let costs = deception::deceiver_costs_at(self.game, self.topology, delta)?;
        let eps = self.topology.eps();
        for (slot, d) in self.topology.deceivers().iter().enumerate() {
            out[slot] = if self.freeze_delta {
                0.0
            } else {
                eps * d.gain * (costs[slot] - self.j_ref[slot])
            };
        }
        Ok(())
    }

    /// Fixes `delta` for the boundary-layer model and returns `h(delta)`.
    pub fn freeze_boundary(&mut self, delta: &[f64]) -> Result<Vec<f64>, Error> {
        let pert = deception::perturbed_pseudogradient(self.game, self.topology, delta)?;
        let h = deception::equilibrium_of(&pert)?;
        self.frozen = Some((pert, h.clone()));
        Ok(h)
    }

    /// Recorded quantities for a packed state.
    fn observe(&self, kind: ModelKind, t: f64, state: &[f64], delta0: &[f64]) -> Result<Sample, Error> {
        let n = self.players();
        let (u, delta): (Vec<f64>, Vec<f64>) = match kind {
            ModelKind::Full | ModelKind::Averaged => {
                (state[..n].to_vec(), state[n..].to_vec())
            }
            ModelKind::Reduced => (
                deception::deceptive_equilibrium(self.game, self.topology, state)?,
                state.to_vec(),
            ),
            ModelKind::Boundary => {
                let h = &self.frozen.as_ref().expect("boundary model is frozen").1;
                (state.iter().zip(h).map(|(y, h)| y + h).collect(), delta0.to_vec())
            }
        };
        let x = if kind == ModelKind::Full {
            let mu = dither_vector(self.tuning, self.topology, &delta, t)?;
            u.iter().zip(&mu).map(|(a, b)| a + b).collect()
        } else {
            u.clone()
        };
        let costs: Vec<f64> = (0..n).map(|i| self.costs.cost(i, &x)).collect();
        let profits = costs.iter().map(|j| -j).collect();
        Ok(Sample {
            t,
            u,
            delta,
            x,
            costs,
            profits,
        })
    }
}

/// Step size used by [`simulate`] for the full model, `2 pi / (w_max S)`.
pub fn full_model_step(tuning: &NesTuning, oversampling: usize) -> f64 {
    2.0 * PI / (tuning.max_frequency() * oversampling as f64)
}

/// Fixed-step RK4 integration of `kind` from `initial`, sampled every
/// `config.stride`. The step divides the stride exactly.
pub fn simulate(
    kind: ModelKind,
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    tuning: &NesTuning,
    initial: &SimState,
    config: &SimConfig,
) -> Result<Trajectory, Error> {
    let mut system = NesSystem::new(game, topology, tuning)?;
    system.freeze_delta = config.freeze_delta;
    run(kind, &mut system, initial, config)
}

/// As [`simulate`], with the full model measuring `costs`.
pub fn simulate_with_costs(
    kind: ModelKind,
    game: &QuadraticGame,
    costs: &dyn CostModel,
    topology: &DeceptionTopology,
    tuning: &NesTuning,
    initial: &SimState,
    config: &SimConfig,
) -> Result<Trajectory, Error> {
    let mut system = NesSystem::with_costs(game, costs, topology, tuning)?;
    system.freeze_delta = config.freeze_delta;
    run(kind, &mut system, initial, config)
}

fn positive(name: &'static str, v: f64) -> Result<(), Error> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            index: None,
            value: v,
            requirement: "positive and finite",
        })
    }
}

fn run(
    kind: ModelKind,
    system: &mut NesSystem<'_>,
    initial: &SimState,
    config: &SimConfig,
) -> Result<Trajectory, Error> {
    let n = system.players();
    positive("horizon", config.horizon)?;
    positive("stride", config.stride)?;
    positive("smooth step", config.smooth_dt)?;
    if config.stride > config.horizon {
        return Err(Error::InvalidParameter {
            name: "stride",
            index: None,
            value: config.stride,
            requirement: "no longer than the horizon",
        });
    }
    if kind == ModelKind::Full && config.oversampling < 16 {
        return Err(Error::InvalidParameter {
            name: "oversampling",
            index: None,
            value: config.oversampling as f64,
            requirement: "at least 16",
        });
    }
    if initial.u.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial actions",
            expected: n,
            found: initial.u.len(),
        });
    }
    system.topology.check_delta(&initial.delta)?;

    let mut state: Vec<f64> = match kind {
        ModelKind::Full | ModelKind::Averaged => {
            initial.u.iter().chain(&initial.delta).copied().collect()
        }
        ModelKind::Reduced => initial.delta.clone(),
        ModelKind::Boundary => {
            let h = system.freeze_boundary(&initial.delta)?;
            initial.u.iter().zip(&h).map(|(u, h)| u - h).collect()
        }
    };

    let nominal = match kind {
        ModelKind::Full => full_model_step(system.tuning, config.oversampling),
        _ => config.smooth_dt,
    };
    let per_sample = libm::ceil(config.stride / nominal).max(1.0) as usize;
    let dt = config.stride / per_sample as f64;
    let samples_total = libm::round(config.horizon / config.stride) as usize;
    let steps_total = samples_total * per_sample;

    let period = system.tuning.period()?;
    let window_steps = (libm::round(period / dt) as usize).clamp(1, steps_total.max(1));
    let window_start = steps_total - window_steps;

    let t0 = initial.t;
    let mut samples = Vec::with_capacity(samples_total + 1);
    samples.push(system.observe(kind, t0, &state, &initial.delta)?);

    let mut acc = Accumulator::new(n, initial.delta.len());
    if window_start == 0 {
        acc.add(samples.last().unwrap(), 0.5);
    }

    let mut rk = Rk4::new(state.len());
    let mut sines = vec![0.0; n];
    let mut xbuf = vec![0.0; n];
    for step in 0..steps_total {
        let t = t0 + step as f64 * dt;
        match kind {
            ModelKind::Full => rk.step::<_, Error>(
                |t, y, dy| {
                    system.full_rhs(t, y, dy, &mut sines, &mut xbuf);
                    Ok(())
                },
                t,
                &mut state,
                dt,
            )?,
            _ => rk.step(|t, y, dy| system.rhs(kind, t, y, dy), t, &mut state, dt)?,
        }
        let t_next = t0 + (step + 1) as f64 * dt;
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: t_next });
        }
        let done = step + 1;
        let record = done % per_sample == 0;
        let in_window = done >= window_start;
        if record || in_window {
            let obs = system.observe(kind, t_next, &state, &initial.delta)?;
            if in_window {
                let w = if done == window_start || done == steps_total { 0.5 } else { 1.0 };
                acc.add(&obs, w);
            }
            if record {
                samples.push(obs);
            }
        }
    }

    let t_end = t0 + steps_total as f64 * dt;
    let steady_state = acc.finish((t0 + window_start as f64 * dt, t_end));
    Ok(Trajectory {
        kind,
        dt,
        stride: config.stride,
        deceivers: system.topology.deceivers().iter().map(|d| d.player).collect(),
        samples,
        steady_state,
    })
}

struct Accumulator {
    weight: f64,
    u: Vec<f64>,
    delta: Vec<f64>,
    x: Vec<f64>,
    costs: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize, m: usize) -> Self {
        Self {
            weight: 0.0,
            u: vec![0.0; n],
            delta: vec![0.0; m],
            x: vec![0.0; n],
            costs: vec![0.0; n],
        }
    }

    fn add(&mut self, s: &Sample, w: f64) {
        self.weight += w;
        for (dst, src) in [
            (&mut self.u, &s.u),
            (&mut self.delta, &s.delta),
            (&mut self.x, &s.x),
            (&mut self.costs, &s.costs),
        ] {
            dst.iter_mut().zip(src).for_each(|(d, v)| *d += w * v);
        }
    }

    fn finish(mut self, window: (f64, f64)) -> SteadyState {
        let w = self.weight;
        for v in [&mut self.u, &mut self.delta, &mut self.x, &mut self.costs] {
            v.iter_mut().for_each(|d| *d /= w);
        }
        let profits = self.costs.iter().map(|j| -j).collect();
        SteadyState {
            window,
            u: self.u,
            delta: self.delta,
            x: self.x,
            costs: self.costs,
            profits,
        }
    }
}
