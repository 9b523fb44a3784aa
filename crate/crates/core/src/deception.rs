//! Deceptive dithering: which players deceive whom, how that perturbs the
//! pseudogradient the victims learn, and whether a deceiver's payoff target
//! can be reached while the learning dynamics stay stable.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::numerics::{self, DenseMatrix, NumericsError};
use crate::oligopoly::QuadraticGame;

/// Condition number of the perturbed pseudogradient above which sensitivity
/// estimates are flagged.
pub const ILL_CONDITIONED: f64 = 1e8;

/// One deceptive player.
#[derive(Debug, Clone, PartialEq)]
pub struct Deceiver {
    /// Player index (0-based).
    pub player: usize,
    /// Players whose dither this deceiver injects into its own action.
    pub victims: Vec<usize>,
    /// Per-deceiver adaptation gain `eps_i > 0`.
    pub gain: f64,
    /// Reference cost the deceiver steers towards (costs are minimized).
    pub j_ref: f64,
}

/// Deceivers, their victim sets and the derived attacker sets.
///
/// Deceivers keep their given order; that order is the layout of every
/// deceptive-gain vector `delta` in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct DeceptionTopology {
    players: usize,
    eps: f64,
    deceivers: Vec<Deceiver>,
    // attackers[j]: slots (positions in `deceivers`) of players deceiving j
    attackers: Vec<Vec<usize>>,
    slot_of: Vec<Option<usize>>,
}

impl DeceptionTopology {
    /// A game without deception.
    pub fn empty(players: usize) -> Self {
        Self {
            players,
            eps: 0.0,
            deceivers: Vec::new(),
            attackers: vec![Vec::new(); players],
            slot_of: vec![None; players],
        }
    }

    pub fn new(players: usize, eps: f64, deceivers: Vec<Deceiver>) -> Result<Self, Error> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                index: None,
                value: eps,
                requirement: "positive and finite",
            });
        }
        let mut slot_of = vec![None; players];
        let mut attackers = vec![Vec::new(); players];
        for (slot, d) in deceivers.iter().enumerate() {
            if d.player >= players {
                return Err(Error::PlayerOutOfRange {
                    player: d.player,
                    players,
                });
            }
            if slot_of[d.player].is_some() {
                return Err(Error::DuplicatePlayer { player: d.player });
            }
            slot_of[d.player] = Some(slot);
            if d.victims.is_empty() {
                return Err(Error::EmptyVictimSet { player: d.player });
            }
            if !(d.gain.is_finite() && d.gain > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "deceiver gain",
                    index: Some(d.player),
                    value: d.gain,
                    requirement: "positive and finite",
                });
            }
            if !d.j_ref.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "reference cost",
                    index: Some(d.player),
                    value: d.j_ref,
                    requirement: "finite",
                });
            }
            for (pos, &v) in d.victims.iter().enumerate() {
                if v >= players {
                    return Err(Error::PlayerOutOfRange { player: v, players });
                }
                if v == d.player {
                    return Err(Error::SelfDeception { player: v });
                }
                if d.victims[..pos].contains(&v) {
                    return Err(Error::DuplicatePlayer { player: v });
                }
                attackers[v].push(slot);
            }
        }
        Ok(Self {
            players,
            eps,
            deceivers,
            attackers,
            slot_of,
        })
    }

    pub fn players(&self) -> usize {
        self.players
    }

    /// Number of deceivers `n`.
    pub fn len(&self) -> usize {
        self.deceivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deceivers.is_empty()
    }

    /// Global slow-adaptation gain `eps`.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn deceivers(&self) -> &[Deceiver] {
        &self.deceivers
    }

    /// Slots of the deceivers attacking player `j`.
    pub fn attackers(&self, j: usize) -> &[usize] {
        &self.attackers[j]
    }

    /// Slot of `player` in the gain vector, if it deceives.
    pub fn slot_of(&self, player: usize) -> Option<usize> {
        self.slot_of[player]
    }

    pub fn references(&self) -> Vec<f64> {
        self.deceivers.iter().map(|d| d.j_ref).collect()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.deceivers.iter().map(|d| d.gain).collect()
    }

    /// Victim sets rebuilt from the attacker sets; equals the declared
    /// victim sets up to ordering.
    pub fn victims_from_attackers(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (j, slots) in self.attackers.iter().enumerate() {
            for &s in slots {
                out[s].push(j);
            }
        }
        out
    }

    pub(crate) fn check_delta(&self, delta: &[f64]) -> Result<(), Error> {
        if delta.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "deceptive gain vector",
                expected: self.len(),
                found: delta.len(),
            });
        }
        Ok(())
    }
}

/// `Qbar(delta)` and `Bbar(delta)`: the pseudogradient the victims'
/// seeking dynamics effectively descend.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedPseudogradient {
    pub qbar: DenseMatrix,
    pub bbar: Vec<f64>,
    pub delta: Vec<f64>,
}

impl PerturbedPseudogradient {
    /// `Qbar x + Bbar`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.qbar
            .mul_vec(x)
            .into_iter()
            .zip(&self.bbar)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// `-K Qbar` for a diagonal gain vector `K`.
    pub fn closed_loop(&self, gains: &[f64]) -> DenseMatrix {
        self.qbar.scale_rows(gains).scaled(-1.0)
    }

    /// Spectral abscissa of `-K Qbar`.
    pub fn stability_abscissa(&self, gains: &[f64]) -> Result<f64, Error> {
        check_gains(gains, self.bbar.len())?;
        Ok(numerics::spectral_abscissa(&self.closed_loop(gains))?)
    }
}

fn check_gains(gains: &[f64], n: usize) -> Result<(), Error> {
    if gains.len() != n {
        return Err(Error::DimensionMismatch {
            what: "adaptation gains",
            expected: n,
            found: gains.len(),
        });
    }
    for (i, &k) in gains.iter().enumerate() {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParameter {
                name: "adaptation gain",
                index: Some(i),
                value: k,
                requirement: "positive and finite",
            });
        }
    }
    Ok(())
}

/// Builds `Qbar(delta)`, `Bbar(delta)`.
///
/// Row `i` of `Qbar` is row `i` of `Q` plus `delta_k` times row `k` of
/// `Q_i` for every deceiver `k` attacking `i`; `Bbar_i` gains
/// `delta_k [b_i]_k` likewise.
pub fn perturbed_pseudogradient(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    delta: &[f64],
) -> Result<PerturbedPseudogradient, Error> {
    topology.check_delta(delta)?;
    let n = game.players();
    if topology.players() != n {
        return Err(Error::DimensionMismatch {
            what: "topology player count",
            expected: n,
            found: topology.players(),
        });
    }
    let mut qbar = game.pseudogradient_matrix().clone();
    let mut bbar = game.pseudogradient_offset().to_vec();
    for i in 0..n {
        let qi = game.q(i);
        let bi = game.b(i);
        for &slot in topology.attackers(i) {
            let k = topology.deceivers()[slot].player;
            let d = delta[slot];
            let qrow = qi.row(k).to_vec();
            for (dst, src) in qbar.row_mut(i).iter_mut().zip(qrow) {
                *dst += d * src;
            }
            bbar[i] += d * bi[k];
        }
    }
    Ok(PerturbedPseudogradient {
        qbar,
        bbar,
        delta: delta.to_vec(),
    })
}

/// Whether `delta` lies in the stability-preserving set, i.e. `-K Qbar`
/// is Hurwitz with margin `1e-8 (1 + ||K Qbar||_inf)`.
pub fn in_stability_set(pert: &PerturbedPseudogradient, gains: &[f64]) -> Result<bool, Error> {
    check_gains(gains, pert.bbar.len())?;
    Ok(numerics::is_hurwitz(&pert.closed_loop(gains))?)
}

/// Quasi-steady state `h(delta) = -Qbar(delta)^-1 Bbar(delta)`.
///
/// Needs only invertibility of `Qbar`; membership in the stability set is
/// a separate question.
pub fn deceptive_equilibrium(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    delta: &[f64],
) -> Result<Vec<f64>, Error> {
    let pert = perturbed_pseudogradient(game, topology, delta)?;
    equilibrium_of(&pert)
}

pub(crate) fn equilibrium_of(pert: &PerturbedPseudogradient) -> Result<Vec<f64>, Error> {
    let rhs: Vec<f64> = pert.bbar.iter().map(|v| -v).collect();
    numerics::solve_linear(&pert.qbar, &rhs).map_err(|e| match e {
        NumericsError::Singular { .. } => Error::SingularPerturbation {
            delta: pert.delta.clone(),
        },
        other => Error::Numerics(other),
    })
}

/// Deceivers' costs at the quasi-steady state, `J*(h(delta))`.
pub fn deceiver_costs_at(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    delta: &[f64],
) -> Result<Vec<f64>, Error> {
    let h = deceptive_equilibrium(game, topology, delta)?;
    Ok(topology
        .deceivers()
        .iter()
        .map(|d| game.params().cost_of(d.player, &h))
        .collect())
}

/// `xi_k(delta) = eps_{z_k} J_{z_k}(h(delta))`, or `None` where `Qbar` is
/// singular.
fn xi(game: &QuadraticGame, topology: &DeceptionTopology, delta: &[f64]) -> Option<Vec<f64>> {
    let costs = deceiver_costs_at(game, topology, delta).ok()?;
    Some(
        costs
            .iter()
            .zip(topology.deceivers())
            .map(|(j, d)| d.gain * j)
            .collect(),
    )
}

/// `diag(eps_z) (J*(h(delta)) - J_ref)`.
fn xi_residual(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    j_ref: &[f64],
    delta: &[f64],
) -> Option<Vec<f64>> {
    let costs = deceiver_costs_at(game, topology, delta).ok()?;
    Some(
        costs
            .iter()
            .zip(j_ref)
            .zip(topology.deceivers())
            .map(|((j, r), d)| d.gain * (j - r))
            .collect(),
    )
}

/// Sensitivity matrix `[Lambda]_jk = d xi_k / d delta_j` with the
/// conditioning of `Qbar` at the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMatrix {
    pub matrix: DenseMatrix,
    /// Infinity-norm condition number of `Qbar(delta)`.
    pub condition: f64,
}

impl LambdaMatrix {
    pub fn ill_conditioned(&self) -> bool {
        !(self.condition < ILL_CONDITIONED)
    }

    pub fn is_hurwitz(&self) -> Result<bool, Error> {
        if self.matrix.rows() == 0 {
            return Ok(true);
        }
        Ok(numerics::is_hurwitz(&self.matrix)?)
    }
}

/// Central-difference estimate of `Lambda(delta)` with steps
/// `1e-5 (1 + |delta_j|)`.
pub fn lambda_matrix(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    delta: &[f64],
) -> Result<LambdaMatrix, Error> {
    let pert = perturbed_pseudogradient(game, topology, delta)?;
    let condition = numerics::condition_inf(&pert.qbar).map_err(|_| Error::SingularPerturbation {
        delta: delta.to_vec(),
    })?;
    if topology.is_empty() {
        return Ok(LambdaMatrix {
            matrix: DenseMatrix::zeros(0, 0),
            condition,
        });
    }
    let steps: Vec<f64> = delta.iter().map(|d| 1e-5 * (1.0 + d.abs())).collect();
    let matrix = numerics::fd_jacobian_with_steps(|d| xi(game, topology, d), delta, &steps)
        .ok_or_else(|| Error::SingularPerturbation {
            delta: delta.to_vec(),
        })?;
    Ok(LambdaMatrix { matrix, condition })
}

/// Search settings for [`solve_attainability`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Scalar searches cover `[-delta_max, delta_max]`.
    pub delta_max: f64,
    /// Number of grid intervals for the scalar scan.
    pub grid_intervals: usize,
    /// Iteration cap for the multi-deceiver Newton solve.
    pub max_newton_iter: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            delta_max: 10.0,
            grid_intervals: 400,
            max_newton_iter: 200,
        }
    }
}

/// Why a reference was declared not attainable.
#[derive(Debug, Clone, PartialEq)]
pub enum AttainabilityFailure {
    /// The scalar scan found no sign change of `xi` on the grid.
    NoSignChange,
    /// Every root found fails the sensitivity or stability condition.
    RootsRejected { roots: usize },
    /// Damped Newton diverged or stalled.
    NewtonFailed { iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttainabilityResult {
    /// The accepted root, or the closest approach when none is accepted.
    pub delta_star: Vec<f64>,
    /// `h(delta_star)`; empty if `Qbar` is singular there.
    pub u_star: Vec<f64>,
    pub lambda: LambdaMatrix,
    /// `diag(eps_z) (J*(u_star) - J_ref)`.
    pub residual: Vec<f64>,
    pub attainable: bool,
    pub in_delta: bool,
    /// Whether `Lambda(delta_star)` is Hurwitz.
    pub lambda_hurwitz: bool,
    pub failure: Option<AttainabilityFailure>,
}

/// Searches for `delta*` with `J*(h(delta*)) = J_ref`, `Lambda(delta*)`
/// Hurwitz and `delta*` in the stability set for adaptation gains `gains`.
///
/// One deceiver: grid scan for sign changes, then bisection; among the
/// roots the smallest `|delta*|` passing both conditions wins. Several
/// deceivers: damped Newton from `delta = 0`.
pub fn solve_attainability(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    j_ref: &[f64],
    gains: &[f64],
    config: &SearchConfig,
) -> Result<AttainabilityResult, Error> {
    let n = topology.len();
    if j_ref.len() != n {
        return Err(Error::DimensionMismatch {
            what: "reference costs",
            expected: n,
            found: j_ref.len(),
        });
    }
    check_gains(gains, game.players())?;
    if !(config.delta_max.is_finite() && config.delta_max > 0.0) || config.grid_intervals == 0 {
        return Err(Error::InvalidParameter {
            name: "delta_max",
            index: None,
            value: config.delta_max,
            requirement: "positive with a nonempty grid",
        });
    }
    let tol = root_tolerance(topology, j_ref);
    match n {
        0 => evaluate_candidate(game, topology, j_ref, gains, Vec::new(), None),
        1 => scalar_search(game, topology, j_ref, gains, config, tol),
        _ => {
            let f = |d: &[f64]| xi_residual(game, topology, j_ref, d);
            match numerics::newton_system(f, &vec![0.0; n], tol, config.max_newton_iter) {
                Ok(sol) => {
                    let mut r = evaluate_candidate(game, topology, j_ref, gains, sol.root, None)?;
                    if !r.attainable {
                        r.failure = Some(AttainabilityFailure::RootsRejected { roots: 1 });
                    }
                    Ok(r)
                }
                Err(NumericsError::NewtonFailed {
                    last, iterations, ..
                }) => evaluate_candidate(
                    game,
                    topology,
                    j_ref,
                    gains,
                    last,
                    Some(AttainabilityFailure::NewtonFailed { iterations }),
                ),
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn root_tolerance(topology: &DeceptionTopology, j_ref: &[f64]) -> f64 {
    let eps_max = topology
        .deceivers()
        .iter()
        .map(|d| d.gain)
        .fold(0.0, f64::max);
    1e-8 * (1.0 + numerics::norm_inf(j_ref)) * eps_max
}

fn scalar_search(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    j_ref: &[f64],
    gains: &[f64],
    config: &SearchConfig,
    tol: f64,
) -> Result<AttainabilityResult, Error> {
    let f = |d: f64| xi_residual(game, topology, j_ref, &[d]).map(|v| v[0]);
    let m = config.grid_intervals;
    let grid: Vec<(f64, Option<f64>)> = (0..=m)
        .map(|g| {
            let d = config.delta_max * (2.0 * g as f64 / m as f64 - 1.0);
            (d, f(d).filter(|v| v.is_finite()))
        })
        .collect();

    let mut roots: Vec<f64> = Vec::new();
    for w in grid.windows(2) {
        let ((da, fa), (db, fb)) = (w[0], w[1]);
        let (Some(fa), Some(fb)) = (fa, fb) else {
            continue;
        };
        if fa == 0.0 {
            roots.push(da);
        } else if fa * fb < 0.0 {
            let root = numerics::find_root_scalar(|d| f(d).unwrap_or(f64::NAN), da, db, tol);
            if let Ok(r) = root {
                roots.push(r);
            }
        }
    }
    if let Some(&(d, Some(v))) = grid.last() {
        if v == 0.0 {
            roots.push(d);
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    roots.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    for &r in &roots {
        let res = evaluate_candidate(game, topology, j_ref, gains, vec![r], None)?;
        if res.attainable {
            return Ok(res);
        }
    }
    if let Some(&first) = roots.first() {
        return evaluate_candidate(
            game,
            topology,
            j_ref,
            gains,
            vec![first],
            Some(AttainabilityFailure::RootsRejected { roots: roots.len() }),
        );
    }
    let closest = grid
        .iter()
        .filter_map(|&(d, v)| v.map(|v| (d, v.abs())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0.0, |(d, _)| d);
    evaluate_candidate(
        game,
        topology,
        j_ref,
        gains,
        vec![closest],
        Some(AttainabilityFailure::NoSignChange),
    )
}

fn evaluate_candidate(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    j_ref: &[f64],
    gains: &[f64],
    delta: Vec<f64>,
    failure: Option<AttainabilityFailure>,
) -> Result<AttainabilityResult, Error> {
    let pert = perturbed_pseudogradient(game, topology, &delta)?;
    let in_delta = in_stability_set(&pert, gains)?;
    let u_star = equilibrium_of(&pert).unwrap_or_default();
    let residual = if u_star.is_empty() {
        vec![f64::NAN; delta.len()]
    } else {
        topology
            .deceivers()
            .iter()
            .zip(j_ref)
            .map(|(d, r)| d.gain * (game.params().cost_of(d.player, &u_star) - r))
            .collect()
    };
    let lambda = lambda_matrix(game, topology, &delta).unwrap_or(LambdaMatrix {
        matrix: DenseMatrix::zeros(delta.len(), delta.len()),
        condition: f64::INFINITY,
    });
    let lambda_hurwitz = !u_star.is_empty() && lambda.is_hurwitz().unwrap_or(false);
    let tol = root_tolerance(topology, j_ref);
    let matched = residual.iter().all(|r| r.abs() <= tol.max(f64::MIN_POSITIVE));
    let attainable = failure.is_none() && matched && lambda_hurwitz && in_delta;
    let failure = match (attainable, failure) {
        (true, _) => None,
        (false, Some(f)) => Some(f),
        (false, None) => Some(AttainabilityFailure::RootsRejected { roots: 1 }),
    };
    Ok(AttainabilityResult {
        delta_star: delta,
        u_star,
        lambda,
        residual,
        attainable,
        in_delta,
        lambda_hurwitz,
        failure,
    })
}
