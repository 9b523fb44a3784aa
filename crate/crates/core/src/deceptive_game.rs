//! The game the victims effectively play under deceptive dithering.
//!
//! With `sigma_i` chosen to close the square, victim `i`'s deceptive cost is
//! an inflated-sales cost `-(s_i(x) + (x_i - m_i) gamma_i)(x_i - m_i)`.

use alloc::vec::Vec;

use crate::deception::{self, DeceptionTopology, PerturbedPseudogradient};
use crate::dynamics::CostModel;
use crate::error::Error;
use crate::numerics;
use crate::oligopoly::QuadraticGame;

/// Deceptive game `{J~_i}` at a fixed gain vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DeceptiveGame {
    base: QuadraticGame,
    topology: DeceptionTopology,
    delta: Vec<f64>,
    sigma: Vec<f64>,
    gamma: Vec<f64>,
    pert: PerturbedPseudogradient,
}

/// `sum_{k in K_i} delta_k / R_k` for every player `i`.
fn attack_weights(game: &QuadraticGame, topology: &DeceptionTopology, delta: &[f64]) -> Vec<f64> {
    let r = game.params().resistances();
    (0..game.players())
        .map(|i| {
            topology
                .attackers(i)
                .iter()
                .map(|&slot| delta[slot] / r[topology.deceivers()[slot].player])
                .fold(0.0, |acc, v| acc + v)
        })
        .collect()
}

pub fn build_deceptive_game(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    delta: &[f64],
) -> Result<DeceptiveGame, Error> {
    DeceptiveGame::new(game, topology, delta)
}

impl DeceptiveGame {
    /// Every deceptive gain must be nonzero; at zero the object is just the
    /// base game.
    pub fn new(game: &QuadraticGame, topology: &DeceptionTopology, delta: &[f64]) -> Result<Self, Error> {
        let pert = deception::perturbed_pseudogradient(game, topology, delta)?;
        if topology.is_empty() {
            return Err(Error::NoDeceivers);
        }
        if let Some(slot) = delta.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDeceptiveGain {
                deceiver: topology.deceivers()[slot].player,
            });
        }
        let params = game.params();
        let r = params.resistances();
        let m = params.marginal_costs();
        let r_par = params.aggregates().r_par;
        let weights = attack_weights(game, topology, delta);
        let gamma: Vec<f64> = weights
            .iter()
            .zip(r)
            .map(|(w, ri)| r_par / (2.0 * ri) * w)
            .collect();
        let sigma = gamma.iter().zip(m).map(|(g, mi)| 0.0 - g * mi * mi).collect();
        Ok(Self {
            base: game.clone(),
            topology: topology.clone(),
            delta: delta.to_vec(),
            sigma,
            gamma,
            pert,
        })
    }

    pub fn base(&self) -> &QuadraticGame {
        &self.base
    }

    pub fn topology(&self) -> &DeceptionTopology {
        &self.topology
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Constant offsets `sigma_i`; zero for players nobody deceives.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Sales inflation coefficients `gamma_i`.
    pub fn inflation(&self) -> &[f64] {
        &self.gamma
    }

    /// The pseudogradient of the deceptive game, `Qbar x + Bbar`.
    pub fn pseudogradient(&self) -> &PerturbedPseudogradient {
        &self.pert
    }

    fn check_x(&self, x: &[f64]) -> Result<(), Error> {
        let n = self.base.players();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                what: "action profile",
                expected: n,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `J~_i(x)`.
    pub fn deceptive_cost(&self, x: &[f64], i: usize) -> Result<f64, Error> {
        self.check_x(x)?;
        self.check_player(i)?;
        Ok(self.cost_unchecked(i, x))
    }

    fn check_player(&self, i: usize) -> Result<(), Error> {
        let n = self.base.players();
        if i >= n {
            return Err(Error::PlayerOutOfRange { player: i, players: n });
        }
        Ok(())
    }

    fn cost_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let params = self.base.params();
        let margin = x[i] - params.marginal_costs()[i];
        -(params.sales_of(i, x) + margin * self.gamma[i]) * margin
    }

    /// `dJ~_i / dx_i` at `x`.
    pub fn own_gradient(&self, x: &[f64], i: usize) -> Result<f64, Error> {
        self.check_x(x)?;
        self.check_player(i)?;
        let params = self.base.params();
        let agg = params.aggregates();
        let margin = x[i] - params.marginal_costs()[i];
        let ds = -agg.r_par / (params.resistances()[i] * agg.r_bar[i]);
        Ok(-(ds + self.gamma[i]) * margin - (params.sales_of(i, x) + margin * self.gamma[i]))
    }

    /// Nash equilibrium of the deceptive game, `-Qbar^-1 Bbar`.
    pub fn nash_equilibrium(&self) -> Result<Vec<f64>, Error> {
        deception::equilibrium_of(&self.pert)
    }
}

impl CostModel for DeceptiveGame {
    fn players(&self) -> usize {
        self.base.players()
    }

    fn cost(&self, i: usize, x: &[f64]) -> f64 {
        self.cost_unchecked(i, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceDirection {
    RaisesPrice,
    LowersPrice,
    Neutral,
}

/// What a victim's seeking dynamics learn about its competitors.
#[derive(Debug, Clone, PartialEq)]
pub struct DesirabilityReport {
    pub victim: usize,
    /// `1 / Rbar_i`.
    pub true_aggregate: f64,
    /// `1 / Rbar_i - sum_{k in K_i} delta_k / R_k`.
    pub perceived_aggregate: f64,
    /// `(deceiver, (1 - delta_k) / R_k)` per attacker.
    pub perceived_per_deceiver: Vec<(usize, f64)>,
    pub direction: PriceDirection,
}

pub fn perceived_desirability(
    game: &QuadraticGame,
    topology: &DeceptionTopology,
    delta: &[f64],
    victim: usize,
) -> Result<DesirabilityReport, Error> {
    topology.check_delta(delta)?;
    let n = game.players();
    if victim >= n {
        return Err(Error::PlayerOutOfRange { player: victim, players: n });
    }
    let attackers = topology.attackers(victim);
    if attackers.is_empty() {
        return Err(Error::NotAVictim { player: victim });
    }
    let params = game.params();
    let r = params.resistances();
    let true_aggregate = 1.0 / params.aggregates().r_bar[victim];
    let weight = attack_weights(game, topology, delta)[victim];
    let perceived_per_deceiver = attackers
        .iter()
        .map(|&slot| {
            let k = topology.deceivers()[slot].player;
            (k, (1.0 - delta[slot]) / r[k])
        })
        .collect();
    let direction = if weight > 0.0 {
        PriceDirection::RaisesPrice
    } else if weight < 0.0 {
        PriceDirection::LowersPrice
    } else {
        PriceDirection::Neutral
    };
    Ok(DesirabilityReport {
        victim,
        true_aggregate,
        perceived_aggregate: true_aggregate - weight,
        perceived_per_deceiver,
        direction,
    })
}

/// Relative tolerance on the first-order condition.
pub const NASH_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NashVerdict {
    pub is_ne: bool,
    /// `||Qbar u + Bbar||_inf / (||Qbar||_inf ||u||_inf + ||Bbar||_inf)`.
    pub first_order_residual: f64,
    /// `[Qbar]_ii`; all must be positive.
    pub second_order_margins: Vec<f64>,
}

/// Checks the first- and second-order Nash conditions of the (quadratic)
/// deceptive game at `u`. A wrong-length `u` yields a failing verdict.
pub fn verify_deceptive_nash(dgame: &DeceptiveGame, u: &[f64]) -> NashVerdict {
    let q = &dgame.pert.qbar;
    let second_order_margins: Vec<f64> = (0..q.rows()).map(|i| q[(i, i)]).collect();
    if u.len() != q.cols() {
        return NashVerdict {
            is_ne: false,
            first_order_residual: f64::INFINITY,
            second_order_margins,
        };
    }
    let grad = dgame.pert.apply(u);
    let scale = q.norm_inf() * numerics::norm_inf(u) + numerics::norm_inf(&dgame.pert.bbar);
    let first_order_residual = numerics::norm_inf(&grad) / scale.max(f64::MIN_POSITIVE);
    let is_ne = first_order_residual <= NASH_TOLERANCE
        && second_order_margins.iter().all(|&d| d > 0.0);
    NashVerdict {
        is_ne,
        first_order_residual,
        second_order_margins,
    }
}
