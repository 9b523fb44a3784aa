//! Price-setting oligopoly with resistive (parallel-circuit) demand.
//!
//! Firm `i` sets price `x_i`; its sales are
//! `s_i = (R_par / R_i) (S_d - x_i / R_bar_i + sum_{j != i} x_j / R_j)`
//! and its cost (negative profit) is `J_i = -s_i (x_i - m_i)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::numerics::{self, DenseMatrix};

/// Harmonic aggregates of the resistances.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    /// `1 / R_par = sum_k 1 / R_k`.
    pub r_par: f64,
    /// `1 / R_bar_i = sum_{k != i} 1 / R_k`.
    pub r_bar: Vec<f64>,
}

/// Computes `R_par` and the leave-one-out `R_bar_i`.
pub fn derive_aggregates(resistances: &[f64]) -> Result<Aggregates, Error> {
    let n = resistances.len();
    if n < 2 {
        return Err(Error::TooFewPlayers { players: n });
    }
    let inv: Vec<f64> = resistances.iter().map(|r| 1.0 / r).collect();
    let total: f64 = inv.iter().sum();
    // Leave-one-out sums are formed directly rather than as `total - inv[i]`
    // so that a dominant term cannot cancel the remainder.
    let r_bar = (0..n)
        .map(|i| {
            let rest: f64 = inv
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, v)| v)
                .sum();
            1.0 / rest
        })
        .collect();
    Ok(Aggregates {
        r_par: 1.0 / total,
        r_bar,
    })
}

/// Market primitives, validated on construction. Aggregates are computed
/// once here and never recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct OligopolyParams {
    resistances: Vec<f64>,
    marginal_costs: Vec<f64>,
    total_demand: f64,
    aggregates: Aggregates,
}

impl OligopolyParams {
    pub fn new(
        resistances: Vec<f64>,
        marginal_costs: Vec<f64>,
        total_demand: f64,
    ) -> Result<Self, Error> {
        let n = resistances.len();
        if n < 2 {
            return Err(Error::TooFewPlayers { players: n });
        }
        if marginal_costs.len() != n {
            return Err(Error::DimensionMismatch {
                what: "marginal costs",
                expected: n,
                found: marginal_costs.len(),
            });
        }
        for (i, &r) in resistances.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "resistance",
                    index: Some(i),
                    value: r,
                    requirement: "positive and finite",
                });
            }
        }
        for (i, &m) in marginal_costs.iter().enumerate() {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "marginal cost",
                    index: Some(i),
                    value: m,
                    requirement: "nonnegative and finite",
                });
            }
        }
        if !(total_demand.is_finite() && total_demand > 0.0) {
            return Err(Error::InvalidParameter {
                name: "total demand",
                index: None,
                value: total_demand,
                requirement: "positive and finite",
            });
        }
        let aggregates = derive_aggregates(&resistances)?;
        Ok(Self {
            resistances,
            marginal_costs,
            total_demand,
            aggregates,
        })
    }

    pub fn players(&self) -> usize {
        self.resistances.len()
    }

    pub fn resistances(&self) -> &[f64] {
        &self.resistances
    }

    pub fn marginal_costs(&self) -> &[f64] {
        &self.marginal_costs
    }

    pub fn total_demand(&self) -> f64 {
        self.total_demand
    }

    pub fn aggregates(&self) -> &Aggregates {
        &self.aggregates
    }

    fn check_len(&self, x: &[f64]) -> Result<(), Error> {
        if x.len() != self.players() {
            return Err(Error::DimensionMismatch {
                what: "price vector",
                expected: self.players(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Per-firm sales at prices `x`.
    pub fn sales(&self, x: &[f64]) -> Result<Vec<f64>, Error> {
        self.check_len(x)?;
        Ok((0..self.players()).map(|i| self.sales_of(i, x)).collect())
    }

    /// Sales of firm `i`; `x` must have one entry per firm.
    pub fn sales_of(&self, i: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.players());
        let r = &self.resistances;
        let agg = &self.aggregates;
        let others: f64 = x
            .iter()
            .zip(r)
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, (xj, rj))| xj / rj)
            .sum();
        agg.r_par / r[i] * (self.total_demand - x[i] / agg.r_bar[i] + others)
    }

    /// Cost `J_i(x) = -s_i(x) (x_i - m_i)`.
    pub fn cost_of(&self, i: usize, x: &[f64]) -> f64 {
        -self.sales_of(i, x) * (x[i] - self.marginal_costs[i])
    }

    /// All costs `J_i(x)`.
    pub fn costs(&self, x: &[f64]) -> Result<Vec<f64>, Error> {
        self.check_len(x)?;
        Ok((0..self.players()).map(|i| self.cost_of(i, x)).collect())
    }

    /// Profits `P_i = -J_i`.
    pub fn profits(&self, x: &[f64]) -> Result<Vec<f64>, Error> {
        Ok(self.costs(x)?.into_iter().map(|j| -j).collect())
    }
}

/// Quadratic representation `J_i(x) = x^T Q_i x / 2 + b_i^T x + c_i` and
/// the affine pseudogradient `G(x) = Q x + B`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    params: OligopolyParams,
    q: Vec<DenseMatrix>,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    pg_q: DenseMatrix,
    pg_b: Vec<f64>,
}

impl QuadraticGame {
    pub fn new(params: &OligopolyParams) -> Self {
        let n = params.players();
        let r = params.resistances();
        let m = params.marginal_costs();
        let Aggregates { r_par, r_bar } = params.aggregates();
        let r_par = *r_par;

        let mut q = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for i in 0..n {
            let mut qi = DenseMatrix::zeros(n, n);
            qi[(i, i)] = 2.0 * r_par / (r[i] * r_bar[i]);
            for k in (0..n).filter(|&k| k != i) {
                let v = -r_par / (r[i] * r[k]);
                qi[(i, k)] = v;
                qi[(k, i)] = v;
            }
            let mut bi = vec![0.0; n];
            for k in 0..n {
                bi[k] = if k == i {
                    -m[i] * r_par / (r[i] * r_bar[i]) - params.total_demand() * r_par / r[i]
                } else {
                    m[i] * r_par / (r[i] * r[k])
                };
            }
            q.push(qi);
            b.push(bi);
            c.push(r_par * params.total_demand() * m[i] / r[i]);
        }

        let mut pg_q = DenseMatrix::zeros(n, n);
        for (i, qi) in q.iter().enumerate() {
            pg_q.row_mut(i).copy_from_slice(qi.row(i));
        }
        let pg_b = (0..n).map(|i| b[i][i]).collect();

        Self {
            params: params.clone(),
            q,
            b,
            c,
            pg_q,
            pg_b,
        }
    }

    pub fn params(&self) -> &OligopolyParams {
        &self.params
    }

    pub fn players(&self) -> usize {
        self.params.players()
    }

    /// `Q_i`.
    pub fn q(&self, i: usize) -> &DenseMatrix {
        &self.q[i]
    }

    /// `b_i`.
    pub fn b(&self, i: usize) -> &[f64] {
        &self.b[i]
    }

    /// `c_i = R_par S_d m_i / R_i`.
    pub fn c(&self, i: usize) -> f64 {
        self.c[i]
    }

    /// Stacked pseudogradient matrix; row `i` is row `i` of `Q_i`.
    pub fn pseudogradient_matrix(&self) -> &DenseMatrix {
        &self.pg_q
    }

    /// Stacked pseudogradient offset; entry `i` is entry `i` of `b_i`.
    pub fn pseudogradient_offset(&self) -> &[f64] {
        &self.pg_b
    }

    /// `Q x + B`.
    pub fn pseudogradient(&self, x: &[f64]) -> Result<Vec<f64>, Error> {
        self.params.check_len(x)?;
        Ok(self
            .pg_q
            .mul_vec(x)
            .into_iter()
            .zip(&self.pg_b)
            .map(|(a, b)| a + b)
            .collect())
    }

    /// `J_i` evaluated through the quadratic form.
    pub fn quadratic_cost(&self, i: usize, x: &[f64]) -> Result<f64, Error> {
        self.params.check_len(x)?;
        let qx = self.q[i].mul_vec(x);
        Ok(0.5 * numerics::dot(x, &qx) + numerics::dot(&self.b[i], x) + self.c[i])
    }

    /// The unique Nash equilibrium, solving `Q x = -B`.
    ///
    /// Every `[Q_i]_ii` is positive, so the first-order point minimizes
    /// each `J_i` in the firm's own price.
    pub fn nash_equilibrium(&self) -> Result<Vec<f64>, Error> {
        let rhs: Vec<f64> = self.pg_b.iter().map(|v| -v).collect();
        numerics::solve_linear(&self.pg_q, &rhs).map_err(|e| match e {
            numerics::NumericsError::Singular { .. } => Error::DegenerateGame,
            other => Error::Numerics(other),
        })
    }
}

/// Builds the quadratic form of the oligopoly costs.
pub fn build_quadratic_game(params: &OligopolyParams) -> QuadraticGame {
    QuadraticGame::new(params)
}
