use alloc::vec::Vec;
use core::fmt;

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Games need at least two players.
    TooFewPlayers { players: usize },
    /// A scalar parameter is outside its admissible range.
    InvalidParameter {
        name: &'static str,
        index: Option<usize>,
        value: f64,
        requirement: &'static str,
    },
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// The deception-free pseudogradient matrix is singular.
    DegenerateGame,
    /// The perturbed pseudogradient matrix is singular at this gain vector.
    SingularPerturbation { delta: Vec<f64> },
    /// A player index in a deception topology does not exist.
    PlayerOutOfRange { player: usize, players: usize },
    /// A deceiver lists itself among its victims.
    SelfDeception { player: usize },
    /// A deceiver has no victims.
    EmptyVictimSet { player: usize },
    /// A player appears twice where a set is expected.
    DuplicatePlayer { player: usize },
    /// Two players share a dither frequency.
    DuplicateFrequency { first: usize, second: usize },
    /// A deceptive game needs at least one deceiver.
    NoDeceivers,
    /// A deceptive game needs every deceptive gain to be nonzero.
    ZeroDeceptiveGain { deceiver: usize },
    /// The requested victim is not attacked by anyone.
    NotAVictim { player: usize },
    /// The simulated state became non-finite.
    Diverged { t: f64 },
    /// Exact rational arithmetic overflowed.
    RationalOverflow,
    Numerics(NumericsError),
}

impl From<NumericsError> for Error {
    fn from(e: NumericsError) -> Self {
        Self::Numerics(e)
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewPlayers { players } => {
                write!(f, "a game needs at least 2 players, got {players}")
            }
            Self::InvalidParameter {
                name,
                index,
                value,
                requirement,
            } => match index {
                Some(i) => write!(f, "{name}[{i}] = {value} must be {requirement}"),
                None => write!(f, "{name} = {value} must be {requirement}"),
            },
            Self::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected length {expected}, found {found}"),
            Self::DegenerateGame => {
                write!(f, "pseudogradient matrix is singular; Nash equilibrium is not unique")
            }
            Self::SingularPerturbation { delta } => {
                write!(f, "perturbed pseudogradient is singular at delta = {delta:?}")
            }
            Self::PlayerOutOfRange { player, players } => {
                write!(f, "player {player} does not exist in a {players}-player game")
            }
            Self::SelfDeception { player } => {
                write!(f, "player {player} cannot deceive itself")
            }
            Self::EmptyVictimSet { player } => write!(f, "deceiver {player} has no victims"),
            Self::DuplicatePlayer { player } => write!(f, "player {player} listed twice"),
            Self::DuplicateFrequency { first, second } => write!(
                f,
                "players {first} and {second} share a dither frequency ratio"
            ),
            Self::NoDeceivers => write!(f, "no player deceives anyone"),
            Self::ZeroDeceptiveGain { deceiver } => {
                write!(f, "deceptive gain of player {deceiver} is zero")
            }
            Self::NotAVictim { player } => write!(f, "player {player} is not deceived by anyone"),
            Self::Diverged { t } => write!(f, "simulation diverged at t = {t}"),
            Self::RationalOverflow => write!(f, "rational frequency arithmetic overflowed"),
            Self::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Self::Numerics(e) => Some(e),
            _ => None,
        }
    }
}
