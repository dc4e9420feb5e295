use crate::coalition::{Coalition, PlayerId, ENUMERATION_CAP};
use crate::error::{Error, Result};

/// A transferable-utility game given by its characteristic function.
pub trait CoalitionGame: Sync {
    fn num_players(&self) -> usize;

    fn value(&self, c: Coalition) -> Result<f64>;

    /// `v(c ∪ {i}) - v(c)`; `i` must not already be in `c`.
    fn marginal(&self, c: Coalition, i: PlayerId) -> Result<f64> {
        if c.contains(i) {
            return Err(Error::PlayerInCoalition {
                player: i.0,
                coalition: c.mask(),
            });
        }
        Ok(self.value(c.with(i))? - self.value(c)?)
    }
}

/// A game stored as an explicit table of `2^n` values indexed by mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    players: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(players: usize, values: Vec<f64>) -> Result<Self> {
        if players == 0 || players > ENUMERATION_CAP {
            return Err(Error::invalid(format!("table games need 1..={ENUMERATION_CAP} players")));
        }
        if values.len() != 1 << players {
            return Err(Error::LengthMismatch {
                what: "value table".into(),
                expected: 1 << players,
                actual: values.len(),
            });
        }
        Ok(TableGame { players, values })
    }

    pub fn from_fn(players: usize, f: impl Fn(Coalition) -> f64) -> Result<Self> {
        if players == 0 || players > ENUMERATION_CAP {
            return Err(Error::invalid(format!("table games need 1..={ENUMERATION_CAP} players")));
        }
        let values = (0..1u64 << players).map(|m| f(Coalition::from_mask(m))).collect();
        Self::new(players, values)
    }

    /// Tabulates another game by evaluating every coalition.
    pub fn tabulate<G: CoalitionGame + ?Sized>(game: &G) -> Result<Self> {
        let n = game.num_players();
        if n > ENUMERATION_CAP {
            return Err(Error::CapExceeded {
                what: "tabulated players",
                value: n as u64,
                cap: ENUMERATION_CAP as u64,
            });
        }
        let values = (0..1u64 << n)
            .map(|m| game.value(Coalition::from_mask(m)))
            .collect::<Result<_>>()?;
        Self::new(n, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl CoalitionGame for TableGame {
    fn num_players(&self) -> usize {
        self.players
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        self.values
            .get(c.mask() as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("coalition {:#x} outside table", c.mask())))
    }
}
