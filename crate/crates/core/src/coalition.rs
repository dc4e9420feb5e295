//! Coalitions as bitmasks over at most 64 players, subset enumeration and
//! uniform k-subset sampling with a fixed RNG consumption schedule.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest game a [`Coalition`] can describe.
pub const MAX_PLAYERS: usize = 64;

/// Largest `n` for which [`enumerate_subsets`] will list all `2^n` coalitions.
pub const ENUMERATION_CAP: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlayerId(pub usize);

impl PlayerId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A subset of players stored as a single machine word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub const fn from_mask(mask: u64) -> Self {
        Coalition(mask)
    }

    /// All of players `0..n`.
    pub fn grand(n: usize) -> Self {
        assert!(n <= MAX_PLAYERS, "at most {MAX_PLAYERS} players");
        if n == MAX_PLAYERS {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << n) - 1)
        }
    }

    pub fn singleton(player: PlayerId) -> Self {
        Coalition(1u64 << player.0)
    }

    pub fn from_players<I: IntoIterator<Item = usize>>(players: I) -> Self {
        Coalition(players.into_iter().fold(0, |m, p| m | (1u64 << p)))
    }

    pub const fn mask(self) -> u64 {
        self.0
    }

    pub const fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn contains(self, player: PlayerId) -> bool {
        self.0 & (1u64 << player.0) != 0
    }

    #[must_use]
    pub const fn with(self, player: PlayerId) -> Self {
        Coalition(self.0 | (1u64 << player.0))
    }

    #[must_use]
    pub const fn without(self, player: PlayerId) -> Self {
        Coalition(self.0 & !(1u64 << player.0))
    }

    #[must_use]
    pub const fn union(self, other: Coalition) -> Self {
        Coalition(self.0 | other.0)
    }

    pub const fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    /// True when no bit at position `>= n` is set.
    pub fn fits(self, n: usize) -> bool {
        n >= MAX_PLAYERS || self.0 >> n == 0
    }

    /// Members in ascending order.
    pub fn members(self) -> Members {
        Members(self.0)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, p) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone)]
pub struct Members(u64);

impl Iterator for Members {
    type Item = PlayerId;

    fn next(&mut self) -> Option<PlayerId> {
        if self.0 == 0 {
            return None;
        }
        let p = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(PlayerId(p))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// popcount of the mask.
pub fn size(c: Coalition) -> usize {
    c.size()
}

/// All `2^n` coalitions of `n` players in ascending mask order.
pub fn enumerate_subsets(n: usize) -> Result<impl Iterator<Item = Coalition>> {
    if n > ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            what: "subset enumeration players",
            value: n as u64,
            cap: ENUMERATION_CAP as u64,
        });
    }
    Ok((0..1u64 << n).map(Coalition))
}

/// Iterates all `k`-subsets of `n` players that exclude `excluded`, in
/// ascending mask order.
pub fn k_subsets_excluding(n: usize, k: usize, excluded: PlayerId) -> KSubsets {
    let ground = n.saturating_sub(1);
    let next = if k > ground {
        None
    } else if k == 0 {
        Some(0)
    } else {
        Some((1u64 << k) - 1)
    };
    KSubsets {
        next,
        limit_bits: ground,
        gap: excluded.0,
    }
}

/// Gosper's-hack enumeration over the compacted ground set, expanded around
/// the excluded player. Expansion is monotone, so output stays ascending.
#[derive(Debug, Clone)]
pub struct KSubsets {
    next: Option<u64>,
    limit_bits: usize,
    gap: usize,
}

impl Iterator for KSubsets {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        let cur = self.next?;
        self.next = if cur == 0 {
            None
        } else {
            let c = cur & cur.wrapping_neg();
            let r = cur.wrapping_add(c);
            let nxt = (((r ^ cur) >> 2) / c) | r;
            if r == 0 || (self.limit_bits < 64 && nxt >> self.limit_bits != 0) {
                None
            } else {
                Some(nxt)
            }
        };
        Some(Coalition(expand_around(cur, self.gap)))
    }
}

fn expand_around(compact: u64, gap: usize) -> u64 {
    let low = compact & ((1u64 << gap) - 1);
    let high = if gap >= 63 { 0 } else { (compact >> gap) << (gap + 1) };
    low | high
}

/// Uniform index in `0..bound` from exactly one 64-bit draw (multiply-high).
/// The bias is below `bound / 2^64`, negligible for player counts <= 64.
fn bounded_index<R: RngCore + ?Sized>(rng: &mut R, bound: usize) -> usize {
    ((u128::from(rng.next_u64()) * bound as u128) >> 64) as usize
}

/// Draws a uniformly distributed `k`-subset of the `n - 1` players other than
/// `excluded`. Consumes exactly `k` calls to `next_u64`.
pub fn sample_uniform_coalition<R: RngCore + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
    excluded: PlayerId,
) -> Result<Coalition> {
    if n == 0 || n > MAX_PLAYERS {
        return Err(Error::invalid(format!("player count {n} outside 1..={MAX_PLAYERS}")));
    }
    if excluded.0 >= n {
        return Err(Error::invalid(format!(
            "excluded player {excluded} not in a game of {n}"
        )));
    }
    if k > n - 1 {
        return Err(Error::invalid(format!(
            "cannot draw {k} players from the {} others",
            n - 1
        )));
    }
    let mut pool = [0u8; MAX_PLAYERS];
    let mut len = 0;
    for p in (0..n).filter(|&p| p != excluded.0) {
        pool[len] = p as u8;
        len += 1;
    }
    let mut mask = 0u64;
    for j in 0..k {
        let r = j + bounded_index(rng, len - j);
        pool.swap(j, r);
        mask |= 1u64 << pool[j];
    }
    Ok(Coalition(mask))
}
