//! Strip partition of the value × age box.
//!
//! Agents live on the integer grid `value ∈ [T, 2T)`, `age ∈ [0, T)`. Every
//! slope-2 line is represented by its diagonal coordinate `d = value − 2·age`,
//! which drops by exactly 2 per step for an agent that stays unmatched.
//!
//! Type 1 strips cover `d ∈ [T, 2T)` in bands of width `w = floor(√T)`, indexed
//! left to right; the rightmost band absorbs any remainder. Type 2 strips cover
//! `d < T` with vertical heights `w, w, 2w, 4w, …` capped at `T/2`, the final
//! height clipped so that the heights sum to `T`. Type 1 bands include their
//! left (lower-d) line; Type 2 bands include their lower line.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the `T × T` box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub value: u32,
    pub age: u32,
}

impl GridPoint {
    pub fn new(value: u32, age: u32, lifetime: u32) -> Result<Self> {
        let p = GridPoint { value, age };
        if !p.in_box(lifetime) {
            return Err(Error::invalid(format!(
                "point (value={value}, age={age}) outside the box for T={lifetime}"
            )));
        }
        Ok(p)
    }

    pub fn in_box(&self, lifetime: u32) -> bool {
        self.value >= lifetime && self.value < 2 * lifetime && self.age < lifetime
    }

    /// Diagonal coordinate `value − 2·age`.
    pub fn diag(&self) -> i64 {
        diag_coord(self.value, self.age)
    }
}

#[inline]
pub fn diag_coord(value: u32, age: u32) -> i64 {
    value as i64 - 2 * age as i64
}

/// Worth `value · (T − age)`: the most a partner can still derive from this agent.
#[inline]
pub fn worth(p: GridPoint, lifetime: u32) -> u64 {
    p.value as u64 * (lifetime - p.age) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StripKind {
    Type1,
    Type2,
}

/// Strip label. Type 1 strips are indexed `1..=w`, Type 2 strips `1..=K` from
/// the top down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StripId {
    pub kind: StripKind,
    pub index: u32,
}

impl StripId {
    pub fn type1(index: u32) -> Self {
        StripId {
            kind: StripKind::Type1,
            index,
        }
    }

    pub fn type2(index: u32) -> Self {
        StripId {
            kind: StripKind::Type2,
            index,
        }
    }
}

impl fmt::Display for StripId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            StripKind::Type1 => write!(f, "T1#{}", self.index),
            StripKind::Type2 => write!(f, "T2#{}", self.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripPartition {
    lifetime: u32,
    width: u32,
    type2_heights: Vec<u32>,
    /// `b_0 = T > b_1 > … > b_K`, with `b_k = b_{k−1} − 2·h_k`.
    diag_boundaries: Vec<i64>,
}

impl StripPartition {
    pub fn build(lifetime: u32) -> Result<Self> {
        if lifetime < 4 {
            return Err(Error::invalid(format!(
                "strip partition needs T >= 4, got {lifetime}"
            )));
        }
        let width = isqrt(lifetime);
        let cap = lifetime / 2;

        let mut heights = Vec::new();
        let mut remaining = lifetime;
        let mut next = width;
        while remaining > 0 {
            let h = next.min(cap).min(remaining);
            heights.push(h);
            remaining -= h;
            // w, w, 2w, 4w, ...
            if heights.len() > 1 {
                next = next.saturating_mul(2);
            }
        }

        let mut diag_boundaries = Vec::with_capacity(heights.len() + 1);
        let mut b = lifetime as i64;
        diag_boundaries.push(b);
        for &h in &heights {
            b -= 2 * h as i64;
            diag_boundaries.push(b);
        }

        Ok(StripPartition {
            lifetime,
            width,
            type2_heights: heights,
            diag_boundaries,
        })
    }

    pub fn lifetime(&self) -> u32 {
        self.lifetime
    }

    /// Strip width `floor(√T)`, also the number of Type 1 strips.
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn type1_count(&self) -> u32 {
        self.width
    }

    pub fn type2_count(&self) -> u32 {
        self.type2_heights.len() as u32
    }

    /// Total number of strips `N = w + K`.
    pub fn strip_count(&self) -> usize {
        self.width as usize + self.type2_heights.len()
    }

    pub fn type2_heights(&self) -> &[u32] {
        &self.type2_heights
    }

    pub fn diag_boundaries(&self) -> &[i64] {
        &self.diag_boundaries
    }

    /// Half-open diagonal range `[lo, hi)` covered by a strip.
    pub fn diag_range(&self, strip: StripId) -> (i64, i64) {
        let t = self.lifetime as i64;
        let w = self.width as i64;
        match strip.kind {
            StripKind::Type1 => {
                let i = strip.index as i64;
                let lo = t + (i - 1) * w;
                let hi = if strip.index == self.width {
                    2 * t
                } else {
                    t + i * w
                };
                (lo, hi)
            }
            StripKind::Type2 => {
                let k = strip.index as usize;
                (self.diag_boundaries[k], self.diag_boundaries[k - 1])
            }
        }
    }

    /// Vertical extent of a strip, in steps. Type 1 strips report `w/2`.
    pub fn max_height(&self, strip: StripId) -> f64 {
        match strip.kind {
            StripKind::Type1 => self.width as f64 / 2.0,
            StripKind::Type2 => self.type2_heights[strip.index as usize - 1] as f64,
        }
    }

    pub fn bottom_strip(&self) -> StripId {
        StripId::type2(self.type2_count())
    }

    pub fn strip_of(&self, p: GridPoint) -> Result<StripId> {
        if !p.in_box(self.lifetime) {
            return Err(Error::invalid(format!(
                "point (value={}, age={}) outside the box for T={}",
                p.value, p.age, self.lifetime
            )));
        }
        Ok(self.strip_at(self.slot_of_diag(p.diag())))
    }

    /// Dense strip index in `0..N`: Type 1 strips first, then Type 2 from the top.
    #[inline]
    pub fn slot_of_diag(&self, d: i64) -> usize {
        let t = self.lifetime as i64;
        if d >= t {
            let i = ((d - t) / self.width as i64) as usize;
            i.min(self.width as usize - 1)
        } else {
            // b_k <= d < b_{k-1}; boundaries are strictly decreasing.
            let k = self.diag_boundaries[1..]
                .iter()
                .position(|&b| d >= b)
                .unwrap_or(self.type2_heights.len() - 1);
            self.width as usize + k
        }
    }

    #[inline]
    pub fn slot_of(&self, value: u32, age: u32) -> usize {
        self.slot_of_diag(diag_coord(value, age))
    }

    pub fn strip_at(&self, slot: usize) -> StripId {
        let w = self.width as usize;
        if slot < w {
            StripId::type1(slot as u32 + 1)
        } else {
            StripId::type2((slot - w) as u32 + 1)
        }
    }

    pub fn slot(&self, strip: StripId) -> usize {
        match strip.kind {
            StripKind::Type1 => strip.index as usize - 1,
            StripKind::Type2 => self.width as usize + strip.index as usize - 1,
        }
    }

    /// All strips in slot order.
    pub fn strips(&self) -> impl Iterator<Item = StripId> + '_ {
        (0..self.strip_count()).map(|s| self.strip_at(s))
    }
}

pub(crate) fn isqrt(x: u32) -> u32 {
    let mut r = (x as f64).sqrt() as u32;
    while (r as u64 + 1) * (r as u64 + 1) <= x as u64 {
        r += 1;
    }
    while r as u64 * r as u64 > x as u64 {
        r -= 1;
    }
    r
}
