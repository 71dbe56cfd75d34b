use std::fmt;

use serde::{Deserialize, Serialize};

/// Hybrid logical clock timestamp: wall microseconds plus a logical counter.
///
/// Ordered by `physical`, then `logical`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Hlc {
    pub physical: i64,
    pub logical: u32,
}

pub const MICROS_PER_SECOND: i64 = 1_000_000;

impl Hlc {
    pub const fn new(physical: i64, logical: u32) -> Self {
        Hlc { physical, logical }
    }

    /// Greatest HLC value belonging to data timestamp `second`. A version is
    /// visible at data timestamp `t` when its commit timestamp is at most this.
    pub fn end_of_second(second: i64) -> Self {
        Hlc::new(second * MICROS_PER_SECOND + (MICROS_PER_SECOND - 1), u32::MAX)
    }

    pub fn start_of_second(second: i64) -> Self {
        Hlc::new(second * MICROS_PER_SECOND, 0)
    }

    /// The data-timestamp second this commit falls into.
    pub fn second(&self) -> i64 {
        self.physical.div_euclid(MICROS_PER_SECOND)
    }
}

impl fmt::Display for Hlc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.physical, self.logical)
    }
}

/// Issues strictly increasing HLC timestamps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HlcClock {
    last: Hlc,
}

impl HlcClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_state(last: Hlc) -> Self {
        HlcClock { last }
    }

    pub fn last(&self) -> Hlc {
        self.last
    }

    /// Issues the next timestamp given the current wall time (micros) and an
    /// optionally observed remote timestamp.
    ///
    /// physical = max(wall, last.physical, observed.physical); the logical
    /// counter continues from whichever of `last`/`observed` shares that
    /// physical value and resets to zero when the wall clock is ahead.
    pub fn tick(&mut self, wall_micros: i64, observed: Option<Hlc>) -> Hlc {
        let last = self.last;
        let obs_phys = observed.map_or(i64::MIN, |o| o.physical);
        let physical = wall_micros.max(last.physical).max(obs_phys);
        let from_last = (physical == last.physical).then_some(last.logical);
        let from_obs = observed.filter(|o| o.physical == physical).map(|o| o.logical);
        let logical = match (from_last, from_obs) {
            (Some(a), Some(b)) => a.max(b) + 1,
            (Some(a), None) | (None, Some(a)) => a + 1,
            (None, None) => 0,
        };
        self.last = Hlc::new(physical, logical);
        self.last
    }

    /// Moves the clock so every later tick is at or after `floor`.
    pub fn fence(&mut self, floor: Hlc) {
        if floor > self.last {
            self.last = floor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_without_observation() {
        let mut c = HlcClock::with_state(Hlc::new(10, 0));
        assert_eq!(c.tick(10, None), Hlc::new(10, 1));
        let mut c = HlcClock::with_state(Hlc::new(10, 0));
        assert_eq!(c.tick(11, None), Hlc::new(11, 0));
    }

    #[test]
    fn tick_with_observation() {
        let mut c = HlcClock::with_state(Hlc::new(10, 3));
        assert_eq!(c.tick(0, Some(Hlc::new(10, 7))), Hlc::new(10, 8));
        let mut c = HlcClock::with_state(Hlc::new(10, 3));
        assert_eq!(c.tick(0, Some(Hlc::new(9, 99))), Hlc::new(10, 4));
        let mut c = HlcClock::with_state(Hlc::new(10, 3));
        assert_eq!(c.tick(0, Some(Hlc::new(12, 5))), Hlc::new(12, 6));
    }

    #[test]
    fn second_boundaries() {
        assert!(Hlc::new(20 * MICROS_PER_SECOND, 0) <= Hlc::end_of_second(20));
        assert!(Hlc::new(21 * MICROS_PER_SECOND, 0) > Hlc::end_of_second(20));
        assert_eq!(Hlc::new(20 * MICROS_PER_SECOND + 5, 3).second(), 20);
    }
}
