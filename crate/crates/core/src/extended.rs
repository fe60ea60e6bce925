//! Extended real numbers `ℝ ∪ {+∞}`.
//!
//! Lennard-Jones type potentials are `+∞` on their non-physical branch, so
//! infinite energies are routine. They are carried as an explicit variant
//! instead of an `f64::INFINITY` sentinel; any sum containing `+∞` is `+∞`.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Wraps a float, mapping `+inf` to [`ExtReal::PosInf`].
    ///
    /// Panics on NaN and `-inf`: neither is a legal energy.
    pub fn from_f64(x: f64) -> Self {
        assert!(!x.is_nan(), "NaN is not an extended real");
        assert!(x != f64::NEG_INFINITY, "-inf is not an admissible energy");
        if x == f64::INFINITY {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(x)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// The finite value, panicking on `+∞`. For call sites that have
    /// already established feasibility.
    pub fn unwrap_finite(self) -> f64 {
        self.finite().expect("expected a finite energy")
    }

    /// Lossy conversion for reporting and plotting.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Parses the CSV representation (`inf` or a decimal).
    pub fn parse(s: &str) -> Option<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t == "+inf" {
            return Some(ExtReal::PosInf);
        }
        let v: f64 = t.parse().ok()?;
        if v.is_nan() || v == f64::NEG_INFINITY {
            return None;
        }
        Some(ExtReal::from_f64(v))
    }
}

impl Default for ExtReal {
    fn default() -> Self {
        ExtReal::ZERO
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        ExtReal::from_f64(x)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> Self {
        self + ExtReal::from_f64(rhs)
    }
}

impl AddAssign for ExtReal {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Scaling by a nonnegative weight. `0 · ∞` is taken as `∞`, which keeps
/// infeasibility from being masked by a vanishing weight.
impl Mul<f64> for ExtReal {
    type Output = ExtReal;
    fn mul(self, w: f64) -> Self {
        debug_assert!(w >= 0.0, "negative weights are not meaningful here");
        match self {
            ExtReal::Finite(a) => ExtReal::Finite(a * w),
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut acc = 0.0;
        for x in iter {
            match x {
                ExtReal::Finite(v) => acc += v,
                ExtReal::PosInf => return ExtReal::PosInf,
            }
        }
        ExtReal::Finite(acc)
    }
}

/// Shortest round-trip decimal, `inf` for `+∞`.
impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("inf"),
        }
    }
}

impl serde::Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_absorbs_sums() {
        let xs = [ExtReal::Finite(1.0), ExtReal::PosInf, ExtReal::Finite(-5.0)];
        assert_eq!(xs.iter().copied().sum::<ExtReal>(), ExtReal::PosInf);
        assert_eq!(ExtReal::Finite(2.0) + ExtReal::Finite(-3.0), ExtReal::Finite(-1.0));
    }

    #[test]
    fn ordering_puts_infinity_last() {
        assert!(ExtReal::Finite(1e300) < ExtReal::PosInf);
        assert!(ExtReal::Finite(-1.0) < ExtReal::Finite(0.0));
        assert_eq!(ExtReal::PosInf.min(ExtReal::Finite(3.0)), ExtReal::Finite(3.0));
    }

    #[test]
    fn display_and_parse_round_trip() {
        for v in [0.1, -127.0 / 4096.0, 1e-300, 3.5] {
            let e = ExtReal::Finite(v);
            assert_eq!(ExtReal::parse(&e.to_string()), Some(e));
        }
        assert_eq!(ExtReal::PosInf.to_string(), "inf");
        assert_eq!(ExtReal::parse("inf"), Some(ExtReal::PosInf));
        assert_eq!(ExtReal::parse("nan"), None);
    }
}
