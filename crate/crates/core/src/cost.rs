use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent `p` of the ground cost `‖x − y‖^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum CostExponent {
    #[default]
    One,
    Two,
}

impl CostExponent {
    /// Ground cost between two points of equal length.
    #[inline]
    pub fn cost(self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        match self {
            CostExponent::One => sq.sqrt(),
            CostExponent::Two => sq,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            CostExponent::One => 1,
            CostExponent::Two => 2,
        }
    }
}

impl TryFrom<u8> for CostExponent {
    type Error = Error;

    fn try_from(p: u8) -> Result<Self> {
        match p {
            1 => Ok(CostExponent::One),
            2 => Ok(CostExponent::Two),
            other => Err(Error::invalid(format!(
                "cost exponent must be 1 or 2, got {other}"
            ))),
        }
    }
}

impl From<CostExponent> for u8 {
    fn from(p: CostExponent) -> u8 {
        p.as_u8()
    }
}

/// Euclidean norm of the difference of two vectors.
#[inline]
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    CostExponent::One.cost(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponents() {
        let x = [1.0, 0.0];
        let y = [4.0, 4.0];
        assert_eq!(CostExponent::One.cost(&x, &y), 5.0);
        assert_eq!(CostExponent::Two.cost(&x, &y), 25.0);
        assert!(CostExponent::try_from(3).is_err());
    }
}
