use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Miscoverage level `alpha` in the open unit interval; intervals target `1 - alpha` coverage.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Alpha(alpha))
        } else {
            Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `alpha / 2`
    pub fn lower_tau(self) -> f64 {
        self.0 / 2.0
    }

    /// `1 - alpha / 2`
    pub fn upper_tau(self) -> f64 {
        1.0 - self.0 / 2.0
    }

    /// 1-based rank `ceil((1 - alpha)(n + 1))` used by split conformal calibration.
    /// May exceed `n`.
    pub fn conformal_rank(self, n: usize) -> usize {
        ceil_rank((1.0 - self.0) * (n as f64 + 1.0))
    }

    /// 1-based rank `ceil((1 - alpha) n)`: the fewest points that give coverage `>= 1 - alpha`.
    pub fn coverage_rank(self, n: usize) -> usize {
        ceil_rank((1.0 - self.0) * n as f64)
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Alpha::new(v)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

/// `ceil(x)` as a rank, absorbing round-off such as `(2/3) * 3 = 2.0000000000000004`.
pub(crate) fn ceil_rank(x: f64) -> usize {
    let tol = 1e-9 * x.abs().max(1.0);
    ((x - tol).ceil().max(1.0)) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(Alpha::new(0.0).is_err());
        assert!(Alpha::new(1.0).is_err());
        assert!(Alpha::new(f64::NAN).is_err());
        assert!(Alpha::new(0.05).is_ok());
    }

    #[test]
    fn ranks() {
        let a = Alpha::new(0.2).unwrap();
        assert_eq!(a.conformal_rank(4), 4);
        assert_eq!(Alpha::new(0.05).unwrap().conformal_rank(4), 5);
        assert_eq!(Alpha::new(0.05).unwrap().conformal_rank(19), 19);
        assert_eq!(Alpha::new(1.0 / 3.0).unwrap().coverage_rank(3), 2);
        assert_eq!(Alpha::new(1.0 / 3.0).unwrap().conformal_rank(3), 3);
    }
}
