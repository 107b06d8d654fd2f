use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CaeError;

/// Pointwise nonlinearity applied after each affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    #[serde(rename = "tanh")]
    Tanh,
    /// Clamp to [-1, 1]. The derivative is taken as 1 on the closed interval,
    /// including the kinks, and 0 outside.
    #[serde(rename = "hardtanh")]
    HardTanh,
    #[serde(rename = "none")]
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::HardTanh => z.clamp(-1.0, 1.0),
            ActivationKind::Identity => z,
        }
    }

    /// Returns `(rho(z), rho'(z), rho''(z))`.
    #[inline]
    pub fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            ActivationKind::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1)
            }
            ActivationKind::HardTanh => {
                if (-1.0..=1.0).contains(&z) {
                    (z, 1.0, 0.0)
                } else {
                    (z.clamp(-1.0, 1.0), 0.0, 0.0)
                }
            }
            ActivationKind::Identity => (z, 1.0, 0.0),
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, ActivationKind::HardTanh)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::HardTanh => "hardtanh",
            ActivationKind::Identity => "none",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = CaeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(ActivationKind::Tanh),
            "hardtanh" => Ok(ActivationKind::HardTanh),
            "none" | "identity" | "linear" => Ok(ActivationKind::Identity),
            other => Err(CaeError::Argument(format!("unknown activation `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardtanh_kinks_have_unit_slope() {
        assert_eq!(ActivationKind::HardTanh.eval(1.0).1, 1.0);
        assert_eq!(ActivationKind::HardTanh.eval(-1.0).1, 1.0);
        assert_eq!(ActivationKind::HardTanh.eval(1.5), (1.0, 0.0, 0.0));
        assert_eq!(ActivationKind::HardTanh.eval(-3.0).0, -1.0);
    }

    #[test]
    fn tanh_derivatives_match_finite_differences() {
        let h = 1e-5;
        for &z in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
            let (_, d1, d2) = ActivationKind::Tanh.eval(z);
            let fd1 = ((z + h).tanh() - (z - h).tanh()) / (2.0 * h);
            let g = |z: f64| ActivationKind::Tanh.eval(z).1;
            let fd2 = (g(z + h) - g(z - h)) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-9);
            assert!((d2 - fd2).abs() < 1e-8);
        }
    }

    #[test]
    fn names_round_trip() {
        for a in [ActivationKind::Tanh, ActivationKind::HardTanh, ActivationKind::Identity] {
            assert_eq!(a.name().parse::<ActivationKind>().unwrap(), a);
        }
        assert!("relu".parse::<ActivationKind>().is_err());
    }
}
