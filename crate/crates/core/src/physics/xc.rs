//! Local-density exchange-correlation energy densities `E(t)` per unit
//! volume together with their first three derivatives in the density `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slater-Dirac exchange constant `(3/4) (3/pi)^(1/3)`.
pub const DIRAC_CX: f64 = 0.738_558_766_382_022_4;

/// Density floor applied inside `E''` and `E'''`, both singular at zero.
pub const RHO_FLOOR: f64 = 1e-12;

/// Perdew-Zunger (1981) fit of the Ceperley-Alder correlation energy of the
/// unpolarized electron gas, Phys. Rev. B 23, 5048, Table XII.
pub mod pz81 {
    pub const GAMMA: f64 = -0.1423;
    pub const BETA1: f64 = 1.0529;
    pub const BETA2: f64 = 0.3334;
    pub const A: f64 = 0.0311;
    pub const B: f64 = -0.048;
    pub const C: f64 = 0.0020;
    pub const D: f64 = -0.0116;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XcFunctional {
    None,
    DiracExchange,
    /// Slater X-alpha exchange; `alpha = 2/3` recovers Dirac exchange.
    Xalpha {
        alpha: f64,
    },
    DiracPlusPz81,
}

impl XcFunctional {
    pub fn is_none(&self) -> bool {
        matches!(self, XcFunctional::None)
    }

    /// Hoelder exponent of the second-derivative growth bound.
    pub fn holder_alpha(&self) -> f64 {
        1.0 / 3.0
    }

    fn exchange_scale(&self) -> f64 {
        match *self {
            XcFunctional::None => 0.0,
            XcFunctional::DiracExchange | XcFunctional::DiracPlusPz81 => 1.0,
            XcFunctional::Xalpha { alpha } => 1.5 * alpha,
        }
    }

    fn has_correlation(&self) -> bool {
        matches!(self, XcFunctional::DiracPlusPz81)
    }

    pub fn validate(&self) -> Result<()> {
        if let XcFunctional::Xalpha { alpha } = *self {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "X-alpha parameter must be positive, got {alpha}"
                )));
            }
        }
        Ok(())
    }

    /// Energy density `E(t)`.
    pub fn energy_density(&self, t: f64) -> Result<f64> {
        check_density(t)?;
        Ok(self.e0(t))
    }

    /// Potential `E'(t)`.
    pub fn potential(&self, t: f64) -> Result<f64> {
        check_density(t)?;
        Ok(self.e1(t))
    }

    /// `E''(t)`, with `t` floored at [`RHO_FLOOR`].
    pub fn second_derivative(&self, t: f64) -> Result<f64> {
        check_density(t)?;
        Ok(self.e2(t.max(RHO_FLOOR)))
    }

    /// `E'''(t)`, with `t` floored at [`RHO_FLOOR`].
    pub fn third_derivative(&self, t: f64) -> Result<f64> {
        check_density(t)?;
        Ok(self.e3(t.max(RHO_FLOOR)))
    }

    pub(crate) fn e0(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut e = -self.exchange_scale() * DIRAC_CX * t.powf(4.0 / 3.0);
        if self.has_correlation() {
            e += t * pz_eps(rs(t)).0;
        }
        e
    }

    pub(crate) fn e1(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut v = -self.exchange_scale() * (4.0 / 3.0) * DIRAC_CX * t.cbrt();
        if self.has_correlation() {
            let r = rs(t);
            let (eps, d1, _) = pz_eps(r);
            v += eps - r / 3.0 * d1;
        }
        v
    }

    pub(crate) fn e2(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut v = -self.exchange_scale() * (4.0 / 9.0) * DIRAC_CX * t.powf(-2.0 / 3.0);
        if self.has_correlation() {
            let r = rs(t);
            let (_, d1, d2) = pz_eps(r);
            // d/dt [eps - (r/3) eps'] with dr/dt = -r / (3t)
            v += -r / (3.0 * t) * (2.0 / 3.0 * d1 - r / 3.0 * d2);
        }
        v
    }

    pub(crate) fn e3(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut v = self.exchange_scale() * (8.0 / 27.0) * DIRAC_CX * t.powf(-5.0 / 3.0);
        if self.has_correlation() {
            // five-point stencil on the analytic correlation E''
            let corr = |s: f64| {
                let r = rs(s);
                let (_, d1, d2) = pz_eps(r);
                -r / (3.0 * s) * (2.0 / 3.0 * d1 - r / 3.0 * d2)
            };
            let h = 1e-3 * t;
            v += (corr(t - 2.0 * h) - 8.0 * corr(t - h) + 8.0 * corr(t + h) - corr(t + 2.0 * h)) / (12.0 * h);
        }
        v
    }
}

fn check_density(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidInput(format!("negative density {t}")));
    }
    Ok(())
}

fn rs(t: f64) -> f64 {
    (3.0 / (4.0 * std::f64::consts::PI * t)).cbrt()
}

/// Correlation energy per electron and its first two `r_s` derivatives.
fn pz_eps(r: f64) -> (f64, f64, f64) {
    use pz81::*;
    if r >= 1.0 {
        let sq = r.sqrt();
        let den = 1.0 + BETA1 * sq + BETA2 * r;
        let dden = BETA1 / (2.0 * sq) + BETA2;
        let ddden = -BETA1 / (4.0 * r * sq);
        let e = GAMMA / den;
        let d1 = -GAMMA * dden / (den * den);
        let d2 = -GAMMA * (ddden * den - 2.0 * dden * dden) / (den * den * den);
        (e, d1, d2)
    } else {
        let l = r.ln();
        let e = A * l + B + C * r * l + D * r;
        let d1 = A / r + C * (l + 1.0) + D;
        let d2 = -A / (r * r) + C / r;
        (e, d1, d2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [XcFunctional; 4] = [
        XcFunctional::None,
        XcFunctional::DiracExchange,
        XcFunctional::Xalpha { alpha: 0.7 },
        XcFunctional::DiracPlusPz81,
    ];

    #[test]
    fn dirac_constant() {
        let cx = 0.75 * (3.0 / std::f64::consts::PI).cbrt();
        assert!((cx - DIRAC_CX).abs() < 1e-15);
        let v = XcFunctional::DiracExchange.potential(1.0).unwrap();
        assert!((v + 0.984_745_0).abs() < 1e-7);
        assert!((v + 4.0 / 3.0 * DIRAC_CX).abs() < 1e-15);
    }

    #[test]
    fn xalpha_two_thirds_is_dirac() {
        let xa = XcFunctional::Xalpha { alpha: 2.0 / 3.0 };
        for t in [0.01, 1.0, 7.0] {
            let a = xa.energy_density(t).unwrap();
            let b = XcFunctional::DiracExchange.energy_density(t).unwrap();
            assert!((a - b).abs() < 1e-15 * b.abs());
        }
    }

    #[test]
    fn zero_density() {
        for f in ALL {
            assert_eq!(f.energy_density(0.0).unwrap(), 0.0);
            assert_eq!(f.potential(0.0).unwrap(), 0.0);
            assert!(f.energy_density(-1e-3).is_err());
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for f in ALL {
            for t in [0.1, 1.0, 2.0, 10.0] {
                let h = 1e-5 * t;
                let fd1 = (f.e0(t + h) - f.e0(t - h)) / (2.0 * h);
                let fd2 = (f.e1(t + h) - f.e1(t - h)) / (2.0 * h);
                let fd3 = (f.e2(t + h) - f.e2(t - h)) / (2.0 * h);
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
                if f.is_none() {
                    assert_eq!(f.e1(t), 0.0);
                    continue;
                }
                assert!(rel(fd1, f.e1(t)) < 1e-7, "{f:?} E' at {t}");
                assert!(rel(fd2, f.e2(t)) < 1e-6, "{f:?} E'' at {t}");
                assert!(rel(fd3, f.e3(t)) < 1e-5, "{f:?} E''' at {t}");
            }
        }
    }

    #[test]
    fn pz81_continuous_at_rs_one() {
        let (lo, dlo, _) = pz_eps(1.0 - 1e-12);
        let (hi, dhi, _) = pz_eps(1.0);
        assert!((lo - hi).abs() < 1e-4);
        assert!((dlo - dhi).abs() < 1e-2);
    }

    #[test]
    fn correlation_is_negative() {
        let f = XcFunctional::DiracPlusPz81;
        for t in [1e-4, 0.01, 1.0, 100.0] {
            assert!(f.e0(t) < XcFunctional::DiracExchange.e0(t));
        }
    }

    fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| lo * (hi / lo).powf(k as f64 / n as f64)).collect()
    }

    #[test]
    fn first_order_growth_audit() {
        // |E'(t)| + |t E''(t)| = (16/9) c_x t^(1/3) for Dirac exchange
        let f = XcFunctional::DiracExchange;
        for t in log_grid(1e-6, 1e4, 200) {
            let g = f.e1(t).abs() + (t * f.e2(t)).abs();
            let expect = 16.0 / 9.0 * DIRAC_CX * t.cbrt();
            assert!((g - expect).abs() < 1e-12 * expect);
        }
        // with correlation the ratio to t^(1/3) + 1 stays within fixed bounds
        let f = XcFunctional::DiracPlusPz81;
        for t in log_grid(1e-6, 1e4, 200) {
            let g = f.e1(t).abs() + (t * f.e2(t)).abs();
            let ratio = g / (t.cbrt() + 1.0);
            assert!(ratio > 0.01 && ratio < 3.0, "t={t}: {ratio}");
        }
    }

    #[test]
    fn second_order_growth_audit() {
        // |E''(t)| + |t E'''(t)| <= C (1 + t^(alpha - 1)), alpha = 1/3
        for f in [XcFunctional::DiracExchange, XcFunctional::DiracPlusPz81] {
            let alpha = f.holder_alpha();
            for t in log_grid(1e-6, 1e4, 200) {
                let g = f.e2(t).abs() + (t * f.e3(t)).abs();
                let bound = 20.0 / 27.0 * DIRAC_CX * 2.0 * (1.0 + t.powf(alpha - 1.0));
                assert!(g <= bound, "{f:?} t={t}: {g} > {bound}");
            }
        }
        let f = XcFunctional::DiracExchange;
        let t: f64 = 0.3;
        let g = f.e2(t).abs() + (t * f.e3(t)).abs();
        assert!((g - 20.0 / 27.0 * DIRAC_CX * t.powf(-2.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn floor_regularizes_zero() {
        let f = XcFunctional::DiracExchange;
        assert!(f.second_derivative(0.0).unwrap().is_finite());
        assert!(f.third_derivative(0.0).unwrap().is_finite());
        assert_eq!(f.second_derivative(0.0).unwrap(), f.e2(RHO_FLOOR));
    }
}
