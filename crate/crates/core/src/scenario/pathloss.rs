//! Three-slope path loss.
//!
//! With distances in kilometers and `L` the Hata-COST231 offset,
//!
//! ```text
//! PL(d) = -L - 35 log10(d)                        d > d1
//!       = -L - 15 log10(d1) - 20 log10(d)         d0 < d <= d1
//!       = -L - 15 log10(d1) - 20 log10(d0)        d <= d0
//! ```
//!
//! Defaults: `d0 = 10 m`, `d1 = 50 m`, carrier 1900 MHz, AP height 15 m and
//! UE height 1.65 m, which give `L = 140.715 dB`. All of these are
//! configuration; override `offset_db` to pin `L` directly.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossModel {
    /// Near breakpoint, meters.
    pub d0: f64,
    /// Far breakpoint, meters.
    pub d1: f64,
    pub carrier_mhz: f64,
    pub ap_height: f64,
    pub ue_height: f64,
    /// Fixed offset `L` in dB; derived from the Hata-COST231 form when absent.
    pub offset_db: Option<f64>,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            d0: 10.0,
            d1: 50.0,
            carrier_mhz: 1900.0,
            ap_height: 15.0,
            ue_height: 1.65,
            offset_db: None,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d1 > self.d0) {
            return Err(Error::Config(format!(
                "path loss breakpoints must satisfy 0 < d0 < d1 (got {}, {})",
                self.d0, self.d1
            )));
        }
        Ok(())
    }

    pub fn offset_db(&self) -> f64 {
        self.offset_db.unwrap_or_else(|| {
            let lf = self.carrier_mhz.log10();
            46.3 + 33.9 * lf - 13.82 * self.ap_height.log10()
                - (1.1 * lf - 0.7) * self.ue_height
                + (1.56 * lf - 0.8)
        })
    }

    /// Path gain in dB (negative) at distance `d` meters.
    pub fn path_loss_db(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::Domain(format!("distance must be positive, got {d}")));
        }
        let l = self.offset_db();
        let km = |x: f64| (x / 1000.0).log10();
        Ok(if d > self.d1 {
            -l - 35.0 * km(d)
        } else if d > self.d0 {
            -l - 15.0 * km(self.d1) - 20.0 * km(d)
        } else {
            -l - 15.0 * km(self.d1) - 20.0 * km(self.d0)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuous_at_breakpoints() {
        let pl = PathLossModel::default();
        let l = pl.offset_db();
        let km = |x: f64| (x / 1000.0).log10();
        let far = -l - 35.0 * km(pl.d1);
        let mid = -l - 15.0 * km(pl.d1) - 20.0 * km(pl.d1);
        assert!((far - mid).abs() < 1e-9);
        let near = pl.path_loss_db(pl.d0).unwrap();
        let just_above = pl.path_loss_db(pl.d0 * (1.0 + 1e-12)).unwrap();
        assert!((near - just_above).abs() < 1e-9);
        let at_d1 = pl.path_loss_db(pl.d1).unwrap();
        let above_d1 = pl.path_loss_db(pl.d1 * (1.0 + 1e-12)).unwrap();
        assert!((at_d1 - above_d1).abs() < 1e-9);
    }

    #[test]
    fn one_kilometer_is_minus_offset() {
        // 46.3 + 33.9 lg1900 - 13.82 lg15 - (1.1 lg1900 - 0.7) 1.65 + (1.56 lg1900 - 0.8)
        let pl = PathLossModel::default();
        assert!((pl.path_loss_db(1000.0).unwrap() + 140.715_083_703_908_42).abs() < 1e-9);
    }

    #[test]
    fn far_slope_doubling() {
        let pl = PathLossModel::default();
        let diff = pl.path_loss_db(2.0 * pl.d1).unwrap() - pl.path_loss_db(pl.d1).unwrap();
        assert!((diff + 10.536_049_848_239_342).abs() < 1e-9);
    }

    #[test]
    fn flat_inside_d0() {
        let pl = PathLossModel::default();
        let a = pl.path_loss_db(1.0).unwrap();
        // -L - 15 lg(0.05) - 20 lg(0.01)
        assert!((a + 81.199_633_768_948_7).abs() < 1e-9);
        assert_eq!(a, pl.path_loss_db(9.0).unwrap());
    }

    #[test]
    fn monotone_non_increasing() {
        let pl = PathLossModel::default();
        let mut prev = f64::INFINITY;
        for i in 1..5000 {
            let v = pl.path_loss_db(i as f64 * 0.5).unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn rejects_non_positive_distance() {
        let pl = PathLossModel::default();
        assert!(pl.path_loss_db(0.0).is_err());
        assert!(pl.path_loss_db(-3.0).is_err());
        assert!(pl.path_loss_db(f64::NAN).is_err());
    }
}
