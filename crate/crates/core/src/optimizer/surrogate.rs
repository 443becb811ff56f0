//! Affine minorants used by the inner approximation.

use crate::{Error, Result};

/// First-order expansion of `x^2 / y` at `(x0, y0)`:
/// `(2 x0 / y0) x - (x0 / y0)^2 y`. It never exceeds `x^2 / y` for `y > 0`.
pub fn surrogate_fr(x: f64, y: f64, x0: f64, y0: f64) -> Result<f64> {
    if !(y0 > 0.0) {
        return Err(Error::Domain(format!("expansion point needs y0 > 0, got {y0}")));
    }
    let r = x0 / y0;
    Ok(2.0 * r * x - r * r * y)
}

/// First-order expansion of `x^2` at `x0`.
pub fn surrogate_qu(x: f64, x0: f64) -> f64 {
    2.0 * x0 * x - x0 * x0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_examples() {
        assert_eq!(surrogate_fr(2.0, 1.0, 2.0, 1.0).unwrap(), 4.0);
        assert_eq!(surrogate_fr(3.0, 2.0, 2.0, 1.0).unwrap(), 4.0);
        assert!(4.0 <= 9.0 / 2.0);
        assert!(surrogate_fr(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(surrogate_fr(1.0, 1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn quadratic_examples() {
        assert_eq!(surrogate_qu(3.0, 3.0), 9.0);
        assert_eq!(surrogate_qu(0.0, 3.0), -9.0);
    }
}
