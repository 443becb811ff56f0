//! Small dense complex linear-algebra helpers shared by the channel, estimation and ZF code.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

/// Condition number above which a Gram matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e10;

/// One circularly-symmetric CN(0, 1) draw.
pub fn crandn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn crandn_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    // column-major fill keeps draws in a fixed order for a given seed
    DMatrix::from_fn(rows, cols, |_, _| crandn(rng))
}

/// Condition number of an upper-triangular factor via its singular values.
fn triangular_condition(r: &CMat) -> f64 {
    if r.is_empty() {
        return 1.0;
    }
    let sv = r.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Right pseudo-inverse `A^H (A A^H)^{-1}` of a wide matrix with full row rank.
///
/// Computed from the QR factorization `A^H = Q R`, giving `A^+ = Q R^{-H}`.
pub fn right_pinv(a: &CMat) -> Result<CMat> {
    let (rows, cols) = a.shape();
    if rows > cols {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    if rows == 0 {
        return Ok(CMat::zeros(cols, 0));
    }
    let qr = a.adjoint().qr();
    let r = qr.r();
    let condition = triangular_condition(&r);
    if condition > MAX_CONDITION {
        return Err(Error::RankDeficient { condition });
    }
    let q = qr.q();
    let identity = CMat::identity(rows, rows);
    let r_inv_h = r
        .adjoint()
        .solve_lower_triangular(&identity)
        .ok_or(Error::RankDeficient { condition })?;
    Ok(q * r_inv_h)
}

/// Left pseudo-inverse `(B^H B)^{-1} B^H` of a tall matrix with full column rank.
pub fn left_pinv(b: &CMat) -> Result<CMat> {
    let (rows, cols) = b.shape();
    if cols > rows {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    if cols == 0 {
        return Ok(CMat::zeros(0, rows));
    }
    let qr = b.clone().qr();
    let r = qr.r();
    let condition = triangular_condition(&r);
    if condition > MAX_CONDITION {
        return Err(Error::RankDeficient { condition });
    }
    let q_h = qr.q().adjoint();
    r.solve_upper_triangular(&q_h)
        .ok_or(Error::RankDeficient { condition })
}

/// Frobenius norm of `A - I`.
pub fn identity_residual(a: &CMat) -> f64 {
    let (r, c) = a.shape();
    (a - CMat::identity(r, c)).norm()
}

pub fn norm_sqr_row(m: &CMat, row: usize) -> f64 {
    m.row(row).iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm_sqr_col(m: &CMat, col: usize) -> f64 {
    m.column(col).iter().map(|z| z.norm_sqr()).sum()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn crandn_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let var: f64 = (0..n).map(|_| crandn(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn pinv_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = crandn_matrix(10, 16, &mut rng);
        let ap = right_pinv(&a).unwrap();
        assert!(identity_residual(&(&a * &ap)) < 1e-9);
        let b = crandn_matrix(16, 10, &mut rng);
        let bp = left_pinv(&b).unwrap();
        assert!(identity_residual(&(&bp * &b)) < 1e-9);
    }

    #[test]
    fn duplicated_row_is_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = crandn_matrix(4, 8, &mut rng);
        let r0 = a.row(0).clone_owned();
        a.row_mut(2).copy_from(&r0);
        match right_pinv(&a) {
            Err(Error::RankDeficient { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(23.0) - 0.199_526_231_496_887_9).abs() < 1e-12);
        assert!((linear_to_db(db_to_linear(-7.3)) + 7.3).abs() < 1e-12);
    }
}
