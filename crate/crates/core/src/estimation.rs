//! Uplink training and LMMSE channel estimation.
//!
//! Pilots are the columns of the `tau x tau` identity, so the projection onto
//! UE `j`'s pilot is simply row `pilot_of[j]` of the received training block.
//! In full duplex, UL UEs train first (DL UEs overhear them to estimate the
//! cross-link channels) and DL UEs train second. In half duplex all UEs train
//! together and no cross-link estimate is formed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{crandn, linear_to_db, CMat, RMat};
use crate::pilots::{PilotAssignment, TrainingAssignment};
use crate::scenario::{ChannelSet, LargeScale, SystemConfig};
use crate::{Error, Result};

/// Received training blocks. Each `tau x n` block has one column per receive antenna.
#[derive(Debug, Clone, PartialEq)]
pub enum ReceivedTraining {
    Fd {
        /// At the APs during UL-UE training.
        y_ul: CMat,
        /// At the APs during DL-UE training.
        y_dl: CMat,
        /// At the DL UEs during UL-UE training, one column per DL UE.
        y_cci: CMat,
    },
    Hd {
        y: CMat,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorVariances {
    /// K x M.
    pub eps_dl: RMat,
    /// M x L.
    pub eps_ul: RMat,
    /// K x L. Equal to the cross-link gains when no cross-link training happens.
    pub eps_cci: RMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub h_dl_hat: CMat,
    pub h_ul_hat: CMat,
    pub g_cci_hat: CMat,
    pub eps_dl: RMat,
    pub eps_ul: RMat,
    pub eps_cci: RMat,
}

impl EstimateSet {
    /// Genie estimates: the true channels with zero error.
    pub fn perfect(ch: &ChannelSet, ls: &LargeScale) -> Self {
        Self {
            h_dl_hat: ch.h_dl.clone(),
            h_ul_hat: ch.h_ul.clone(),
            g_cci_hat: ch.g_cci.clone(),
            eps_dl: RMat::zeros(ls.beta_dl.nrows(), ls.beta_dl.ncols()),
            eps_ul: RMat::zeros(ls.beta_ul.nrows(), ls.beta_ul.ncols()),
            eps_cci: RMat::zeros(ls.beta_cci.nrows(), ls.beta_cci.ncols()),
        }
    }

    /// Same estimates with the error statistics discarded.
    pub fn ignoring_errors(&self) -> Self {
        Self {
            eps_dl: self.eps_dl.map(|_| 0.0),
            eps_ul: self.eps_ul.map(|_| 0.0),
            eps_cci: self.eps_cci.map(|_| 0.0),
            ..self.clone()
        }
    }

    pub fn errors(&self) -> ErrorVariances {
        ErrorVariances {
            eps_dl: self.eps_dl.clone(),
            eps_ul: self.eps_ul.clone(),
            eps_cci: self.eps_cci.clone(),
        }
    }
}

/// `sqrt(tau p_tr)`, the pilot amplitude after spreading.
fn pilot_amplitude(cfg: &SystemConfig) -> f64 {
    (cfg.pilot_len as f64 * cfg.train_power).sqrt()
}

/// `Y = sqrt(tau p) Upsilon X + Z` for UE rows `X` (U x n).
fn training_block<R: Rng + ?Sized>(
    x: &CMat,
    a: &PilotAssignment,
    cfg: &SystemConfig,
    noise: bool,
    rng: &mut R,
) -> CMat {
    let amp = pilot_amplitude(cfg);
    let sigma = cfg.noise_power.sqrt();
    let mut y = if noise {
        DMatrix::from_fn(a.num_pilots(), x.ncols(), |_, _| sigma * crandn(rng))
    } else {
        CMat::zeros(a.num_pilots(), x.ncols())
    };
    for (j, &i) in a.pilot_of.iter().enumerate() {
        let mut row = y.row_mut(i);
        row += x.row(j) * Complex64::new(amp, 0.0);
    }
    y
}

fn check_sizes(a: &PilotAssignment, users: usize, what: &str) -> Result<()> {
    if a.num_ues() != users {
        return Err(Error::Domain(format!(
            "{what} assignment covers {} UEs, expected {users}",
            a.num_ues()
        )));
    }
    Ok(())
}

fn stack_rows(top: &CMat, bottom: &CMat) -> CMat {
    let mut out = CMat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

fn training_with<R: Rng + ?Sized>(
    ch: &ChannelSet,
    a: &TrainingAssignment,
    cfg: &SystemConfig,
    noise: bool,
    rng: &mut R,
) -> Result<ReceivedTraining> {
    let (k_n, l_n) = (ch.h_dl.nrows(), ch.h_ul.ncols());
    let ul_rows = ch.h_ul.adjoint();
    Ok(match a {
        TrainingAssignment::Fd { ul, dl } => {
            check_sizes(ul, l_n, "UL")?;
            check_sizes(dl, k_n, "DL")?;
            let y_ul = training_block(&ul_rows, ul, cfg, noise, rng);
            let y_cci = training_block(&ch.g_cci.transpose(), ul, cfg, noise, rng);
            let y_dl = training_block(&ch.h_dl, dl, cfg, noise, rng);
            ReceivedTraining::Fd { y_ul, y_dl, y_cci }
        }
        TrainingAssignment::Hd { joint } => {
            check_sizes(joint, l_n + k_n, "joint")?;
            let rows = stack_rows(&ul_rows, &ch.h_dl);
            ReceivedTraining::Hd {
                y: training_block(&rows, joint, cfg, noise, rng),
            }
        }
    })
}

/// Simulates the training phases with receiver noise.
pub fn received_training<R: Rng + ?Sized>(
    ch: &ChannelSet,
    a: &TrainingAssignment,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<ReceivedTraining> {
    training_with(ch, a, cfg, true, rng)
}

/// Noise-free training blocks, for checking the estimator algebra.
pub fn received_training_noiseless(
    ch: &ChannelSet,
    a: &TrainingAssignment,
    cfg: &SystemConfig,
) -> Result<ReceivedTraining> {
    let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    training_with(ch, a, cfg, false, &mut unused)
}

/// LMMSE coefficient and error variance for every (UE, receiver) pair.
///
/// `beta` is U x R. Returns (coefficient, epsilon), both U x R.
fn lmmse_terms(beta: &RMat, a: &PilotAssignment, cfg: &SystemConfig) -> (RMat, RMat) {
    let tp = cfg.pilot_len as f64 * cfg.train_power;
    let amp = tp.sqrt();
    let (u_n, r_n) = beta.shape();
    let mut denom = RMat::from_element(a.num_pilots(), r_n, cfg.noise_power);
    for j in 0..u_n {
        let mut row = denom.row_mut(a.pilot_of[j]);
        row += tp * beta.row(j);
    }
    let coef = RMat::from_fn(u_n, r_n, |j, r| amp * beta[(j, r)] / denom[(a.pilot_of[j], r)]);
    let eps = RMat::from_fn(u_n, r_n, |j, r| {
        let b = beta[(j, r)];
        let d = denom[(a.pilot_of[j], r)];
        // b (1 - tp b / d) written to stay non-negative in floating point
        (b * (d - tp * b) / d).max(0.0)
    });
    (coef, eps)
}

/// Applies the LMMSE coefficients to a `tau x (R n_ant)` block, giving U x (R n_ant) rows.
fn lmmse_rows(y: &CMat, coef: &RMat, a: &PilotAssignment, n_ant: usize) -> CMat {
    let (u_n, r_n) = coef.shape();
    let mut out = CMat::zeros(u_n, r_n * n_ant);
    for j in 0..u_n {
        let i = a.pilot_of[j];
        for r in 0..r_n {
            let c = coef[(j, r)];
            for n in r * n_ant..(r + 1) * n_ant {
                out[(j, n)] = y[(i, n)] * c;
            }
        }
    }
    out
}

/// Closed-form estimation error variances.
pub fn error_variance(
    ls: &LargeScale,
    a: &TrainingAssignment,
    cfg: &SystemConfig,
) -> Result<ErrorVariances> {
    let (k_n, l_n) = ls.beta_cci.shape();
    Ok(match a {
        TrainingAssignment::Fd { ul, dl } => {
            check_sizes(ul, l_n, "UL")?;
            check_sizes(dl, k_n, "DL")?;
            let eps_ul = lmmse_terms(&ls.beta_ul.transpose(), ul, cfg).1.transpose();
            let eps_dl = lmmse_terms(&ls.beta_dl, dl, cfg).1;
            let eps_cci = lmmse_terms(&ls.beta_cci.transpose(), ul, cfg).1.transpose();
            ErrorVariances {
                eps_dl,
                eps_ul,
                eps_cci,
            }
        }
        TrainingAssignment::Hd { joint } => {
            check_sizes(joint, l_n + k_n, "joint")?;
            let beta = joint_beta(ls);
            let eps = lmmse_terms(&beta, joint, cfg).1;
            ErrorVariances {
                eps_ul: eps.rows(0, l_n).transpose(),
                eps_dl: eps.rows(l_n, k_n).into_owned(),
                eps_cci: ls.beta_cci.clone(),
            }
        }
    })
}

/// (L + K) x M gains, UL UEs first.
fn joint_beta(ls: &LargeScale) -> RMat {
    let (l_n, k_n, m_n) = (ls.beta_ul.ncols(), ls.beta_dl.nrows(), ls.beta_dl.ncols());
    let mut beta = RMat::zeros(l_n + k_n, m_n);
    beta.rows_mut(0, l_n).copy_from(&ls.beta_ul.transpose());
    beta.rows_mut(l_n, k_n).copy_from(&ls.beta_dl);
    beta
}

/// LMMSE estimates from received training, with their error variances.
pub fn lmmse_estimate(
    y: &ReceivedTraining,
    a: &TrainingAssignment,
    ls: &LargeScale,
    cfg: &SystemConfig,
) -> Result<EstimateSet> {
    let n_ant = cfg.antennas_per_ap;
    let (k_n, l_n) = ls.beta_cci.shape();
    match (y, a) {
        (ReceivedTraining::Fd { y_ul, y_dl, y_cci }, TrainingAssignment::Fd { ul, dl }) => {
            check_sizes(ul, l_n, "UL")?;
            check_sizes(dl, k_n, "DL")?;
            let (c_ul, eps_ul) = lmmse_terms(&ls.beta_ul.transpose(), ul, cfg);
            let (c_dl, eps_dl) = lmmse_terms(&ls.beta_dl, dl, cfg);
            let (c_cci, eps_cci) = lmmse_terms(&ls.beta_cci.transpose(), ul, cfg);
            Ok(EstimateSet {
                h_ul_hat: lmmse_rows(y_ul, &c_ul, ul, n_ant).adjoint(),
                h_dl_hat: lmmse_rows(y_dl, &c_dl, dl, n_ant),
                g_cci_hat: lmmse_rows(y_cci, &c_cci, ul, 1).transpose(),
                eps_dl,
                eps_ul: eps_ul.transpose(),
                eps_cci: eps_cci.transpose(),
            })
        }
        (ReceivedTraining::Hd { y }, TrainingAssignment::Hd { joint }) => {
            check_sizes(joint, l_n + k_n, "joint")?;
            let (c, eps) = lmmse_terms(&joint_beta(ls), joint, cfg);
            let rows = lmmse_rows(y, &c, joint, n_ant);
            Ok(EstimateSet {
                h_ul_hat: rows.rows(0, l_n).adjoint(),
                h_dl_hat: rows.rows(l_n, k_n).into_owned(),
                g_cci_hat: CMat::zeros(k_n, l_n),
                eps_dl: eps.rows(l_n, k_n).into_owned(),
                eps_ul: eps.rows(0, l_n).transpose(),
                eps_cci: ls.beta_cci.clone(),
            })
        }
        _ => Err(Error::Domain(
            "training signals and pilot assignment disagree on duplex mode".into(),
        )),
    }
}

/// Training followed by estimation.
pub fn estimate<R: Rng + ?Sized>(
    ch: &ChannelSet,
    ls: &LargeScale,
    a: &TrainingAssignment,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<EstimateSet> {
    let y = received_training(ch, a, cfg, rng)?;
    lmmse_estimate(&y, a, ls, cfg)
}

/// Per-UE normalized estimation error, linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Nmse {
    /// `sum_m eps / sum_m beta` per UE, UL UEs first then DL UEs.
    pub per_ue: Vec<f64>,
    /// `eps / beta` on each UE's strongest AP link, same order.
    pub strongest_link: Vec<f64>,
}

impl Nmse {
    pub fn mean(&self) -> f64 {
        mean(&self.per_ue)
    }

    pub fn max(&self) -> f64 {
        self.per_ue.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_db(&self) -> f64 {
        linear_to_db(self.mean())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Normalized MSE of the AP-side channel estimates. With equal antenna
/// counts per AP the antenna weights cancel.
pub fn nmse(eps: &ErrorVariances, ls: &LargeScale) -> Nmse {
    let mut per_ue = Vec::new();
    let mut strongest_link = Vec::new();
    let mut push = |e: Vec<f64>, b: Vec<f64>| {
        let total: f64 = b.iter().sum();
        per_ue.push(e.iter().sum::<f64>() / total);
        let best = (0..b.len())
            .max_by(|&x, &y| b[x].total_cmp(&b[y]))
            .unwrap_or(0);
        strongest_link.push(e.get(best).map_or(0.0, |e| e / b[best]));
    };
    for l in 0..ls.beta_ul.ncols() {
        push(
            eps.eps_ul.column(l).iter().copied().collect(),
            ls.beta_ul.column(l).iter().copied().collect(),
        );
    }
    for k in 0..ls.beta_dl.nrows() {
        push(
            eps.eps_dl.row(k).iter().copied().collect(),
            ls.beta_dl.row(k).iter().copied().collect(),
        );
    }
    Nmse {
        per_ue,
        strongest_link,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilots::PilotAssignment;
    use crate::scenario::{large_scale, sample_channels, sample_topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SystemConfig {
        SystemConfig {
            num_aps: 3,
            num_dl: 3,
            num_ul: 2,
            pilot_len: 2,
            ..SystemConfig::default()
        }
    }

    fn fd(ul: &[usize], dl: &[usize], tau: usize) -> TrainingAssignment {
        TrainingAssignment::Fd {
            ul: PilotAssignment::from_pilots(ul.to_vec(), tau, &vec![1.0; ul.len()]).unwrap(),
            dl: PilotAssignment::from_pilots(dl.to_vec(), tau, &vec![1.0; dl.len()]).unwrap(),
        }
    }

    fn world(cfg: &SystemConfig, seed: u64) -> (LargeScale, ChannelSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = sample_topology(cfg, &mut rng);
        let ls = large_scale(&topo, cfg, &mut rng).unwrap();
        let ch = sample_channels(&ls, cfg, &mut rng);
        (ls, ch)
    }

    #[test]
    fn eleven_over_twenty_one() {
        // beta = 1, tau p = 10, sigma^2 = 1, one co-pilot UE with beta = 1
        let cfg = SystemConfig {
            pilot_len: 1,
            train_power: 10.0,
            noise_power: 1.0,
            ..cfg()
        };
        let a = PilotAssignment::from_pilots(vec![0, 0], 1, &[1.0, 1.0]).unwrap();
        let (_, eps) = lmmse_terms(&RMat::from_element(2, 1, 1.0), &a, &cfg);
        assert!((eps[(0, 0)] - 11.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn collision_free_error_and_limits() {
        let cfg = cfg();
        let (ls, _) = world(&cfg, 1);
        let a = fd(&[0, 1], &[0, 1, 0], 2);
        let e = error_variance(&ls, &a, &cfg).unwrap();
        let tp = cfg.pilot_len as f64 * cfg.train_power;
        for m in 0..cfg.num_aps {
            let b = ls.beta_ul[(m, 1)];
            let want = b * (1.0 - tp * b / (tp * b + cfg.noise_power));
            assert!((e.eps_ul[(m, 1)] / want - 1.0).abs() < 1e-12);
        }
        let silent = SystemConfig {
            train_power: 1e-30,
            ..cfg.clone()
        };
        let e0 = error_variance(&ls, &a, &silent).unwrap();
        assert!((&e0.eps_dl - &ls.beta_dl).abs().max() <= 1e-12 * ls.beta_dl.max());
    }

    #[test]
    fn errors_bounded_by_gains() {
        let cfg = cfg();
        let (ls, _) = world(&cfg, 2);
        for a in [
            fd(&[0, 0], &[0, 0, 0], 2),
            fd(&[1, 0], &[1, 1, 0], 2),
            TrainingAssignment::Hd {
                joint: PilotAssignment::from_pilots(vec![0, 1, 0, 1, 1], 2, &[1.0; 5]).unwrap(),
            },
        ] {
            let e = error_variance(&ls, &a, &cfg).unwrap();
            for (eps, beta) in [
                (&e.eps_dl, &ls.beta_dl),
                (&e.eps_ul, &ls.beta_ul),
                (&e.eps_cci, &ls.beta_cci),
            ] {
                assert!(eps.iter().zip(beta.iter()).all(|(e, b)| *e >= 0.0 && e <= b));
            }
        }
    }

    #[test]
    fn noiseless_collision_free_recovers_channels() {
        let cfg = SystemConfig {
            noise_power: 1e-300,
            ..cfg()
        };
        let (ls, ch) = world(&cfg, 3);
        let a = fd(&[0, 1], &[0, 1, 2], 3);
        let cfg = SystemConfig { pilot_len: 3, ..cfg };
        let y = received_training_noiseless(&ch, &a, &cfg).unwrap();
        let es = lmmse_estimate(&y, &a, &ls, &cfg).unwrap();
        let rel = |x: &CMat, y: &CMat| (x - y).norm() / y.norm();
        assert!(rel(&es.h_dl_hat, &ch.h_dl) < 1e-12);
        assert!(rel(&es.h_ul_hat, &ch.h_ul) < 1e-12);
        assert!(rel(&es.g_cci_hat, &ch.g_cci) < 1e-12);
    }

    #[test]
    fn noiseless_single_ue_block() {
        let cfg = SystemConfig {
            num_dl: 1,
            num_ul: 1,
            ..cfg()
        };
        let (_, ch) = world(&cfg, 4);
        let a = fd(&[0], &[0], 2);
        let ReceivedTraining::Fd { y_dl, .. } = received_training_noiseless(&ch, &a, &cfg).unwrap()
        else {
            unreachable!()
        };
        let amp = pilot_amplitude(&cfg);
        assert_eq!(y_dl.row(0).into_owned(), ch.h_dl.row(0) * Complex64::new(amp, 0.0));
        assert!(y_dl.row(1).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn shared_pilot_zero_noise_mixes_channels() {
        let cfg = SystemConfig {
            noise_power: 1e-300,
            ..cfg()
        };
        let (ls, ch) = world(&cfg, 5);
        let a = fd(&[0, 0], &[0, 1, 1], 2);
        let y = received_training_noiseless(&ch, &a, &cfg).unwrap();
        let es = lmmse_estimate(&y, &a, &ls, &cfg).unwrap();
        // DL UEs 1 and 2 share a pilot: each estimate is beta_j / (beta_1 + beta_2) times the sum
        for n in 0..cfg.total_antennas() {
            let m = cfg.ap_of_antenna(n);
            let (b1, b2) = (ls.beta_dl[(1, m)], ls.beta_dl[(2, m)]);
            let want = (ch.h_dl[(1, n)] + ch.h_dl[(2, n)]) * (b1 / (b1 + b2));
            assert!((es.h_dl_hat[(1, n)] - want).norm() <= 1e-12 * want.norm());
        }
    }

    #[test]
    fn error_non_increasing_in_training_power() {
        let base = cfg();
        let (ls, _) = world(&base, 6);
        let a = fd(&[0, 0], &[1, 0, 1], 2);
        let mut prev: Option<ErrorVariances> = None;
        for db in (-20..=40).step_by(5) {
            let cfg = SystemConfig {
                train_power: crate::linalg::dbm_to_watts(db as f64),
                ..base.clone()
            };
            let e = error_variance(&ls, &a, &cfg).unwrap();
            if let Some(p) = &prev {
                assert!(e.eps_dl.iter().zip(p.eps_dl.iter()).all(|(x, y)| x <= y));
                assert!(e.eps_ul.iter().zip(p.eps_ul.iter()).all(|(x, y)| x <= y));
                assert!(e.eps_cci.iter().zip(p.eps_cci.iter()).all(|(x, y)| x <= y));
            }
            prev = Some(e);
        }
    }

    #[test]
    fn noise_only_training_has_noise_covariance() {
        let cfg = SystemConfig {
            noise_power: 2.0,
            ..cfg()
        };
        let (ls, mut ch) = world(&cfg, 7);
        ch.h_dl.fill(Complex64::new(0.0, 0.0));
        ch.h_ul.fill(Complex64::new(0.0, 0.0));
        ch.g_cci.fill(Complex64::new(0.0, 0.0));
        let a = fd(&[0, 1], &[0, 1, 0], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let (mut d00, mut d11, mut off) = (0.0, 0.0, Complex64::new(0.0, 0.0));
        for _ in 0..n {
            let ReceivedTraining::Fd { y_dl, .. } = received_training(&ch, &a, &cfg, &mut rng).unwrap()
            else {
                unreachable!()
            };
            d00 += y_dl[(0, 0)].norm_sqr();
            d11 += y_dl[(1, 0)].norm_sqr();
            off += y_dl[(0, 0)] * y_dl[(1, 0)].conj();
        }
        let n = n as f64;
        assert!((d00 / n / 2.0 - 1.0).abs() < 0.05);
        assert!((d11 / n / 2.0 - 1.0).abs() < 0.05);
        assert!(off.norm() / n < 0.1);
        let _ = ls;
    }

    #[test]
    fn nmse_extremes() {
        let cfg = cfg();
        let (ls, _) = world(&cfg, 9);
        let full = ErrorVariances {
            eps_dl: ls.beta_dl.clone(),
            eps_ul: ls.beta_ul.clone(),
            eps_cci: ls.beta_cci.clone(),
        };
        assert!(nmse(&full, &ls).mean_db().abs() < 1e-12);
        let tenth = ErrorVariances {
            eps_dl: &ls.beta_dl * 0.1,
            eps_ul: &ls.beta_ul * 0.1,
            eps_cci: &ls.beta_cci * 0.1,
        };
        let r = nmse(&tenth, &ls);
        assert!((r.mean_db() + 10.0).abs() < 1e-9);
        assert_eq!(r.per_ue.len(), 5);
        assert!(r.strongest_link.iter().all(|x| (x - 0.1).abs() < 1e-12));
    }

    #[test]
    fn mismatched_duplex_is_rejected() {
        let cfg = cfg();
        let (ls, ch) = world(&cfg, 10);
        let a = fd(&[0, 1], &[0, 1, 0], 2);
        let y = received_training_noiseless(&ch, &a, &cfg).unwrap();
        let hd = TrainingAssignment::Hd {
            joint: PilotAssignment::from_pilots(vec![0; 5], 2, &[1.0; 5]).unwrap(),
        };
        assert!(lmmse_estimate(&y, &hd, &ls, &cfg).is_err());
    }
}
