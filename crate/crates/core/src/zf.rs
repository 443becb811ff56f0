//! Zero-forcing transmission and SINR evaluation.
//!
//! DL precoders are `W = H_zf diag(omega)^(1/2)` with `H_zf` the right
//! pseudo-inverse of the stacked DL estimates. The UL receiver is the left
//! pseudo-inverse of the UL estimates. Every SINR treats estimation errors as
//! noise. Signals combined across APs add coherently, so a ZF precoder gives
//! `|h_k w_k|^2 = omega_k` exactly.
//!
//! Half-duplex operation serves DL and UL in separate slots, so it drops the
//! cross-link, self-interference and inter-AP terms.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::estimation::EstimateSet;
use crate::linalg::{left_pinv, norm_sqr_col, norm_sqr_row, right_pinv, CMat, RMat};
use crate::scenario::{ChannelSet, Duplex, SystemConfig};
use crate::{Error, Result};

/// K x M serving pattern; `true` means the AP serves the DL UE.
pub type ServiceMask = DMatrix<bool>;

#[derive(Debug, Clone, PartialEq)]
pub struct ZfOperators {
    /// N x K, column k is `h_k^zf`.
    pub h_zf: CMat,
    /// L x N, row l is `a_l^zf`.
    pub a_zf: CMat,
}

impl ZfOperators {
    pub fn new(es: &EstimateSet) -> Result<Self> {
        Ok(Self {
            h_zf: right_pinv(&es.h_dl_hat)?,
            a_zf: left_pinv(&es.h_ul_hat)?,
        })
    }

    /// ZF precoders confined to each UE's serving antennas.
    ///
    /// Column k solves `H_d w = e_k` with `w` supported only on the APs that
    /// serve UE k, so non-serving blocks are exactly zero while interference
    /// towards every other UE is still nulled.
    pub fn with_support(es: &EstimateSet, mask: &ServiceMask, cfg: &SystemConfig) -> Result<Self> {
        let h = &es.h_dl_hat;
        let (k_n, n) = h.shape();
        let mut h_zf = CMat::zeros(n, k_n);
        for k in 0..k_n {
            let support: Vec<usize> = (0..n)
                .filter(|&i| mask[(k, cfg.ap_of_antenna(i))])
                .collect();
            let sub = h.select_columns(&support);
            let pinv = right_pinv(&sub)?;
            for (row, &i) in support.iter().enumerate() {
                h_zf[(i, k)] = pinv[(row, k)];
            }
        }
        Ok(Self {
            h_zf,
            a_zf: left_pinv(&es.h_ul_hat)?,
        })
    }

    pub fn num_dl(&self) -> usize {
        self.h_zf.ncols()
    }

    pub fn num_ul(&self) -> usize {
        self.a_zf.nrows()
    }

    /// `W = H_zf diag(sqrt(omega))`.
    pub fn precoders(&self, omega: &[f64]) -> CMat {
        let mut w = self.h_zf.clone();
        for (k, mut col) in w.column_iter_mut().enumerate() {
            col *= Complex64::new(omega[k].max(0.0).sqrt(), 0.0);
        }
        w
    }

    /// M x K matrix of `||B_m h_k^zf||^2`.
    pub fn ap_cost(&self, cfg: &SystemConfig) -> RMat {
        block_norms(&self.h_zf, cfg)
    }
}

/// M x K per-AP block energies of the columns of an N x K matrix.
pub fn block_norms(w: &CMat, cfg: &SystemConfig) -> RMat {
    RMat::from_fn(cfg.num_aps, w.ncols(), |m, k| {
        cfg.antennas(m).map(|i| w[(i, k)].norm_sqr()).sum()
    })
}

/// Transmit power of AP `m` for DL weights `omega`.
pub fn per_ap_power(omega: &[f64], zf: &ZfOperators, cfg: &SystemConfig, m: usize) -> f64 {
    omega
        .iter()
        .enumerate()
        .map(|(k, w)| w * cfg.antennas(m).map(|i| zf.h_zf[(i, k)].norm_sqr()).sum::<f64>())
        .sum()
}

/// Coefficients of the ZF SINRs, which are linear-fractional in `(omega, p)`:
///
/// ```text
/// dl_k = omega_k g_k / (sum_k' e[k,k'] omega_k' + sum_l c[k,l] p_l + n_k)
/// ul_l = p_l g_l / (sum_l' f[l,l'] p_l' + sum_k s[l,k] omega_k + n_l)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub g_dl: Vec<f64>,
    /// K x K estimation-error leakage.
    pub e_dl: RMat,
    /// K x L cross-link interference.
    pub c_cci: RMat,
    pub n_dl: Vec<f64>,
    pub g_ul: Vec<f64>,
    /// L x L estimation-error leakage.
    pub f_ul: RMat,
    /// L x K self and inter-AP interference.
    pub s_aa: RMat,
    pub n_ul: Vec<f64>,
    /// M x K per-AP power per unit of `omega_k`.
    pub ap_cost: RMat,
}

impl LinkGains {
    pub fn new(
        zf: &ZfOperators,
        es: &EstimateSet,
        g_aa: &CMat,
        cfg: &SystemConfig,
        duplex: Duplex,
    ) -> Self {
        let (k_n, l_n) = (zf.num_dl(), zf.num_ul());
        let sigma2 = cfg.noise_power;
        let fd = duplex == Duplex::Fd;
        let ap_cost = zf.ap_cost(cfg);

        let g_dl = (0..k_n)
            .map(|k| (es.h_dl_hat.row(k) * zf.h_zf.column(k))[(0, 0)].norm_sqr())
            .collect();
        // error of UE k's own channel leaks every UE's beam: eps_km ||w_k'm||^2
        let e_dl = RMat::from_fn(k_n, k_n, |k, kp| {
            (0..cfg.num_aps).map(|m| es.eps_dl[(k, m)] * ap_cost[(m, kp)]).sum()
        });
        let c_cci = RMat::from_fn(k_n, l_n, |k, l| {
            if fd {
                es.g_cci_hat[(k, l)].norm_sqr() + es.eps_cci[(k, l)]
            } else {
                0.0
            }
        });

        let g_ul = (0..l_n)
            .map(|l| (zf.a_zf.row(l) * es.h_ul_hat.column(l))[(0, 0)].norm_sqr())
            .collect();
        let a_blocks = block_norms(&zf.a_zf.transpose(), cfg); // M x L, ||a_ml||^2
        let f_ul = RMat::from_fn(l_n, l_n, |l, lp| {
            (0..cfg.num_aps).map(|m| es.eps_ul[(m, lp)] * a_blocks[(m, l)]).sum()
        });
        let s_aa = if fd && k_n > 0 && l_n > 0 {
            (&zf.a_zf * g_aa * &zf.h_zf).map(|z| z.norm_sqr())
        } else {
            RMat::zeros(l_n, k_n)
        };
        let n_ul = (0..l_n).map(|l| sigma2 * norm_sqr_row(&zf.a_zf, l)).collect();

        Self {
            g_dl,
            e_dl,
            c_cci,
            n_dl: vec![sigma2; k_n],
            g_ul,
            f_ul,
            s_aa,
            n_ul,
            ap_cost,
        }
    }

    pub fn num_dl(&self) -> usize {
        self.g_dl.len()
    }

    pub fn num_ul(&self) -> usize {
        self.g_ul.len()
    }

    pub fn dl_interference(&self, omega: &[f64], p: &[f64], k: usize) -> f64 {
        let err: f64 = (0..self.num_dl()).map(|kp| self.e_dl[(k, kp)] * omega[kp]).sum();
        let cci: f64 = (0..self.num_ul()).map(|l| self.c_cci[(k, l)] * p[l]).sum();
        err + cci + self.n_dl[k]
    }

    pub fn ul_interference(&self, omega: &[f64], p: &[f64], l: usize) -> f64 {
        let err: f64 = (0..self.num_ul()).map(|lp| self.f_ul[(l, lp)] * p[lp]).sum();
        let si: f64 = (0..self.num_dl()).map(|k| self.s_aa[(l, k)] * omega[k]).sum();
        err + si + self.n_ul[l]
    }

    pub fn dl_sinr(&self, omega: &[f64], p: &[f64]) -> Vec<f64> {
        (0..self.num_dl())
            .map(|k| omega[k] * self.g_dl[k] / self.dl_interference(omega, p, k))
            .collect()
    }

    pub fn ul_sinr(&self, omega: &[f64], p: &[f64]) -> Vec<f64> {
        (0..self.num_ul())
            .map(|l| p[l] * self.g_ul[l] / self.ul_interference(omega, p, l))
            .collect()
    }

    pub fn ap_powers(&self, omega: &[f64]) -> Vec<f64> {
        (0..self.ap_cost.nrows())
            .map(|m| (0..self.num_dl()).map(|k| self.ap_cost[(m, k)] * omega[k]).sum())
            .collect()
    }
}

/// DL ZF SINRs for weights `omega` and UL powers `p`.
pub fn dl_sinr_zf(omega: &[f64], p: &[f64], gains: &LinkGains) -> Vec<f64> {
    gains.dl_sinr(omega, p)
}

/// UL ZF SINRs for weights `omega` and UL powers `p`.
pub fn ul_sinr_zf(omega: &[f64], p: &[f64], gains: &LinkGains) -> Vec<f64> {
    gains.ul_sinr(omega, p)
}

/// Precoders with non-serving blocks removed.
pub fn apply_mask(w: &CMat, mask: Option<&ServiceMask>, cfg: &SystemConfig) -> CMat {
    let mut w = w.clone();
    if let Some(mask) = mask {
        for k in 0..w.ncols() {
            for m in 0..cfg.num_aps {
                if !mask[(k, m)] {
                    for i in cfg.antennas(m) {
                        w[(i, k)] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
    w
}

fn dl_sinr_with(
    h: &CMat,
    eps_dl: Option<&RMat>,
    g_cci: &CMat,
    eps_cci: Option<&RMat>,
    w: &CMat,
    p: &[f64],
    cfg: &SystemConfig,
    duplex: Duplex,
) -> Vec<f64> {
    let k_n = w.ncols();
    let hw = h * w; // K x K effective gains
    let blocks = block_norms(w, cfg);
    (0..k_n)
        .map(|k| {
            let signal = hw[(k, k)].norm_sqr();
            if signal == 0.0 {
                return 0.0;
            }
            let mui: f64 = (0..k_n).filter(|&kp| kp != k).map(|kp| hw[(k, kp)].norm_sqr()).sum();
            let err: f64 = eps_dl.map_or(0.0, |e| {
                (0..cfg.num_aps).map(|m| e[(k, m)] * blocks.row(m).sum()).sum()
            });
            let cci: f64 = if duplex == Duplex::Fd {
                p.iter()
                    .enumerate()
                    .map(|(l, pl)| pl * (g_cci[(k, l)].norm_sqr() + eps_cci.map_or(0.0, |e| e[(k, l)])))
                    .sum()
            } else {
                0.0
            };
            signal / (mui + err + cci + cfg.noise_power)
        })
        .collect()
}

/// General DL SINRs for arbitrary precoders `w` (N x K), estimate-based.
pub fn dl_sinr_general(
    w: &CMat,
    p: &[f64],
    mask: Option<&ServiceMask>,
    es: &EstimateSet,
    cfg: &SystemConfig,
    duplex: Duplex,
) -> Vec<f64> {
    let w = apply_mask(w, mask, cfg);
    dl_sinr_with(
        &es.h_dl_hat,
        Some(&es.eps_dl),
        &es.g_cci_hat,
        Some(&es.eps_cci),
        &w,
        p,
        cfg,
        duplex,
    )
}

/// DL SINRs seen through the true channels, with no error terms.
pub fn dl_sinr_true(
    w: &CMat,
    p: &[f64],
    mask: Option<&ServiceMask>,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    duplex: Duplex,
) -> Vec<f64> {
    let w = apply_mask(w, mask, cfg);
    dl_sinr_with(&ch.h_dl, None, &ch.g_cci, None, &w, p, cfg, duplex)
}

fn ul_sinr_with(
    h: &CMat,
    eps_ul: Option<&RMat>,
    a: &CMat,
    p: &[f64],
    w: &CMat,
    g_aa: &CMat,
    cfg: &SystemConfig,
    duplex: Duplex,
) -> Vec<f64> {
    let l_n = a.nrows();
    let ah = a * h; // L x L
    let a_blocks = block_norms(&a.transpose(), cfg); // M x L
    let si = if duplex == Duplex::Fd && w.ncols() > 0 {
        (a * g_aa * w).map(|z| z.norm_sqr())
    } else {
        RMat::zeros(l_n, w.ncols())
    };
    (0..l_n)
        .map(|l| {
            let signal = p[l] * ah[(l, l)].norm_sqr();
            if signal == 0.0 {
                return 0.0;
            }
            let mui: f64 = (0..l_n)
                .filter(|&lp| lp != l)
                .map(|lp| p[lp] * ah[(l, lp)].norm_sqr())
                .sum();
            let err: f64 = eps_ul.map_or(0.0, |e| {
                (0..l_n)
                    .map(|lp| p[lp] * (0..cfg.num_aps).map(|m| e[(m, lp)] * a_blocks[(m, l)]).sum::<f64>())
                    .sum()
            });
            let noise = cfg.noise_power * norm_sqr_row(a, l);
            signal / (mui + err + si.row(l).sum() + noise)
        })
        .collect()
}

/// General UL SINRs for combiner rows `a` (L x N), estimate-based.
#[allow(clippy::too_many_arguments)]
pub fn ul_sinr_general(
    w: &CMat,
    p: &[f64],
    mask: Option<&ServiceMask>,
    a: &CMat,
    es: &EstimateSet,
    g_aa: &CMat,
    cfg: &SystemConfig,
    duplex: Duplex,
) -> Vec<f64> {
    let w = apply_mask(w, mask, cfg);
    ul_sinr_with(&es.h_ul_hat, Some(&es.eps_ul), a, p, &w, g_aa, cfg, duplex)
}

/// UL SINRs seen through the true channels.
#[allow(clippy::too_many_arguments)]
pub fn ul_sinr_true(
    w: &CMat,
    p: &[f64],
    mask: Option<&ServiceMask>,
    a: &CMat,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    duplex: Duplex,
) -> Vec<f64> {
    let w = apply_mask(w, mask, cfg);
    ul_sinr_with(&ch.h_ul, None, a, p, &w, &ch.g_aa, cfg, duplex)
}

/// Transmit and receive beams for one channel use.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    /// N x K DL precoders.
    pub w: CMat,
    /// L x N UL combiners.
    pub a: CMat,
    /// UL powers, watts.
    pub p: Vec<f64>,
}

/// Matched-filter baseline: every AP splits its budget equally over the DL
/// UEs along the conjugate of its own estimates, UL UEs transmit at full power.
pub fn mrt_mrc_beams(es: &EstimateSet, cfg: &SystemConfig) -> BeamformerSet {
    let (k_n, n) = es.h_dl_hat.shape();
    let per_ue = if k_n > 0 {
        cfg.ap_power_max() / k_n as f64
    } else {
        0.0
    };
    let mut w = CMat::zeros(n, k_n);
    for k in 0..k_n {
        for m in 0..cfg.num_aps {
            let r = cfg.antennas(m);
            let norm2: f64 = r.clone().map(|i| es.h_dl_hat[(k, i)].norm_sqr()).sum();
            if norm2 > 0.0 {
                let scale = (per_ue / norm2).sqrt();
                for i in r {
                    w[(i, k)] = es.h_dl_hat[(k, i)].conj() * scale;
                }
            }
        }
    }
    BeamformerSet {
        w,
        a: es.h_ul_hat.adjoint(),
        p: vec![cfg.ul_power_max; es.h_ul_hat.ncols()],
    }
}

/// Fails if any column of `w` has no energy, which cannot carry a stream.
pub fn check_nonzero_columns(w: &CMat) -> Result<()> {
    match (0..w.ncols()).find(|&k| norm_sqr_col(w, k) == 0.0) {
        Some(k) => Err(Error::Domain(format!("precoder {k} is identically zero"))),
        None => Ok(()),
    }
}
