//! Robust ZF power allocation, AP association and spectral efficiency.

pub mod barrier;
mod sca;
mod surrogate;

pub use barrier::{ConvexProgram, QuadConstraint, Solution, SolverOptions};
pub use sca::{initialize_feasible, run_sca, ScaledModel, SolveState, TraceRow};
pub use surrogate::{surrogate_fr, surrogate_qu};

use std::fmt;

use num_complex::Complex64;

use crate::estimation::EstimateSet;
use crate::linalg::{CMat, RMat};
use crate::scenario::{ChannelSet, Duplex, SystemConfig};
use crate::zf::{
    dl_sinr_general, dl_sinr_true, ul_sinr_general, ul_sinr_true, BeamformerSet, LinkGains,
    ServiceMask, ZfOperators,
};
use crate::{Error, Result};

/// Regularizer in the signal-power ratio denominator.
pub const R_SP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Dl,
    Ul,
}

/// A UE whose SINR did not clear its floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnmetFloor {
    pub link: Link,
    pub index: usize,
    pub sinr: f64,
    pub floor: f64,
}

/// Why no feasible point was found.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityReport {
    pub reason: String,
    /// Smallest achievable common constraint violation; positive when infeasible.
    pub min_slack: f64,
    pub unmet: Vec<UnmetFloor>,
}

impl InfeasibilityReport {
    pub fn new(reason: impl Into<String>, min_slack: f64) -> Self {
        Self {
            reason: reason.into(),
            min_slack,
            unmet: Vec::new(),
        }
    }
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (min slack {:.3e}", self.reason, self.min_slack)?;
        if !self.unmet.is_empty() {
            write!(f, ", {} floors unmet", self.unmet.len())?;
        }
        write!(f, ")")
    }
}

/// Inputs shared by every optimization pass on one channel draw.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub es: &'a EstimateSet,
    /// N x N inter-AP channel seen by the UL receivers.
    pub g_aa: &'a CMat,
    pub cfg: &'a SystemConfig,
    pub duplex: Duplex,
}

/// Result of one optimization pass.
#[derive(Debug, Clone)]
pub struct Design {
    pub mask: Option<ServiceMask>,
    pub zf: ZfOperators,
    pub gains: LinkGains,
    pub state: SolveState,
}

impl Design {
    pub fn beams(&self) -> BeamformerSet {
        BeamformerSet {
            w: self.zf.precoders(&self.state.omega),
            a: self.zf.a_zf.clone(),
            p: self.state.p.clone(),
        }
    }
}

/// Builds ZF operators (confined to `mask` if given) and runs the inner
/// approximation from a feasible start.
pub fn optimize(problem: &Problem<'_>, mask: Option<&ServiceMask>) -> Result<Design> {
    let Problem {
        es,
        g_aa,
        cfg,
        duplex,
    } = *problem;
    let zf = match mask {
        Some(mask) => ZfOperators::with_support(es, mask, cfg)?,
        None => ZfOperators::new(es)?,
    };
    let gains = LinkGains::new(&zf, es, g_aa, cfg, duplex);
    let model = ScaledModel::new(&gains, cfg)?;
    let init = initialize_feasible(&model, cfg)?;
    let state = run_sca(&model, init, cfg)?;
    Ok(Design {
        mask: mask.cloned(),
        zf,
        gains,
        state,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub alpha: ServiceMask,
    /// K x M signal-power ratios.
    pub r_sp: RMat,
}

impl Association {
    /// Served (UE, AP) pairs.
    pub fn density(&self) -> f64 {
        let total = self.alpha.len();
        if total == 0 {
            return 0.0;
        }
        self.alpha.iter().filter(|&&a| a).count() as f64 / total as f64
    }
}

/// `alpha_km = 1` iff AP m carries more than the threshold share of UE k's
/// received signal power.
///
/// Powers are measured in units of the noise power so the regularizer is
/// small relative to any useful link.
pub fn associate(w: &CMat, es: &EstimateSet, cfg: &SystemConfig) -> Association {
    let k_n = w.ncols();
    let m_n = cfg.num_aps;
    let threshold = cfg.assoc_threshold();
    let mut r_sp = RMat::zeros(k_n, m_n);
    for k in 0..k_n {
        let parts: Vec<Complex64> = (0..m_n)
            .map(|m| cfg.antennas(m).map(|i| es.h_dl_hat[(k, i)] * w[(i, k)]).sum())
            .collect();
        let total: Complex64 = parts.iter().sum();
        let denom = total.norm_sqr() / cfg.noise_power + R_SP_EPS;
        for (m, part) in parts.iter().enumerate() {
            r_sp[(k, m)] = part.norm_sqr() / cfg.noise_power / denom;
        }
    }
    Association {
        alpha: r_sp.map(|r| r > threshold),
        r_sp,
    }
}

/// Outcome of re-optimizing on a fixed serving pattern.
#[derive(Debug, Clone)]
pub struct Refined {
    pub design: Design,
    pub assoc: Association,
    /// Re-optimizations performed.
    pub rounds: usize,
    /// Set when confining the precoders failed and the unconfined design was kept.
    pub fallback: bool,
    /// Whether associating the final precoders reproduces `assoc.alpha`.
    pub idempotent: bool,
}

/// Fixes the serving pattern found by the first pass and re-optimizes.
///
/// Pruned pairs have zero precoder blocks afterwards, so each round can only
/// shrink the pattern; the loop stops once it reproduces itself.
pub fn refine_with_association(problem: &Problem<'_>, first: Design) -> Result<Refined> {
    let cfg = problem.cfg;
    let mut assoc = associate(&first.beams().w, problem.es, cfg);
    let mut current = first;
    let mut rounds = 0;
    if assoc.alpha.iter().all(|&a| a) {
        return Ok(Refined {
            design: current,
            assoc,
            rounds,
            fallback: false,
            idempotent: true,
        });
    }
    for _ in 0..=cfg.num_aps {
        let design = match optimize(problem, Some(&assoc.alpha)) {
            Ok(d) => d,
            Err(Error::RankDeficient { .. } | Error::Infeasible(_)) => {
                // keep the last design and the pattern it was built on
                let mut kept = associate(&current.beams().w, problem.es, cfg);
                let idempotent = current.mask.as_ref().is_none_or(|m| *m == kept.alpha);
                kept.alpha = current
                    .mask
                    .clone()
                    .unwrap_or_else(|| ServiceMask::from_element(assoc.alpha.nrows(), cfg.num_aps, true));
                return Ok(Refined {
                    design: current,
                    assoc: kept,
                    rounds,
                    fallback: true,
                    idempotent,
                });
            }
            Err(e) => return Err(e),
        };
        rounds += 1;
        let next = associate(&design.beams().w, problem.es, cfg);
        current = design;
        if next.alpha == assoc.alpha {
            return Ok(Refined {
                design: current,
                assoc: next,
                rounds,
                fallback: false,
                idempotent: true,
            });
        }
        assoc = next;
    }
    Ok(Refined {
        design: current,
        assoc,
        rounds,
        fallback: false,
        idempotent: false,
    })
}

/// First pass followed by association refinement.
pub fn solve_robust(problem: &Problem<'_>) -> Result<Refined> {
    let first = optimize(problem, None)?;
    refine_with_association(problem, first)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    pub dl_sinr: Vec<f64>,
    pub ul_sinr: Vec<f64>,
    /// Sum of `ln(1 + SINR)` over all UEs.
    pub f_nats: f64,
    pub f_bits: f64,
    pub dl_rates_bits: Vec<f64>,
    pub ul_rates_bits: Vec<f64>,
}

impl SeReport {
    pub fn from_sinrs(dl_sinr: Vec<f64>, ul_sinr: Vec<f64>) -> Self {
        let bits = |v: &[f64]| v.iter().map(|g| g.ln_1p() / std::f64::consts::LN_2).collect();
        let f_nats = dl_sinr.iter().chain(&ul_sinr).map(|g| g.ln_1p()).sum::<f64>();
        Self {
            dl_rates_bits: bits(&dl_sinr),
            ul_rates_bits: bits(&ul_sinr),
            f_bits: f_nats / std::f64::consts::LN_2,
            f_nats,
            dl_sinr,
            ul_sinr,
        }
    }

    /// Smallest per-UE rate in bits/s/Hz.
    pub fn min_rate_bits(&self) -> f64 {
        self.dl_rates_bits
            .iter()
            .chain(&self.ul_rates_bits)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sum SE from the estimate-based SINRs, errors treated as noise.
pub fn spectral_efficiency(
    beams: &BeamformerSet,
    alpha: Option<&ServiceMask>,
    problem: &Problem<'_>,
) -> SeReport {
    let Problem {
        es,
        g_aa,
        cfg,
        duplex,
    } = *problem;
    SeReport::from_sinrs(
        dl_sinr_general(&beams.w, &beams.p, alpha, es, cfg, duplex),
        ul_sinr_general(&beams.w, &beams.p, alpha, &beams.a, es, g_aa, cfg, duplex),
    )
}

/// Sum SE the beams achieve on the true channels.
pub fn spectral_efficiency_true(
    beams: &BeamformerSet,
    alpha: Option<&ServiceMask>,
    ch: &ChannelSet,
    cfg: &SystemConfig,
    duplex: Duplex,
) -> SeReport {
    SeReport::from_sinrs(
        dl_sinr_true(&beams.w, &beams.p, alpha, ch, cfg, duplex),
        ul_sinr_true(&beams.w, &beams.p, alpha, &beams.a, ch, cfg, duplex),
    )
}

/// Fraction of the coherence block left for data.
pub fn overhead_factor(training_len: usize, coherence: usize) -> Result<f64> {
    if training_len >= coherence {
        return Err(Error::Config(format!(
            "training length {training_len} leaves no data in a block of {coherence}"
        )));
    }
    Ok((coherence - training_len) as f64 / coherence as f64)
}

/// `f_se` scaled by the training overhead of `duplex`.
pub fn effective_se(f_se: f64, cfg: &SystemConfig, duplex: Duplex) -> Result<f64> {
    Ok(overhead_factor(cfg.training_len(duplex), cfg.coherence)? * f_se)
}
