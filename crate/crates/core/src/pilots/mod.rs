//! Pilot assignment: heap-based load balancing, random baselines and exact oracles.
//!
//! The assignment objective is the largest summed effective weight on any
//! pilot, where UE `j` has weight `sum_m N_m tau p_tr beta_mj`.

mod assign;
mod heap;

pub use assign::{
    assign_pilots_heap, assign_pilots_heap_with, assign_pilots_naive, assign_pilots_random,
    assignment_cost, brute_force_optimal, lpt_bound, random_permutation, HeapStats,
    PilotAssignment, Weights,
};
pub use heap::{Heap, HeapKind};

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::{Duplex, LargeScale, SystemConfig};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UeSet {
    Ul,
    Dl,
    /// UL UEs first, then DL UEs.
    Joint,
}

pub fn effective_weights(ls: &LargeScale, cfg: &SystemConfig, set: UeSet) -> Result<Weights> {
    let scale = cfg.antennas_per_ap as f64 * cfg.pilot_len as f64 * cfg.train_power;
    let ul = || {
        ls.beta_ul
            .column_iter()
            .map(|c| scale * c.sum())
            .collect::<Vec<_>>()
    };
    let dl = || {
        ls.beta_dl
            .row_iter()
            .map(|r| scale * r.sum())
            .collect::<Vec<_>>()
    };
    Weights::new(match set {
        UeSet::Ul => ul(),
        UeSet::Dl => dl(),
        UeSet::Joint => {
            let mut v = ul();
            v.extend(dl());
            v
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotStrategy {
    HeapFd,
    HeapHd,
    RandFd,
    RandHd,
}

impl PilotStrategy {
    pub const ALL: [Self; 4] = [Self::HeapFd, Self::HeapHd, Self::RandFd, Self::RandHd];

    pub fn duplex(self) -> Duplex {
        match self {
            Self::HeapFd | Self::RandFd => Duplex::Fd,
            Self::HeapHd | Self::RandHd => Duplex::Hd,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::HeapFd => "heap_fd",
            Self::HeapHd => "heap_hd",
            Self::RandFd => "rand_fd",
            Self::RandHd => "rand_hd",
        }
    }

    pub fn assign<R: Rng + ?Sized>(
        self,
        ls: &LargeScale,
        cfg: &SystemConfig,
        rng: &mut R,
    ) -> Result<TrainingAssignment> {
        match self {
            Self::HeapFd => heap_fd_strategy(ls, cfg, rng),
            Self::HeapHd => heap_hd_strategy(ls, cfg, rng),
            Self::RandFd => Ok(TrainingAssignment::Fd {
                ul: assign_pilots_random(&effective_weights(ls, cfg, UeSet::Ul)?, cfg.pilot_len, rng)?,
                dl: assign_pilots_random(&effective_weights(ls, cfg, UeSet::Dl)?, cfg.pilot_len, rng)?,
            }),
            Self::RandHd => Ok(TrainingAssignment::Hd {
                joint: assign_pilots_random(
                    &effective_weights(ls, cfg, UeSet::Joint)?,
                    cfg.pilot_len,
                    rng,
                )?,
            }),
        }
    }
}

impl std::str::FromStr for PilotStrategy {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown pilot strategy {s:?}")))
    }
}

/// Pilot assignments for one training round.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingAssignment {
    /// UL UEs train in phase one, DL UEs in phase two.
    Fd {
        ul: PilotAssignment,
        dl: PilotAssignment,
    },
    /// All UEs train together; UL UEs occupy the first `L` slots.
    Hd { joint: PilotAssignment },
}

impl TrainingAssignment {
    pub fn duplex(&self) -> Duplex {
        match self {
            Self::Fd { .. } => Duplex::Fd,
            Self::Hd { .. } => Duplex::Hd,
        }
    }
}

/// Two independent runs: UL UEs for phase one, DL UEs for phase two.
pub fn heap_fd_strategy<R: Rng + ?Sized>(
    ls: &LargeScale,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<TrainingAssignment> {
    let ul = assign_pilots_heap(&effective_weights(ls, cfg, UeSet::Ul)?, cfg.pilot_len, rng)?;
    let dl = assign_pilots_heap(&effective_weights(ls, cfg, UeSet::Dl)?, cfg.pilot_len, rng)?;
    Ok(TrainingAssignment::Fd { ul, dl })
}

/// One joint run over all `K + L` UEs.
pub fn heap_hd_strategy<R: Rng + ?Sized>(
    ls: &LargeScale,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<TrainingAssignment> {
    let joint = assign_pilots_heap(&effective_weights(ls, cfg, UeSet::Joint)?, cfg.pilot_len, rng)?;
    Ok(TrainingAssignment::Hd { joint })
}

/// Writes `ue_index,pilot_index,beta_tilde,final_load`.
pub fn write_assignment_csv<W: Write>(out: W, a: &PilotAssignment, w: &Weights) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["ue_index", "pilot_index", "beta_tilde", "final_load"])?;
    for (j, &i) in a.pilot_of.iter().enumerate() {
        wtr.write_record([
            j.to_string(),
            i.to_string(),
            w.as_slice()[j].to_string(),
            a.loads[i].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;

    fn flat_ls(m: usize, k: usize, l: usize, beta: f64) -> LargeScale {
        LargeScale {
            beta_dl: RMat::from_element(k, m, beta),
            beta_ul: RMat::from_element(m, l, beta),
            beta_cci: RMat::from_element(k, l, beta),
            beta_aa: RMat::identity(m, m),
        }
    }

    #[test]
    fn weight_is_direct_product() {
        let cfg = SystemConfig {
            num_aps: 1,
            antennas_per_ap: 2,
            pilot_len: 2,
            train_power: 1.0,
            ..SystemConfig::default()
        };
        let w = effective_weights(&flat_ls(1, 1, 1, 0.5), &cfg, UeSet::Dl).unwrap();
        assert_eq!(w.as_slice(), [2.0]);
    }

    #[test]
    fn weights_scale_with_training_power() {
        let cfg = SystemConfig::default();
        let mut ls = flat_ls(3, 2, 4, 1e-9);
        ls.beta_ul[(1, 2)] = 3e-9;
        let a = effective_weights(&ls, &cfg, UeSet::Joint).unwrap();
        let doubled = SystemConfig {
            train_power: 2.0 * cfg.train_power,
            ..cfg
        };
        let b = effective_weights(&ls, &doubled, UeSet::Joint).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((y / x - 2.0).abs() < 1e-12);
        }
        // equal betas give equal weights, the boosted UL UE stands out
        assert_eq!(a.as_slice()[0], a.as_slice()[5]);
        assert!(a.as_slice()[2] > a.as_slice()[0]);
    }

    #[test]
    fn empty_set_is_an_error() {
        let cfg = SystemConfig::default();
        assert!(effective_weights(&flat_ls(2, 0, 3, 1.0), &cfg, UeSet::Dl).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in PilotStrategy::ALL {
            assert_eq!(s.name().parse::<PilotStrategy>().unwrap(), s);
        }
    }

    #[test]
    fn csv_export() {
        let w = Weights::new(vec![5.0, 3.0, 4.0]).unwrap();
        let a = assign_pilots_heap_with(&w, &[0, 1], None).unwrap();
        let mut buf = Vec::new();
        write_assignment_csv(&mut buf, &a, &w).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "ue_index,pilot_index,beta_tilde,final_load\n0,0,5,5\n1,1,3,7\n2,1,4,7\n"
        );
    }
}
