use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{nmse_trial, run_trial_on, sample_draw, NmseRecord, Scheme, TrialRecord, Transmission};
use crate::linalg::linear_to_db;
use crate::optimizer::{solve_robust, Problem};
use crate::pilots::PilotStrategy;
use crate::scenario::{distance, Duplex, SystemConfig};
use crate::{Error, Result};

/// Documents how half-duplex SE is credited; written into every SE CSV header.
const HD_CONVENTION: &str = "hd: DL and UL in orthogonal halves, no SI/CCI/inter-AP terms, \
                             sum SE halved, overhead (tau_c - tau)/tau_c";

/// Hex SHA-256 of the canonical TOML form of `cfg`.
pub fn config_hash(cfg: &SystemConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml_string().as_bytes()))
}

/// Grid of `K = L` values and pilot lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub ue_counts: Vec<usize>,
    pub taus: Vec<usize>,
    pub trials: usize,
}

impl SweepGrid {
    fn configs(&self, cfg: &SystemConfig) -> Result<Vec<SystemConfig>> {
        let mut out = Vec::new();
        for &tau in &self.taus {
            for &n in &self.ue_counts {
                let c = SystemConfig {
                    num_dl: n,
                    num_ul: n,
                    pilot_len: tau,
                    ..cfg.clone()
                };
                c.validate()?;
                out.push(c);
            }
        }
        Ok(out)
    }
}

/// One record per (grid point, strategy, trial), in that order.
pub fn nmse_sweep(
    cfg: &SystemConfig,
    grid: &SweepGrid,
    strategies: &[PilotStrategy],
) -> Result<Vec<NmseRecord>> {
    let configs = grid.configs(cfg)?;
    let jobs: Vec<(&SystemConfig, PilotStrategy, u64)> = configs
        .iter()
        .flat_map(|c| {
            strategies
                .iter()
                .flat_map(move |&s| (0..grid.trials as u64).map(move |t| (c, s, t)))
        })
        .collect();
    jobs.into_par_iter()
        .map(|(c, s, t)| nmse_trial(c, s, t))
        .collect()
}

/// One record per (grid point, scheme, trial), in that order.
pub fn se_sweep(cfg: &SystemConfig, grid: &SweepGrid, schemes: &[Scheme]) -> Result<Vec<TrialRecord>> {
    let configs = grid.configs(cfg)?;
    let points: Vec<(&SystemConfig, u64)> = configs
        .iter()
        .flat_map(|c| (0..grid.trials as u64).map(move |t| (c, t)))
        .collect();
    // every scheme reuses the draw of its trial
    let per_point: Vec<Vec<TrialRecord>> = points
        .into_par_iter()
        .map(|(c, t)| {
            let draw = sample_draw(c, t)?;
            schemes
                .par_iter()
                .map(|&s| run_trial_on(c, s, t, &draw))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let trials = grid.trials.max(1);
    let mut out = Vec::with_capacity(per_point.len() * schemes.len());
    for chunk in per_point.chunks(trials) {
        for i in 0..schemes.len() {
            out.extend(chunk.iter().map(|recs| recs[i].clone()));
        }
    }
    Ok(out)
}

fn header<W: Write>(out: &mut W, cfg: &SystemConfig, extra: &str) -> Result<()> {
    writeln!(out, "# config_sha256={}{}", config_hash(cfg), extra)?;
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct NmseRow<'a> {
    scheme: &'a str,
    num_dl: usize,
    num_ul: usize,
    tau: usize,
    trial: u64,
    seed: u64,
    nmse_db: f64,
    nmse_strongest_db: f64,
    nmse_per_ue_db: String,
}

/// Per-trial NMSE rows; `nmse_per_ue_db` lists UL UEs then DL UEs, `;`-separated.
pub fn write_nmse_csv<W: Write>(mut out: W, cfg: &SystemConfig, records: &[NmseRecord]) -> Result<()> {
    header(&mut out, cfg, "")?;
    let mut wtr = csv::Writer::from_writer(out);
    for r in records {
        let per_ue: Vec<f64> = r.nmse.per_ue.iter().copied().map(linear_to_db).collect();
        wtr.serialize(NmseRow {
            scheme: r.strategy.name(),
            num_dl: r.num_dl,
            num_ul: r.num_ul,
            tau: r.tau,
            trial: r.trial,
            seed: r.seed,
            nmse_db: r.mean_db(),
            nmse_strongest_db: linear_to_db(mean(&r.nmse.strongest_link)),
            nmse_per_ue_db: join(&per_ue),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SeRow<'a> {
    scheme: &'a str,
    num_dl: usize,
    num_ul: usize,
    tau: usize,
    trial: u64,
    seed: u64,
    feasible: bool,
    f_se: f64,
    f_se_true: f64,
    overhead: f64,
    effective_se: f64,
    effective_se_true: f64,
    min_rate_bits: f64,
    association_density: f64,
    sca_iterations: usize,
    converged: bool,
    fallback: bool,
    nmse_db: f64,
    per_ap_power_w: String,
    note: &'a str,
}

/// Per-trial SE rows. Infeasible trials carry zero SE and a note.
pub fn write_se_csv<W: Write>(mut out: W, cfg: &SystemConfig, records: &[TrialRecord]) -> Result<()> {
    header(&mut out, cfg, &format!(" {HD_CONVENTION}"))?;
    let mut wtr = csv::Writer::from_writer(out);
    for r in records {
        let name = r.scheme.to_string();
        let lin: Vec<f64> = r.nmse_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
        wtr.serialize(SeRow {
            scheme: &name,
            num_dl: r.num_dl,
            num_ul: r.num_ul,
            tau: r.tau,
            trial: r.trial,
            seed: r.seed,
            feasible: r.feasible,
            f_se: r.f_se,
            f_se_true: r.f_se_true,
            overhead: r.overhead,
            effective_se: r.effective_se,
            effective_se_true: r.effective_se_true,
            min_rate_bits: r.min_rate_bits,
            association_density: r.association_density,
            sca_iterations: r.sca_iterations,
            converged: r.converged,
            fallback: r.fallback,
            nmse_db: linear_to_db(mean(&lin)),
            per_ap_power_w: join(&r.per_ap_power),
            note: &r.note,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean and 95% normal-approximation half width.
fn mean_ci(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, 1.96 * (var / v.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmseSummary {
    pub scheme: String,
    pub num_ues: usize,
    pub tau: usize,
    pub trials: usize,
    /// Linear NMSE averaged over UEs and trials, then in dB.
    pub nmse_db: f64,
    /// Per-trial dB values averaged.
    pub nmse_db_mean_of_db: f64,
    /// Strongest-link NMSE averaged over UEs and trials, in dB.
    pub nmse_strongest_db: f64,
}

pub fn summarize_nmse(records: &[NmseRecord]) -> Vec<NmseSummary> {
    let mut groups: BTreeMap<(usize, usize, &str), Vec<&NmseRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.tau, r.num_dl, r.strategy.name())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((tau, n, name), rs)| {
            let lin: Vec<f64> = rs.iter().map(|r| r.nmse.mean()).collect();
            let db: Vec<f64> = rs.iter().map(|r| r.mean_db()).collect();
            let strongest: Vec<f64> = rs.iter().map(|r| mean(&r.nmse.strongest_link)).collect();
            NmseSummary {
                scheme: name.to_string(),
                num_ues: n,
                tau,
                trials: rs.len(),
                nmse_db: linear_to_db(mean(&lin)),
                nmse_db_mean_of_db: mean(&db),
                nmse_strongest_db: linear_to_db(mean(&strongest)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeSummary {
    pub scheme: String,
    pub num_ues: usize,
    pub tau: usize,
    pub trials: usize,
    pub infeasible_fraction: f64,
    /// Means over feasible trials only.
    pub f_se: f64,
    pub effective_se: f64,
    pub effective_se_ci95: f64,
    pub effective_se_true: f64,
}

pub fn summarize_se(records: &[TrialRecord]) -> Vec<SeSummary> {
    let mut groups: BTreeMap<(usize, usize, String), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.tau, r.num_dl, r.scheme.to_string()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((tau, n, name), rs)| {
            let ok: Vec<&&TrialRecord> = rs.iter().filter(|r| r.feasible).collect();
            let pick = |f: fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (eff, ci) = mean_ci(&pick(|r| r.effective_se));
            SeSummary {
                scheme: name,
                num_ues: n,
                tau,
                trials: rs.len(),
                infeasible_fraction: (rs.len() - ok.len()) as f64 / rs.len() as f64,
                f_se: mean(&pick(|r| r.f_se)),
                effective_se: eff,
                effective_se_ci95: ci,
                effective_se_true: mean(&pick(|r| r.effective_se_true)),
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write, T: Serialize>(mut out: W, cfg: &SystemConfig, rows: &[T]) -> Result<()> {
    header(&mut out, cfg, "")?;
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row of the service map. `kind` is `ap`, `dl_ue` or `link`; fields
/// that do not apply to a kind are empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapRow {
    pub kind: &'static str,
    pub ap_index: Option<usize>,
    pub ue_index: Option<usize>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub served_count: Option<usize>,
    pub r_sp: Option<f64>,
    pub alpha: Option<u8>,
}

impl MapRow {
    fn empty(kind: &'static str) -> Self {
        Self {
            kind,
            ap_index: None,
            ue_index: None,
            x: None,
            y: None,
            served_count: None,
            r_sp: None,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceMap {
    pub rows: Vec<MapRow>,
    /// Fraction of DL UEs whose nearest AP serves them.
    pub nearest_served: f64,
}

/// Heap-FD pilots with robust ZF on trial `trial`; AP positions with their
/// served-UE counts, DL UE positions and every (AP, UE) ratio.
pub fn service_map(cfg: &SystemConfig, trial: u64) -> Result<ServiceMap> {
    let scheme = Scheme::new(PilotStrategy::HeapFd, Transmission::ZfRd);
    let draw = sample_draw(cfg, trial)?;
    let (_, es) = super::train(cfg, &draw, scheme.pilot, trial)?;
    let refined = solve_robust(&Problem {
        es: &es,
        g_aa: &draw.ch.g_aa,
        cfg,
        duplex: Duplex::Fd,
    })?;
    let assoc = refined.assoc;
    let mut rows = Vec::new();
    for (m, pos) in draw.topo.ap_pos.iter().enumerate() {
        rows.push(MapRow {
            ap_index: Some(m),
            x: Some(pos[0]),
            y: Some(pos[1]),
            served_count: Some(assoc.alpha.column(m).iter().filter(|&&a| a).count()),
            ..MapRow::empty("ap")
        });
    }
    for (k, pos) in draw.topo.dl_pos.iter().enumerate() {
        rows.push(MapRow {
            ue_index: Some(k),
            x: Some(pos[0]),
            y: Some(pos[1]),
            ..MapRow::empty("dl_ue")
        });
    }
    for m in 0..cfg.num_aps {
        for k in 0..cfg.num_dl {
            rows.push(MapRow {
                ap_index: Some(m),
                ue_index: Some(k),
                r_sp: Some(assoc.r_sp[(k, m)]),
                alpha: Some(u8::from(assoc.alpha[(k, m)])),
                ..MapRow::empty("link")
            });
        }
    }
    let served_nearest = draw
        .topo
        .dl_pos
        .iter()
        .enumerate()
        .filter(|(k, ue)| {
            let nearest = (0..cfg.num_aps)
                .min_by(|&a, &b| {
                    distance(**ue, draw.topo.ap_pos[a]).total_cmp(&distance(**ue, draw.topo.ap_pos[b]))
                })
                .expect("at least one AP");
            assoc.alpha[(*k, nearest)]
        })
        .count();
    Ok(ServiceMap {
        rows,
        nearest_served: if cfg.num_dl == 0 {
            1.0
        } else {
            served_nearest as f64 / cfg.num_dl as f64
        },
    })
}

pub fn write_service_map_csv<W: Write>(mut out: W, cfg: &SystemConfig, map: &ServiceMap) -> Result<()> {
    header(&mut out, cfg, "")?;
    let mut wtr = csv::Writer::from_writer(out);
    for r in &map.rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(Error::from)
}
