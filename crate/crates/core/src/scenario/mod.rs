//! Network topology, large-scale fading and small-scale channel realizations.

mod config;
mod pathloss;

pub use config::{Duplex, SystemConfig};
pub use pathloss::PathLossModel;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::linalg::{crandn, db_to_linear, CMat, RMat};
use crate::Result;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub ap_pos: Vec<Point>,
    pub dl_pos: Vec<Point>,
    pub ul_pos: Vec<Point>,
}

/// Large-scale gains, all linear.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    /// K x M, AP m to DL UE k.
    pub beta_dl: RMat,
    /// M x L, UL UE l to AP m.
    pub beta_ul: RMat,
    /// K x L, UL UE l to DL UE k.
    pub beta_cci: RMat,
    /// M x M inter-AP gains. The diagonal is 1: the SI loop is unit-gain
    /// before the residual suppression factor is applied.
    pub beta_aa: RMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// K x N, row k is h_k^d.
    pub h_dl: CMat,
    /// N x L, column l is h_l^u.
    pub h_ul: CMat,
    /// K x L.
    pub g_cci: CMat,
    /// N x N, block (m, m') is the AP m' -> AP m channel; diagonal blocks
    /// carry the suppressed Rician SI loop.
    pub g_aa: CMat,
}

fn uniform_in_disc<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    [r * theta.cos(), r * theta.sin()]
}

pub fn sample_topology<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Topology {
    let mut draw = |n: usize| (0..n).map(|_| uniform_in_disc(cfg.radius, rng)).collect();
    let ap_pos = draw(cfg.num_aps);
    let dl_pos = draw(cfg.num_dl);
    let ul_pos = draw(cfg.num_ul);
    Topology {
        ap_pos,
        dl_pos,
        ul_pos,
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

struct Fading<'a> {
    cfg: &'a SystemConfig,
}

impl Fading<'_> {
    fn gain<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> Result<f64> {
        let d = d.max(self.cfg.min_distance);
        let pl = self.cfg.path_loss.path_loss_db(d)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok(db_to_linear(pl + self.cfg.shadow_std_db * z))
    }
}

/// Path loss at each pairwise distance plus i.i.d. log-normal shadowing.
pub fn large_scale<R: Rng + ?Sized>(
    topo: &Topology,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<LargeScale> {
    let fading = Fading { cfg };
    let (m_n, k_n, l_n) = (topo.ap_pos.len(), topo.dl_pos.len(), topo.ul_pos.len());

    let mut beta_dl = RMat::zeros(k_n, m_n);
    for k in 0..k_n {
        for m in 0..m_n {
            beta_dl[(k, m)] = fading.gain(distance(topo.dl_pos[k], topo.ap_pos[m]), rng)?;
        }
    }
    let mut beta_ul = RMat::zeros(m_n, l_n);
    for m in 0..m_n {
        for l in 0..l_n {
            beta_ul[(m, l)] = fading.gain(distance(topo.ap_pos[m], topo.ul_pos[l]), rng)?;
        }
    }
    let mut beta_cci = RMat::zeros(k_n, l_n);
    for k in 0..k_n {
        for l in 0..l_n {
            beta_cci[(k, l)] = fading.gain(distance(topo.dl_pos[k], topo.ul_pos[l]), rng)?;
        }
    }
    let mut beta_aa = RMat::identity(m_n, m_n);
    for m in 0..m_n {
        for mp in m + 1..m_n {
            let b = fading.gain(distance(topo.ap_pos[m], topo.ap_pos[mp]), rng)?;
            beta_aa[(m, mp)] = b;
            beta_aa[(mp, m)] = b;
        }
    }
    Ok(LargeScale {
        beta_dl,
        beta_ul,
        beta_cci,
        beta_aa,
    })
}

/// Rayleigh links scaled by their large-scale gains, plus the Rician SI loop
/// scaled by `sqrt(rsi)`. The Rician mean is the all-ones matrix.
pub fn sample_channels<R: Rng + ?Sized>(
    ls: &LargeScale,
    cfg: &SystemConfig,
    rng: &mut R,
) -> ChannelSet {
    let n = cfg.total_antennas();
    let (k_n, m_n) = ls.beta_dl.shape();
    let l_n = ls.beta_ul.ncols();
    let ap = |i: usize| cfg.ap_of_antenna(i);

    let h_dl = DMatrix::from_fn(k_n, n, |k, i| ls.beta_dl[(k, ap(i))].sqrt() * crandn(rng));
    let h_ul = DMatrix::from_fn(n, l_n, |i, l| ls.beta_ul[(ap(i), l)].sqrt() * crandn(rng));
    let g_cci = DMatrix::from_fn(k_n, l_n, |k, l| ls.beta_cci[(k, l)].sqrt() * crandn(rng));

    let kappa = db_to_linear(cfg.rician_factor_db);
    let (los, nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
    };
    let si_scale = cfg.rsi.sqrt();
    let g_aa = DMatrix::from_fn(n, n, |i, j| {
        let (m, mp) = (ap(i), ap(j));
        let z = crandn(rng);
        if m == mp {
            si_scale * (Complex64::new(los, 0.0) + nlos * z)
        } else {
            ls.beta_aa[(m, mp)].sqrt() * z
        }
    });
    debug_assert_eq!(m_n, cfg.num_aps);
    ChannelSet {
        h_dl,
        h_ul,
        g_cci,
        g_aa,
    }
}

/// One row per link for CSV export.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LinkRow {
    pub kind: &'static str,
    pub from: usize,
    pub to: usize,
    pub distance: f64,
    pub beta: f64,
}

pub fn link_rows(topo: &Topology, ls: &LargeScale) -> Vec<LinkRow> {
    let mut rows = Vec::new();
    for k in 0..topo.dl_pos.len() {
        for m in 0..topo.ap_pos.len() {
            rows.push(LinkRow {
                kind: "dl",
                from: m,
                to: k,
                distance: distance(topo.ap_pos[m], topo.dl_pos[k]),
                beta: ls.beta_dl[(k, m)],
            });
        }
    }
    for l in 0..topo.ul_pos.len() {
        for m in 0..topo.ap_pos.len() {
            rows.push(LinkRow {
                kind: "ul",
                from: l,
                to: m,
                distance: distance(topo.ul_pos[l], topo.ap_pos[m]),
                beta: ls.beta_ul[(m, l)],
            });
        }
    }
    for k in 0..topo.dl_pos.len() {
        for l in 0..topo.ul_pos.len() {
            rows.push(LinkRow {
                kind: "cci",
                from: l,
                to: k,
                distance: distance(topo.ul_pos[l], topo.dl_pos[k]),
                beta: ls.beta_cci[(k, l)],
            });
        }
    }
    for m in 0..topo.ap_pos.len() {
        for mp in 0..topo.ap_pos.len() {
            if m != mp {
                rows.push(LinkRow {
                    kind: "aa",
                    from: mp,
                    to: m,
                    distance: distance(topo.ap_pos[mp], topo.ap_pos[m]),
                    beta: ls.beta_aa[(m, mp)],
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            num_aps: 4,
            num_dl: 3,
            num_ul: 2,
            pilot_len: 2,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn zero_radius_collapses_to_origin() {
        let cfg = SystemConfig {
            radius: 0.0,
            ..small_cfg()
        };
        let topo = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(topo
            .ap_pos
            .iter()
            .chain(&topo.dl_pos)
            .chain(&topo.ul_pos)
            .all(|p| p[0] == 0.0 && p[1] == 0.0));
        // coincident points are clamped, not infinite
        let ls = large_scale(&topo, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(ls.beta_dl.iter().all(|b| b.is_finite() && *b > 0.0));
    }

    #[test]
    fn topology_is_seeded_and_inside_disc() {
        let cfg = small_cfg();
        let a = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.ap_pos.iter().all(|p| p[0].hypot(p[1]) <= cfg.radius));
    }

    #[test]
    fn mean_radius_is_two_thirds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let p = uniform_in_disc(1000.0, &mut rng);
                p[0].hypot(p[1])
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean / (2000.0 / 3.0) - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn no_shadowing_gives_pure_path_loss() {
        let cfg = SystemConfig {
            shadow_std_db: 0.0,
            ..small_cfg()
        };
        let topo = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let ls = large_scale(&topo, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for k in 0..cfg.num_dl {
            for m in 0..cfg.num_aps {
                let d = distance(topo.dl_pos[k], topo.ap_pos[m]).max(cfg.min_distance);
                let want = db_to_linear(cfg.path_loss.path_loss_db(d).unwrap());
                assert_eq!(ls.beta_dl[(k, m)], want);
            }
        }
    }

    #[test]
    fn shadowing_is_zero_mean() {
        let cfg = small_cfg();
        let topo = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let d = distance(topo.dl_pos[0], topo.ap_pos[0]).max(cfg.min_distance);
        let pl = cfg.path_loss.path_loss_db(d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| {
                let ls = large_scale(&topo, &cfg, &mut rng).unwrap();
                10.0 * ls.beta_dl[(0, 0)].log10() - pl
            })
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.3, "{mean}");
    }

    #[test]
    fn large_scale_is_reproducible_and_positive() {
        let cfg = small_cfg();
        let topo = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let a = large_scale(&topo, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = large_scale(&topo, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        for m in [&a.beta_dl, &a.beta_ul, &a.beta_cci, &a.beta_aa] {
            assert!(m.iter().all(|b| b.is_finite() && *b > 0.0));
        }
        let ch1 = sample_channels(&a, &cfg, &mut ChaCha8Rng::seed_from_u64(8));
        let ch2 = sample_channels(&a, &cfg, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(ch1, ch2);
    }

    #[test]
    fn perfect_si_cancellation_zeroes_diagonal_blocks() {
        let cfg = SystemConfig {
            rsi: 0.0,
            ..small_cfg()
        };
        let topo = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let ls = large_scale(&topo, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let ch = sample_channels(&ls, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        for m in 0..cfg.num_aps {
            for i in cfg.antennas(m) {
                for j in cfg.antennas(m) {
                    assert_eq!(ch.g_aa[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn infinite_rician_factor_is_deterministic() {
        let cfg = SystemConfig {
            rician_factor_db: f64::INFINITY,
            ..small_cfg()
        };
        let topo = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let ls = large_scale(&topo, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let ch = sample_channels(&ls, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let want = Complex64::new(cfg.rsi.sqrt(), 0.0);
        for i in cfg.antennas(1) {
            for j in cfg.antennas(1) {
                assert_eq!(ch.g_aa[(i, j)], want);
            }
        }
    }

    #[test]
    fn empirical_channel_variance_matches_beta() {
        let cfg = small_cfg();
        let topo = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let ls = large_scale(&topo, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let (mut dl, mut ul, mut cci, mut aa, mut si) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let ch = sample_channels(&ls, &cfg, &mut rng);
            dl += ch.h_dl[(1, 2)].norm_sqr();
            ul += ch.h_ul[(3, 1)].norm_sqr();
            cci += ch.g_cci[(2, 0)].norm_sqr();
            aa += ch.g_aa[(0, 4)].norm_sqr();
            si += ch.g_aa[(0, 1)].norm_sqr();
        }
        let n = n as f64;
        let rel = |emp: f64, want: f64| (emp / n / want - 1.0).abs();
        assert!(rel(dl, ls.beta_dl[(1, cfg.ap_of_antenna(2))]) < 0.05);
        assert!(rel(ul, ls.beta_ul[(cfg.ap_of_antenna(3), 1)]) < 0.05);
        assert!(rel(cci, ls.beta_cci[(2, 0)]) < 0.05);
        assert!(rel(aa, ls.beta_aa[(0, 2)]) < 0.05);
        // unit-power Rician loop scaled by rsi
        assert!(rel(si, cfg.rsi) < 0.05);
    }

    #[test]
    fn link_rows_cover_every_link() {
        let cfg = small_cfg();
        let topo = sample_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let ls = large_scale(&topo, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let rows = link_rows(&topo, &ls);
        let (m, k, l) = (4, 3, 2);
        assert_eq!(rows.len(), k * m + m * l + k * l + m * (m - 1));
    }
}
