use cfmimo::harness::{
    config_hash, nmse_sweep, nmse_trial, run_trial, se_sweep, service_map, summarize_nmse,
    summarize_se, write_nmse_csv, write_se_csv, write_service_map_csv, write_summary_csv, Scheme,
    SweepGrid, Transmission,
};
use cfmimo::pilots::PilotStrategy;
use cfmimo::SystemConfig;

fn small() -> SystemConfig {
    SystemConfig {
        num_aps: 16,
        num_dl: 4,
        num_ul: 4,
        pilot_len: 2,
        ..SystemConfig::default()
    }
}

/// Splits a CSV into its comment header line and parsed records.
fn parse(bytes: &[u8]) -> (String, Vec<String>, Vec<csv::StringRecord>) {
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let (comment, body) = text.split_once('\n').unwrap();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(Result::unwrap).collect();
    (comment.to_string(), headers, rows)
}

fn assert_finite(rows: &[csv::StringRecord]) {
    for r in rows {
        for field in r.iter() {
            if let Ok(v) = field.parse::<f64>() {
                assert!(!v.is_nan(), "NaN in {r:?}");
            }
        }
    }
}

#[test]
fn nmse_csv_shape_and_header() {
    let cfg = small();
    let grid = SweepGrid {
        ue_counts: vec![2, 4],
        taus: vec![1, 2],
        trials: 3,
    };
    let records = nmse_sweep(&cfg, &grid, &PilotStrategy::ALL).unwrap();
    assert_eq!(records.len(), 2 * 2 * 4 * 3);
    let mut buf = Vec::new();
    write_nmse_csv(&mut buf, &cfg, &records).unwrap();
    let (comment, headers, rows) = parse(&buf);
    assert!(comment.starts_with(&format!("# config_sha256={}", config_hash(&cfg))));
    assert!(headers.iter().any(|h| h == "nmse_db"));
    assert_eq!(rows.len(), records.len());
    assert_finite(&rows);

    let summary = summarize_nmse(&records);
    assert_eq!(summary.len(), 2 * 2 * 4);
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &cfg, &summary).unwrap();
    let (_, _, rows) = parse(&buf);
    assert_eq!(rows.len(), summary.len());
    assert_finite(&rows);
}

#[test]
fn se_csv_shape_and_header() {
    let cfg = small();
    let grid = SweepGrid {
        ue_counts: vec![3],
        taus: vec![2],
        trials: 2,
    };
    let schemes: Vec<Scheme> = Transmission::ALL
        .iter()
        .map(|&t| Scheme::new(PilotStrategy::HeapFd, t))
        .chain([Scheme::new(PilotStrategy::HeapHd, Transmission::ZfRd)])
        .collect();
    let records = se_sweep(&cfg, &grid, &schemes).unwrap();
    assert_eq!(records.len(), schemes.len() * 2);
    let mut buf = Vec::new();
    write_se_csv(&mut buf, &cfg, &records).unwrap();
    let (comment, headers, rows) = parse(&buf);
    assert!(comment.contains(&config_hash(&cfg)));
    assert!(comment.contains("hd:"));
    assert!(headers.iter().any(|h| h == "effective_se"));
    assert_eq!(rows.len(), records.len());
    assert_finite(&rows);
    assert!(!summarize_se(&records).is_empty());
}

#[test]
fn trials_are_reproducible() {
    let cfg = small();
    let a = nmse_trial(&cfg, PilotStrategy::HeapFd, 7).unwrap();
    let b = nmse_trial(&cfg, PilotStrategy::HeapFd, 7).unwrap();
    assert_eq!(a, b);
    let c = nmse_trial(&cfg, PilotStrategy::HeapFd, 8).unwrap();
    assert_ne!(a.nmse, c.nmse);

    let scheme = Scheme::new(PilotStrategy::HeapFd, Transmission::ZfRd);
    let r1 = run_trial(&cfg, scheme, 3).unwrap();
    let r2 = run_trial(&cfg, scheme, 3).unwrap();
    assert_eq!(r1.f_se.to_bits(), r2.f_se.to_bits());
    assert_eq!(r1.effective_se.to_bits(), r2.effective_se.to_bits());
}

#[test]
fn sweep_matches_serial_trials() {
    let cfg = small();
    let grid = SweepGrid {
        ue_counts: vec![4],
        taus: vec![2],
        trials: 6,
    };
    let swept = nmse_sweep(&cfg, &grid, &[PilotStrategy::HeapFd, PilotStrategy::RandHd]).unwrap();
    let serial: Vec<_> = [PilotStrategy::HeapFd, PilotStrategy::RandHd]
        .iter()
        .flat_map(|&s| (0..6).map(move |t| (s, t)))
        .map(|(s, t)| nmse_trial(&cfg, s, t).unwrap())
        .collect();
    assert_eq!(swept, serial);
}

#[test]
fn different_seed_changes_draws() {
    let cfg = small();
    let other = SystemConfig {
        rng_seed: cfg.rng_seed + 1,
        ..cfg.clone()
    };
    assert_ne!(config_hash(&cfg), config_hash(&other));
    let a = nmse_trial(&cfg, PilotStrategy::HeapFd, 0).unwrap();
    let b = nmse_trial(&other, PilotStrategy::HeapFd, 0).unwrap();
    assert_ne!(a.nmse, b.nmse);
}

#[test]
fn service_map_rows_are_consistent() {
    let cfg = small();
    // some draws cannot meet the rate floors; take the first that can
    let map = (0..20).find_map(|t| service_map(&cfg, t).ok()).unwrap();
    let count = |kind: &str| map.rows.iter().filter(|r| r.kind == kind).count();
    assert_eq!(count("ap"), cfg.num_aps);
    assert_eq!(count("dl_ue"), cfg.num_dl);
    assert_eq!(count("link"), cfg.num_aps * cfg.num_dl);
    let served: usize = map.rows.iter().filter_map(|r| r.served_count).sum();
    let links: usize = map.rows.iter().filter_map(|r| r.alpha).map(usize::from).sum();
    assert_eq!(served, links);
    assert!((0.0..=1.0).contains(&map.nearest_served));
    for r in map.rows.iter().filter(|r| r.kind == "link") {
        let v = r.r_sp.unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
    let mut buf = Vec::new();
    write_service_map_csv(&mut buf, &cfg, &map).unwrap();
    let (comment, _, rows) = parse(&buf);
    assert!(comment.contains(&config_hash(&cfg)));
    assert_eq!(rows.len(), map.rows.len());
}

#[test]
fn scheme_names_round_trip() {
    for p in PilotStrategy::ALL {
        for t in Transmission::ALL {
            let s = Scheme::new(p, t);
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
    }
    assert!("heap_fd+nothing".parse::<Scheme>().is_err());
}
