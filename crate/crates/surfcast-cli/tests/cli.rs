//! End-to-end tests of the `surfcast` binary: files, exit codes, and
//! agreement with the library on the same inputs.

mod support;

use ndarray::Array2;
use surfcast::conformal::{conformal_band, make_split, BandRadius, PermutationFamily, SplitMode};
use surfcast::far::{fit, FarVariant, FitConfig};
use surfcast::grid::{FtsDataset, GridDomain, SurfaceField};
use surfcast::stats::normal_ci99;

use support::{read_csv, read_fts2, run, run_env, run_ok, unit_axis, write_fts2};

fn tmp() -> tempfile::TempDir {
    tempfile::TempDir::new().expect("temp dir")
}

fn p(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).code, 0);
    assert_eq!(run(&["--version"]).code, 0);
    assert_eq!(run(&["forecast-band", "--help"]).code, 0);
}

#[test]
fn simulate_is_seed_reproducible_and_header_is_sane() {
    let dir = tmp();
    let (a, b, c) = (p(&dir, "a.fts2"), p(&dir, "b.fts2"), p(&dir, "c.fts2"));
    let base = ["simulate", "--n1", "9", "--n2", "7", "--t-len", "11", "--warm-up", "10"];
    run_ok(&[&base[..], &["--seed", "4", "--out", &a]].concat());
    run_ok(&[&base[..], &["--seed", "4", "--out", &b]].concat());
    run_ok(&[&base[..], &["--seed", "5", "--out", &c]].concat());
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap(), "same seed, same bytes");
    assert_ne!(bytes_a, std::fs::read(&c).unwrap(), "different seed, different bytes");

    let parsed = read_fts2(std::path::Path::new(&a));
    assert_eq!(parsed.frames.len(), 11);
    assert_eq!(parsed.frames[0].dim(), (9, 7));
    assert!(parsed.mask.is_none());
    assert!(parsed.timestamps.is_none());
    assert_eq!(parsed.u, unit_axis(9));
    assert_eq!(parsed.v, unit_axis(7));
}

#[test]
fn forecast_band_files_match_the_library_band() {
    let dir = tmp();
    let data = p(&dir, "data.fts2");
    run_ok(&[
        "simulate", "--n1", "10", "--n2", "10", "--t-len", "30", "--warm-up", "20", "--seed",
        "3", "--out", &data,
    ]);

    // Craft a membership probe from the final raw frame.
    let parsed = read_fts2(std::path::Path::new(&data));
    let probe = p(&dir, "probe.fts2");
    write_fts2(
        std::path::Path::new(&probe),
        &[parsed.frames[29].clone()],
        None,
        &unit_axis(10),
        &unit_axis(10),
        None,
    );

    let out_dir = p(&dir, "band");
    let out = run_ok(&[
        "forecast-band", "--input", &data, "--method", "ek", "--alpha", "0.2", "--seed", "1",
        "--check", &probe, "--out-dir", &out_dir,
    ]);

    // The same band, built directly against the library.
    let domain = GridDomain::with_coords(parsed.u.clone(), parsed.v.clone()).unwrap();
    let frames: Vec<SurfaceField<f64>> =
        parsed.frames.iter().map(|a| SurfaceField::new(a.clone())).collect();
    let ds = FtsDataset::new(domain, frames, None, None).unwrap();
    let plan = make_split(30, 0.5, SplitMode::Random, 1)
        .unwrap()
        .adjust_for_blocking(1, 0.2)
        .unwrap();
    let family = PermutationFamily::new(plan.l(), 1).unwrap();
    let predictor = fit(FarVariant::Ek, &ds, &plan.train, &FitConfig::default()).unwrap();
    let band = conformal_band(&ds, &plan, &predictor, &family, 0.2, ds.frame(29)).unwrap();
    let (lower, upper) = band.bounds().unwrap();
    let k = match band.radius() {
        BandRadius::Finite(k) => *k,
        other => panic!("expected a finite radius, got {other:?}"),
    };

    let bits = |a: &Array2<f64>, b: &Array2<f64>| {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    };
    let center_file = read_fts2(&dir.path().join("band/center.fts2"));
    bits(&center_file.frames[0], band.center().values());
    let lower_file = read_fts2(&dir.path().join("band/lower.fts2"));
    bits(&lower_file.frames[0], lower.values());
    let upper_file = read_fts2(&dir.path().join("band/upper.fts2"));
    bits(&upper_file.frames[0], upper.values());

    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("band/band.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["radius"]["kind"], "finite");
    assert_eq!(sidecar["radius"]["value"].as_f64().unwrap().to_bits(), k.to_bits());
    assert_eq!(sidecar["band_size"].as_f64().unwrap().to_bits(), band.size().to_bits());
    assert_eq!(sidecar["train_size"].as_u64().unwrap() as usize, plan.m());
    assert_eq!(sidecar["calib_size"].as_u64().unwrap() as usize, plan.l());
    assert_eq!(sidecar["family_size"].as_u64().unwrap() as usize, family.size());
    assert_eq!(sidecar["method"], "ek");

    let want = band.contains(ds.frame(29)).unwrap();
    assert_eq!(
        sidecar["check_contained"].as_bool().unwrap(),
        want,
        "sidecar membership flag"
    );
    assert!(out.stdout.contains(&format!("check frame inside the band: {want}")));
}

#[test]
fn csv_round_trip_preserves_bytes_without_mask() {
    let dir = tmp();
    let data = p(&dir, "data.fts2");
    run_ok(&[
        "simulate", "--n1", "6", "--n2", "5", "--t-len", "8", "--warm-up", "5", "--seed", "9",
        "--out", &data,
    ]);
    let csv = p(&dir, "data.csv");
    run_ok(&["export-csv", "--input", &data, "--out", &csv]);
    let back = p(&dir, "back.fts2");
    run_ok(&["import-csv", "--data", &csv, "--out", &back]);
    assert_eq!(std::fs::read(&data).unwrap(), std::fs::read(&back).unwrap());
}

#[test]
fn masked_csv_round_trip_preserves_bytes() {
    let dir = tmp();
    let crafted = dir.path().join("crafted.fts2");
    // Values that exercise the shortest-round-trip float formatting.
    let f0 = Array2::from_shape_fn((3, 4), |(i, j)| 0.1 * (i as f64) - 7.25 * (j as f64) + 1e-3);
    let f1 = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 / 3.0 - 2.0);
    let mask = Array2::from_shape_fn((3, 4), |(i, j)| !(i == 2 && j == 3));
    write_fts2(&crafted, &[f0, f1], Some(&mask), &unit_axis(3), &unit_axis(4), None);

    let (csv, mcsv) = (p(&dir, "d.csv"), p(&dir, "m.csv"));
    run_ok(&[
        "export-csv",
        "--input",
        crafted.to_str().unwrap(),
        "--out",
        &csv,
        "--mask-out",
        &mcsv,
    ]);
    let back = p(&dir, "back.fts2");
    run_ok(&["import-csv", "--data", &csv, "--mask", &mcsv, "--out", &back]);
    assert_eq!(std::fs::read(&crafted).unwrap(), std::fs::read(&back).unwrap());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tmp();
    let data = p(&dir, "data.fts2");
    run_ok(&[
        "simulate", "--n1", "8", "--n2", "8", "--t-len", "26", "--warm-up", "10", "--seed",
        "2", "--out", &data,
    ]);
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "alpha = 0.25   # band level\nseed = 7\n").unwrap();

    let d1 = p(&dir, "b1");
    run_ok(&[
        "forecast-band", "--input", &data, "--config", conf.to_str().unwrap(), "--out-dir", &d1,
    ]);
    let j1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b1/band.json")).unwrap())
            .unwrap();
    assert_eq!(j1["alpha"].as_f64().unwrap(), 0.25, "config supplies alpha");
    assert_eq!(j1["seed"].as_u64().unwrap(), 7, "config supplies seed");

    let d2 = p(&dir, "b2");
    run_ok(&[
        "forecast-band", "--input", &data, "--config", conf.to_str().unwrap(), "--alpha", "0.5",
        "--out-dir", &d2,
    ]);
    let j2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b2/band.json")).unwrap())
            .unwrap();
    assert_eq!(j2["alpha"].as_f64().unwrap(), 0.5, "flag overrides config");
    assert_eq!(j2["seed"].as_u64().unwrap(), 7, "other config values survive");
}

#[test]
fn config_file_errors_are_usage_errors() {
    let dir = tmp();
    let data = p(&dir, "data.fts2");
    run_ok(&["simulate", "--n1", "4", "--n2", "4", "--t-len", "8", "--out", &data]);

    let unknown = dir.path().join("unknown.conf");
    std::fs::write(&unknown, "not_a_key = 1\n").unwrap();
    let out = run(&[
        "forecast-band", "--input", &data, "--config", unknown.to_str().unwrap(), "--out-dir",
        &p(&dir, "x"),
    ]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("unknown configuration key"), "stderr: {}", out.stderr);

    let dup = dir.path().join("dup.conf");
    std::fs::write(&dup, "alpha = 0.1\nalpha = 0.2\n").unwrap();
    let out = run(&[
        "forecast-band", "--input", &data, "--config", dup.to_str().unwrap(), "--out-dir",
        &p(&dir, "y"),
    ]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("duplicate configuration key"), "stderr: {}", out.stderr);
}

#[test]
fn corrupt_and_truncated_files_are_data_errors() {
    let dir = tmp();
    let bad = dir.path().join("bad.fts2");
    std::fs::write(&bad, b"not a dataset at all").unwrap();
    let out = run(&["export-csv", "--input", bad.to_str().unwrap(), "--out", &p(&dir, "o.csv")]);
    assert_eq!(out.code, 3);
    assert!(out.stderr.contains("bad magic"), "stderr: {}", out.stderr);

    let data = p(&dir, "data.fts2");
    run_ok(&["simulate", "--n1", "4", "--n2", "4", "--t-len", "6", "--out", &data]);
    let full = std::fs::read(&data).unwrap();

    let cut = dir.path().join("cut.fts2");
    std::fs::write(&cut, &full[..full.len() - 9]).unwrap();
    let out = run(&["export-csv", "--input", cut.to_str().unwrap(), "--out", &p(&dir, "c.csv")]);
    assert_eq!(out.code, 3);
    assert!(out.stderr.contains("truncated"), "stderr: {}", out.stderr);

    let padded = dir.path().join("padded.fts2");
    let mut grown = full.clone();
    grown.push(0);
    std::fs::write(&padded, &grown).unwrap();
    let out =
        run(&["export-csv", "--input", padded.to_str().unwrap(), "--out", &p(&dir, "p.csv")]);
    assert_eq!(out.code, 3);
    assert!(out.stderr.contains("trailing bytes"), "stderr: {}", out.stderr);
}

#[test]
fn method_misuse_is_a_usage_error() {
    let dir = tmp();
    let data = p(&dir, "data.fts2");
    run_ok(&["simulate", "--n1", "4", "--n2", "4", "--t-len", "12", "--out", &data]);

    let out = run(&[
        "forecast-band", "--input", &data, "--method", "kriging", "--out-dir", &p(&dir, "x"),
    ]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("unknown method"), "stderr: {}", out.stderr);

    let out = run(&[
        "forecast-band", "--input", &data, "--method", "oracle", "--out-dir", &p(&dir, "y"),
    ]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("requires --kernel"), "stderr: {}", out.stderr);
}

#[test]
fn constant_series_is_a_numerical_failure() {
    let dir = tmp();
    let flat = dir.path().join("flat.fts2");
    let frames: Vec<Array2<f64>> = (0..12).map(|_| Array2::from_elem((3, 3), 7.0)).collect();
    write_fts2(&flat, &frames, None, &unit_axis(3), &unit_axis(3), None);
    let out = run(&[
        "forecast-band", "--input", flat.to_str().unwrap(), "--method", "ek", "--alpha", "0.2",
        "--out-dir", &p(&dir, "x"),
    ]);
    assert_eq!(out.code, 4);
    assert!(out.stderr.contains("degenerate"), "stderr: {}", out.stderr);
}

#[test]
fn import_rejects_duplicate_and_missing_cells() {
    let dir = tmp();
    let dup = dir.path().join("dup.csv");
    std::fs::write(&dup, "t,i,j,value\n0,0,0,1.0\n0,0,1,2.0\n0,0,0,3.0\n").unwrap();
    let out = run(&["import-csv", "--data", dup.to_str().unwrap(), "--out", &p(&dir, "d.fts2")]);
    assert_eq!(out.code, 3);
    assert!(out.stderr.contains("duplicate cell"), "stderr: {}", out.stderr);

    let missing = dir.path().join("missing.csv");
    std::fs::write(&missing, "t,i,j,value\n0,0,0,1.0\n0,1,1,2.0\n").unwrap();
    let out =
        run(&["import-csv", "--data", missing.to_str().unwrap(), "--out", &p(&dir, "m.fts2")]);
    assert_eq!(out.code, 3);
    assert!(out.stderr.contains("missing cell"), "stderr: {}", out.stderr);
}

#[test]
fn study_tables_are_consistent_and_reproducible() {
    let dir = tmp();
    let args = [
        "study", "--methods", "naive,ek", "--t-lens", "24,30", "--reps", "3", "--n1", "8",
        "--n2", "8", "--seed", "11",
    ];
    let d1 = p(&dir, "s1");
    run_ok(&[&args[..], &["--out-dir", &d1]].concat());

    let (header, rows) = read_csv(&dir.path().join("s1/replications.csv"));
    assert_eq!(header.join(","), "method,T,b,rep,covered,band_size,seed");
    assert_eq!(rows.len(), 2 * 2 * 3, "2 methods x 2 cases x 3 reps");

    let (aheader, arows) = read_csv(&dir.path().join("s1/aggregates.csv"));
    assert_eq!(
        aheader.join(","),
        "method,T,b,n_ok,n_failed,coverage,ci_low,ci_high,mean_band_size"
    );
    // Each aggregate row restates its replication rows exactly.
    for arow in &arows {
        let (method, t, b) = (&arow[0], &arow[1], &arow[2]);
        let mine: Vec<&Vec<String>> = rows
            .iter()
            .filter(|r| &r[0] == method && &r[1] == t && &r[2] == b)
            .collect();
        let n_ok: usize = arow[3].parse().unwrap();
        assert_eq!(mine.len(), n_ok);
        assert_eq!(arow[4], "0", "no failures expected in this configuration");
        let n_cov = mine.iter().filter(|r| r[4] == "1").count();
        let coverage = n_cov as f64 / n_ok as f64;
        assert_eq!(arow[5].parse::<f64>().unwrap().to_bits(), coverage.to_bits());
        let (lo, hi) = normal_ci99(coverage, n_ok);
        assert_eq!(arow[6].parse::<f64>().unwrap().to_bits(), lo.to_bits());
        assert_eq!(arow[7].parse::<f64>().unwrap().to_bits(), hi.to_bits());
        let mut sum = 0.0;
        for r in &mine {
            sum += r[5].parse::<f64>().unwrap();
        }
        let mean = sum / n_ok as f64;
        assert_eq!(arow[8].parse::<f64>().unwrap().to_bits(), mean.to_bits());
    }

    let d2 = p(&dir, "s2");
    run_ok(&[&args[..], &["--out-dir", &d2]].concat());
    for name in ["replications.csv", "aggregates.csv", "failures.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("s1").join(name)).unwrap(),
            std::fs::read(dir.path().join("s2").join(name)).unwrap(),
            "{name} reruns byte-identical"
        );
    }
}

#[test]
fn rolling_outputs_are_deterministic_and_thread_invariant() {
    let dir = tmp();
    let data = p(&dir, "data.fts2");
    run_ok(&[
        "simulate", "--n1", "8", "--n2", "8", "--t-len", "40", "--warm-up", "20", "--seed",
        "13", "--out", &data,
    ]);
    let args = [
        "rolling", "--input", &data, "--window", "20", "--shifts", "6", "--alpha", "0.2",
        "--seed", "21",
    ];
    let d1 = p(&dir, "r1");
    let d2 = p(&dir, "r2");
    run_env(&[&args[..], &["--out-dir", &d1]].concat(), &[("SURFCAST_THREADS", "1")]);
    run_env(&[&args[..], &["--out-dir", &d2]].concat(), &[("SURFCAST_THREADS", "3")]);
    for name in ["shifts.csv", "failures.csv", "hits.fts2", "width_mean.fts2", "summary.json"] {
        let a = std::fs::read(dir.path().join("r1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(name)).unwrap();
        assert_eq!(a, b, "{name} identical across thread counts");
    }
    // Every requested shift landed somewhere, and the grids have the right shape.
    let (_, shift_rows) = read_csv(&dir.path().join("r1/shifts.csv"));
    let (_, failure_rows) = read_csv(&dir.path().join("r1/failures.csv"));
    assert_eq!(shift_rows.len() + failure_rows.len(), 6);
    let hits = read_fts2(&dir.path().join("r1/hits.fts2"));
    assert_eq!(hits.frames[0].dim(), (8, 8));
    assert!(hits.frames[0].iter().all(|&h| (0.0..=6.0).contains(&h) && h.fract() == 0.0));
}

#[test]
fn invalid_thread_env_is_a_usage_error() {
    let out = run_env(&["--help"], &[("SURFCAST_THREADS", "zero")]);
    // --help short-circuits before thread setup, so use a real command.
    assert_eq!(out.code, 0);
    let dir = tmp();
    let out = run_env(
        &["simulate", "--n1", "4", "--n2", "4", "--t-len", "6", "--out", &p(&dir, "d.fts2")],
        &[("SURFCAST_THREADS", "zero")],
    );
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("SURFCAST_THREADS"), "stderr: {}", out.stderr);
}
