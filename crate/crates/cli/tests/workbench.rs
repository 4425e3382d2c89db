//! End-to-end runs of the `sdarb` binary on synthetic desk months.

mod common;

use common::*;
use sdarb::{MarketSnapshot, OptionKind};
use sdarb_cli::backtest::MomentRow;
use sdarb_cli::error::{EXIT_DISAGREEMENT, EXIT_VALIDATION};
use sdarb_cli::solve::{summarize, SolveRecord, SummaryRow};

fn read_csv<T: for<'de> serde::Deserialize<'de>>(path: &std::path::Path) -> Vec<T> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .unwrap()
}

fn read_records(path: &std::path::Path) -> Vec<SolveRecord> {
    sdarb_cli::io::read_jsonl(path).unwrap()
}

fn out_arg(dir: &std::path::Path) -> String {
    dir.display().to_string()
}

#[test]
fn build_writes_one_problem_per_month_and_scale() {
    let snaps = months(1);
    let data = write_dataset(&snaps, &realized_levels(&snaps));
    let cfg = data.config("");
    let out = data.dir.path().join("build");
    run_ok(&["build", "--config", cfg.to_str().unwrap(), "--scale", "1,10,100,1000", "-o", &out_arg(&out)]);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let expected: Vec<String> = ["1", "10", "100", "1000"]
        .iter()
        .flat_map(|s| ["json", "mps"].map(|ext| format!("2021-01-15_{s}_lp.{ext}")))
        .collect();
    let mut expected_sorted = expected.clone();
    expected_sorted.sort();
    assert_eq!(names, expected_sorted);
    // the files describe the program the library would build
    let mps = std::fs::File::open(out.join("2021-01-15_100_lp.mps")).unwrap();
    let lp = sdarb_lp::read_mps(std::io::BufReader::new(mps)).unwrap();
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("2021-01-15_100_lp.json")).unwrap()).unwrap();
    assert_eq!(meta["variables"].as_u64().unwrap() as usize, lp.num_columns());
    assert_eq!(meta["scale"], 100);
    let n = meta["layout"]["n"].as_u64().unwrap() as usize;
    let m = meta["layout"]["m"].as_u64().unwrap() as usize;
    assert_eq!(m, snaps[0].num_options());
    assert_eq!(lp.num_columns(), n * n + n + 2 * m);
}

#[test]
fn missing_observables_name_the_date() {
    let snaps = months(2);
    let data = write_dataset(&snaps, &realized_levels(&snaps));
    sdarb::market_data::write_observables_csv(&snaps[..1], std::fs::File::create(&data.observables).unwrap()).unwrap();
    let cfg = data.config("");
    let out = sdarb(&["build", "--config", cfg.to_str().unwrap(), "-o", &out_arg(&data.dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&snaps[1].trade_date.to_string()), "{stderr}");
}

#[test]
fn invalid_configuration_exits_with_validation_code() {
    let snaps = months(1);
    let data = write_dataset(&snaps, &realized_levels(&snaps));
    let cfg = data.config("");
    for bad in [["--threshold", "-1"], ["--spec", "fat"], ["--scale", "0"]] {
        let out = sdarb(&["solve", "--config", cfg.to_str().unwrap(), bad[0], bad[1]]);
        assert_eq!(out.status.code(), Some(EXIT_VALIDATION), "{bad:?}");
    }
    let out = sdarb(&["solve", "--quotes", "/no/such/file.csv", "--observables", "/no/such/obs.csv"]);
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
}

fn full_run(data: &Dataset, cfg: &std::path::Path, out: &std::path::Path) {
    let c = cfg.to_str().unwrap();
    let o = out_arg(out);
    for cmd in ["build", "solve", "backtest", "diagnose"] {
        run_ok(&[cmd, "--config", c, "-o", &o]);
    }
    run_ok(&["verify", "--config", c, "-o", &o, "--set", "verify_instances=30", "--set", "verify_sweep=10"]);
    let _ = data;
}

#[test]
fn reruns_are_byte_identical() {
    let snaps = months(4);
    let data = write_dataset(&snaps, &realized_levels(&snaps));
    let cfg = data.config("");
    let (a, b) = (data.dir.path().join("a"), data.dir.path().join("b"));
    full_run(&data, &cfg, &a);
    full_run(&data, &cfg, &b);
    let (sa, sb) = (snapshot_dir(&a), snapshot_dir(&b));
    let names: Vec<&str> = sa.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "solve_lp.jsonl",
        "solve_summary_lp.csv",
        "backtest_lp.jsonl",
        "backtest_moments_lp.csv",
        "payoff_curves_lp.csv",
        "pit_symmetric.csv",
        "pit_bins_symmetric.csv",
        "sd_tests_lp.csv",
        "verify_report.csv",
    ] {
        assert!(names.contains(&expected), "missing {expected} in {names:?}");
    }
    assert_eq!(sa.len(), sb.len());
    for ((na, ba), (nb, bb)) in sa.iter().zip(&sb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between reruns");
    }
    // the summary is the fold of the per-month records
    let records = read_records(&a.join("solve_lp.jsonl"));
    assert_eq!(records.len(), 8);
    let summary: Vec<SummaryRow> = read_csv(&a.join("solve_summary_lp.csv"));
    assert_eq!(summary, summarize(&records, 0.001));
}

#[test]
fn input_order_does_not_change_outputs() {
    let snaps = months(3);
    let data = write_dataset(&snaps, &realized_levels(&snaps));
    let cfg = data.config("");
    let a = data.dir.path().join("a");
    for cmd in ["solve", "backtest"] {
        run_ok(&[cmd, "--config", cfg.to_str().unwrap(), "-o", &out_arg(&a)]);
    }
    // reversed data rows in every input file
    for path in [&data.quotes, &data.observables, &data.realized] {
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        std::fs::write(path, lines.join("\n") + "\n").unwrap();
    }
    let b = data.dir.path().join("b");
    for cmd in ["solve", "backtest"] {
        run_ok(&[cmd, "--config", cfg.to_str().unwrap(), "-o", &out_arg(&b)]);
    }
    for name in ["solve_lp.jsonl", "solve_summary_lp.csv", "backtest_lp.jsonl", "backtest_moments_lp.csv"] {
        assert!(std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    // the fold itself ignores record order
    let mut records = read_records(&a.join("solve_lp.jsonl"));
    let forward = summarize(&records, 0.001);
    records.reverse();
    records.swap(0, 2);
    assert_eq!(summarize(&records, 0.001), forward);
}

/// Long calls at 4490 and 4650 offered at 1 and two calls at 4570 bid at
/// 5: a butterfly with a credit, zero payoff outside its wings and never
/// negative inside.
fn with_butterfly_credit(mut s: MarketSnapshot) -> MarketSnapshot {
    for q in s.quotes.iter_mut().filter(|q| q.kind == OptionKind::Call) {
        if q.strike == 4490.0 || q.strike == 4650.0 {
            q.bid = 0.5;
            q.ask = 1.0;
            q.ask_size = 1000.0;
        } else if q.strike == 4570.0 {
            q.bid = 5.0;
            q.ask = q.ask.max(5.05);
            q.bid_size = 2000.0;
        }
    }
    s
}

#[test]
fn arbitrage_month_is_counted_above_threshold() {
    let snaps = months(3);
    let base = write_dataset(&snaps[..2], &realized_levels(&snaps));
    let cfg = base.config("");
    let a = base.dir.path().join("a");
    run_ok(&["solve", "--config", cfg.to_str().unwrap(), "-o", &out_arg(&a)]);
    let before: Vec<SummaryRow> = read_csv(&a.join("solve_summary_lp.csv"));

    let mut with_arb = snaps.clone();
    with_arb[2] = with_butterfly_credit(with_arb[2].clone());
    let data = write_dataset(&with_arb, &realized_levels(&with_arb));
    let cfg = data.config("");
    let b = data.dir.path().join("b");
    run_ok(&["solve", "--config", cfg.to_str().unwrap(), "-o", &out_arg(&b)]);
    let after: Vec<SummaryRow> = read_csv(&b.join("solve_summary_lp.csv"));
    assert_eq!(before.len(), after.len());
    for (x, y) in before.iter().zip(&after) {
        assert_eq!(y.months, 3);
        assert_eq!(y.above_threshold, x.above_threshold + 1, "scale {}", y.scale);
        assert!((y.pct_above_threshold - 100.0 * (x.above_threshold + 1) as f64 / 3.0).abs() < 1e-12);
    }
    let records = read_records(&b.join("solve_lp.jsonl"));
    for r in records.iter().filter(|r| r.trade_date == with_arb[2].trade_date) {
        // two butterflies' worth of credit per unit at the binding caps
        assert!(r.premium.unwrap() >= 8.0, "{:?}", r.premium);
    }
}

#[test]
fn zero_premium_months_leave_the_market_unchanged() {
    // nothing can be written and everything is expensive to buy
    let snaps: Vec<MarketSnapshot> = months(3)
        .into_iter()
        .map(|mut s| {
            for q in &mut s.quotes {
                q.ask = 50.0 * q.ask;
                q.bid = 0.0;
                q.bid_size = 0.0;
            }
            s
        })
        .collect();
    let data = write_dataset(&snaps, &realized_levels(&snaps));
    let cfg = data.config("");
    let out = data.dir.path().join("o");
    for cmd in ["solve", "backtest"] {
        run_ok(&[cmd, "--config", cfg.to_str().unwrap(), "-o", &out_arg(&out)]);
    }
    let summary: Vec<SummaryRow> = read_csv(&out.join("solve_summary_lp.csv"));
    assert!(summary.iter().all(|r| r.pct_above_threshold == 0.0 && r.above_threshold == 0));
    let moments: Vec<MomentRow> = read_csv(&out.join("backtest_moments_lp.csv"));
    for scale in [1, 100] {
        let pick = |section: &str, pf: &str| {
            moments
                .iter()
                .find(|r| r.scale == scale && r.section == section && r.portfolio == pf)
                .unwrap()
                .clone()
        };
        for section in ["realized", "model_median"] {
            let (m, e) = (pick(section, "market"), pick(section, "enhanced"));
            assert_eq!(m.observations, e.observations);
            for (x, y) in [(m.mean, e.mean), (m.std_dev, e.std_dev), (m.skew, e.skew), (m.cer2, e.cer2), (m.cer4, e.cer4)] {
                assert!((x - y).abs() < 1e-9, "{section} scale {scale}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn missing_realized_level_skips_the_month() {
    let snaps = months(3);
    let mut realized = realized_levels(&snaps);
    let dropped = realized.remove(1);
    let data = write_dataset(&snaps, &realized);
    let cfg = data.config("");
    let out = data.dir.path().join("o");
    for cmd in ["solve", "backtest"] {
        run_ok(&[cmd, "--config", cfg.to_str().unwrap(), "-o", &out_arg(&out)]);
    }
    let skipped = std::fs::read_to_string(out.join("backtest_skipped_lp.csv")).unwrap();
    assert_eq!(skipped.lines().count(), 1 + 2, "{skipped}");
    assert!(skipped.contains(&snaps[1].trade_date.to_string()));
    assert!(skipped.contains(&dropped.0.to_string()));
    let records: Vec<sdarb::backtest::BacktestRecord> = sdarb_cli::io::read_jsonl(&out.join("backtest_lp.jsonl")).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.trade_date != snaps[1].trade_date));
}

#[test]
fn single_month_moments_are_degenerate() {
    let snaps = months(1);
    let data = write_dataset(&snaps, &realized_levels(&snaps));
    let cfg = data.config("");
    let out = data.dir.path().join("o");
    for cmd in ["solve", "backtest"] {
        run_ok(&[cmd, "--config", cfg.to_str().unwrap(), "-o", &out_arg(&out)]);
    }
    let moments: Vec<MomentRow> = read_csv(&out.join("backtest_moments_lp.csv"));
    for r in moments.iter().filter(|r| r.section == "realized") {
        assert_eq!(r.observations, 1);
        assert!(r.std_dev.is_nan() && r.skew.is_nan());
        assert!(r.mean.is_finite());
    }
}

#[test]
fn verify_passes_and_injected_fault_is_caught_and_replayed() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok");
    run_ok(&["verify", "-o", &out_arg(&ok)]);
    assert!(!ok.join("verify_failure.json").exists());

    let bad = dir.path().join("bad");
    let out = sdarb(&["verify", "--inject-fault", "-o", &out_arg(&bad)]);
    assert_eq!(out.status.code(), Some(EXIT_DISAGREEMENT));
    let dump_path = bad.join("verify_failure.json");
    let dump: sdarb_cli::verify::FailureDump =
        serde_json::from_str(&std::fs::read_to_string(&dump_path).unwrap()).unwrap();
    assert!(dump.case.inject_fault && !dump.outcome.passed());

    for _ in 0..2 {
        let replay = sdarb(&["verify", "--replay", dump_path.to_str().unwrap(), "-o", &out_arg(&dir.path().join("r"))]);
        assert_eq!(replay.status.code(), Some(EXIT_DISAGREEMENT));
        assert!(String::from_utf8_lossy(&replay.stderr).contains(&dump.outcome.failures));
    }
    // the same instance without the fault agrees
    let mut clean = dump.clone();
    clean.case.inject_fault = false;
    let clean_path = dir.path().join("clean.json");
    std::fs::write(&clean_path, serde_json::to_string(&clean).unwrap()).unwrap();
    run_ok(&["verify", "--replay", clean_path.to_str().unwrap(), "-o", &out_arg(&dir.path().join("r"))]);
}

#[test]
fn external_backend_agrees_with_the_internal_solver() {
    let snaps = months(2);
    let data = write_dataset(&snaps, &realized_levels(&snaps));
    let extra = format!("backend = {}\nbackend_args = mps-solve\n", env!("CARGO_BIN_EXE_sdarb"));
    let cfg = data.config(&extra);
    let out = data.dir.path().join("o");
    run_ok(&["solve", "--config", cfg.to_str().unwrap(), "-o", &out_arg(&out)]);
    let records = read_records(&out.join("solve_lp.jsonl"));
    assert_eq!(records.len(), 4);
    for r in &records {
        let (p, q) = (r.premium.unwrap(), r.external_premium.unwrap());
        assert!((p - q).abs() < 1e-6, "{p} vs {q}");
    }
    // a backend that reports garbage is a solver failure, not a crash
    let cfg = data.config("backend = /bin/false\n");
    let failed = sdarb(&["solve", "--config", cfg.to_str().unwrap(), "-o", &out_arg(&data.dir.path().join("f"))]);
    assert_eq!(failed.status.code(), Some(sdarb_cli::error::EXIT_SOLVER));
    assert_eq!(read_records(&data.dir.path().join("f/solve_lp.jsonl")).len(), 4);
}
