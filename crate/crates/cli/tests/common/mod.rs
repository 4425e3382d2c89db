#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate};
use sdarb::market_data::{write_observables_csv, write_quotes_csv};
use sdarb::synthetic::desk_snapshot;
use sdarb::MarketSnapshot;

/// Desk-shaped months on every fourth strike (about 60 options), four
/// weeks apart, each held 28 days.
pub fn months(count: usize) -> Vec<MarketSnapshot> {
    let first = NaiveDate::from_ymd_opt(2021, 1, 15).unwrap();
    (0..count)
        .map(|k| {
            let mut s = desk_snapshot(k as u64 + 1);
            s.quotes.retain(|q| ((q.strike - 4230.0) / 5.0) as i64 % 4 == 0);
            s.trade_date = first + Duration::days(28 * k as i64);
            s.expiry_date = s.trade_date + Duration::days(28);
            s
        })
        .collect()
}

/// Deterministic expiry levels around the index.
pub fn realized_levels(snaps: &[MarketSnapshot]) -> Vec<(NaiveDate, f64)> {
    snaps
        .iter()
        .enumerate()
        .map(|(k, s)| (s.expiry_date, s.index_level * (1.0 + 0.04 * ((k as f64) * 1.7).sin())))
        .collect()
}

pub struct Dataset {
    pub dir: tempfile::TempDir,
    pub quotes: PathBuf,
    pub observables: PathBuf,
    pub realized: PathBuf,
}

pub fn write_dataset(snaps: &[MarketSnapshot], realized: &[(NaiveDate, f64)]) -> Dataset {
    let dir = tempfile::tempdir().unwrap();
    let quotes = dir.path().join("quotes.csv");
    let observables = dir.path().join("observables.csv");
    let realized_path = dir.path().join("realized.csv");
    write_quotes_csv(snaps, std::fs::File::create(&quotes).unwrap()).unwrap();
    write_observables_csv(snaps, std::fs::File::create(&observables).unwrap()).unwrap();
    let mut text = String::from("expiry_date,index_level\n");
    for (d, x) in realized {
        text.push_str(&format!("{d},{x:?}\n"));
    }
    std::fs::write(&realized_path, text).unwrap();
    Dataset {
        dir,
        quotes,
        observables,
        realized: realized_path,
    }
}

impl Dataset {
    /// Config file shared by the runs: coarse grid, small bootstrap.
    pub fn config(&self, extra: &str) -> PathBuf {
        let path = self.dir.path().join("run.cfg");
        let text = format!(
            "quotes = {}\nobservables = {}\nrealized = {}\n\
             grid_tick = 20\nmoneyness_lower = 0.89\nscale = 1, 100\n\
             replications = 99\nblock_months = 2\nmodel_draws = 2000\njobs = 2\n{extra}",
            self.quotes.display(),
            self.observables.display(),
            self.realized.display()
        );
        std::fs::write(&path, text).unwrap();
        path
    }
}

pub fn sdarb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdarb"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = sdarb(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every regular file below `dir`, relative path and contents, sorted.
pub fn snapshot_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
