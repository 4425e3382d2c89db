//! Option-quote snapshots and market observables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("parse error in {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("no quotes left after moneyness filter for {0}")]
    EmptyAfterFilter(NaiveDate),
    #[error("no market observables for trade date {0}")]
    MissingObservables(NaiveDate),
    #[error("depth scale must be positive, got {0}")]
    InvalidScale(i64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptionKind {
    Put,
    Call,
}

impl OptionKind {
    /// 1 for a call, 0 for a put.
    pub fn call_indicator(self) -> f64 {
        match self {
            OptionKind::Put => 0.0,
            OptionKind::Call => 1.0,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            OptionKind::Put => "P",
            OptionKind::Call => "C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub strike: f64,
    pub kind: OptionKind,
    pub bid: f64,
    pub ask: f64,
    pub bid_size: f64,
    pub ask_size: f64,
}

impl OptionQuote {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }

    /// Payoff of one contract when the index settles at `level`.
    pub fn payoff(&self, level: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (level - self.strike).max(0.0),
            OptionKind::Put => (self.strike - level).max(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |m: String| Err(MarketError::Validation(m));
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return bad(format!("nonpositive strike {}", self.strike));
        }
        if !(self.bid >= 0.0) || !self.bid.is_finite() {
            return bad(format!("negative bid {} at strike {}", self.bid, self.strike));
        }
        if !(self.ask > 0.0) || !self.ask.is_finite() {
            return bad(format!("nonpositive ask {} at strike {}", self.ask, self.strike));
        }
        if self.ask < self.bid {
            return bad(format!(
                "ask {} below bid {} at strike {}",
                self.ask, self.bid, self.strike
            ));
        }
        if !(self.bid_size >= 0.0) || !(self.ask_size >= 0.0) {
            return bad(format!("negative quote size at strike {}", self.strike));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub trade_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub index_level: f64,
    pub risk_free_rate: f64,
    /// Volatility index in percentage points.
    pub vol_index: f64,
    pub trading_days_to_expiry: u32,
    /// Sorted by strike, puts before calls at equal strikes.
    pub quotes: Vec<OptionQuote>,
}

impl MarketSnapshot {
    pub fn num_options(&self) -> usize {
        self.quotes.len()
    }

    pub fn strikes(&self) -> Vec<f64> {
        self.quotes.iter().map(|q| q.strike).collect()
    }

    pub fn min_strike(&self) -> f64 {
        self.quotes.first().map_or(f64::NAN, |q| q.strike)
    }

    pub fn max_strike(&self) -> f64 {
        self.quotes.last().map_or(f64::NAN, |q| q.strike)
    }

    pub fn calendar_days_to_expiry(&self) -> i64 {
        (self.expiry_date - self.trade_date).num_days()
    }

    /// Checks every snapshot invariant.
    pub fn validate(&self) -> Result<(), MarketError> {
        if self.expiry_date <= self.trade_date {
            return Err(MarketError::Validation(format!(
                "expiry {} not after trade date {}",
                self.expiry_date, self.trade_date
            )));
        }
        if self.trading_days_to_expiry < 1 {
            return Err(MarketError::Validation("trading_days_to_expiry must be at least 1".into()));
        }
        if !(self.index_level > 0.0) {
            return Err(MarketError::Validation(format!(
                "nonpositive index level {}",
                self.index_level
            )));
        }
        for q in &self.quotes {
            q.validate()?;
        }
        for w in self.quotes.windows(2) {
            if canonical_order(&w[0], &w[1]) != std::cmp::Ordering::Less {
                return Err(MarketError::Validation(format!(
                    "quotes out of order or duplicated at strike {} ({})",
                    w[1].strike,
                    w[1].kind.code()
                )));
            }
        }
        Ok(())
    }

    /// Sorts quotes canonically and rejects duplicate (strike, kind) pairs.
    pub fn canonicalize(&mut self) -> Result<(), MarketError> {
        self.quotes.sort_by(canonical_order);
        self.validate()
    }
}

fn canonical_order(a: &OptionQuote, b: &OptionQuote) -> std::cmp::Ordering {
    a.strike.total_cmp(&b.strike).then(a.kind.cmp(&b.kind))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoneynessFilter {
    pub lower: f64,
    pub upper: f64,
}

impl Default for MoneynessFilter {
    fn default() -> Self {
        Self {
            lower: 0.90,
            upper: 1.05,
        }
    }
}

impl MoneynessFilter {
    pub fn new(lower: f64, upper: f64) -> Result<Self, MarketError> {
        if !(0.0 < lower && lower < 1.0 && 1.0 < upper) {
            return Err(MarketError::Validation(format!(
                "moneyness filter needs 0 < lower < 1 < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn retains(&self, strike: f64, index_level: f64) -> bool {
        strike >= self.lower * index_level && strike <= self.upper * index_level
    }
}

/// Market observables for one trade date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub index_level: f64,
    pub risk_free_rate: f64,
    pub vol_index: f64,
    pub trading_days_to_expiry: u32,
}

#[derive(Debug, Deserialize)]
struct QuoteCsvRow {
    trade_date: NaiveDate,
    expiry_date: NaiveDate,
    kind: String,
    strike: f64,
    bid: f64,
    ask: f64,
    bid_size: f64,
    ask_size: f64,
}

#[derive(Debug, Deserialize)]
struct ObservablesCsvRow {
    trade_date: NaiveDate,
    index_level: f64,
    risk_free_rate: f64,
    vol_index: f64,
    trading_days_to_expiry: u32,
}

/// Quotes of one trade date before filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    pub trade_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub quotes: Vec<OptionQuote>,
}

fn parse_err(source_name: &str, e: csv::Error) -> MarketError {
    let line = e.position().map_or(0, |p| p.line());
    MarketError::Parse {
        source_name: source_name.to_string(),
        line,
        message: e.to_string(),
    }
}

/// Reads the quote CSV, grouped by trade date in ascending order.
pub fn read_quotes<R: Read>(source_name: &str, input: R) -> Result<Vec<QuoteSet>, MarketError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut by_date: BTreeMap<NaiveDate, QuoteSet> = BTreeMap::new();
    for rec in rdr.deserialize::<QuoteCsvRow>() {
        let row = rec.map_err(|e| parse_err(source_name, e))?;
        let kind = match row.kind.as_str() {
            "P" | "p" => OptionKind::Put,
            "C" | "c" => OptionKind::Call,
            other => {
                return Err(MarketError::Parse {
                    source_name: source_name.to_string(),
                    line: 0,
                    message: format!("unknown option kind {other:?} on {}", row.trade_date),
                })
            }
        };
        let q = OptionQuote {
            strike: row.strike,
            kind,
            bid: row.bid,
            ask: row.ask,
            bid_size: row.bid_size,
            ask_size: row.ask_size,
        };
        q.validate()?;
        let set = by_date.entry(row.trade_date).or_insert_with(|| QuoteSet {
            trade_date: row.trade_date,
            expiry_date: row.expiry_date,
            quotes: Vec::new(),
        });
        if set.expiry_date != row.expiry_date {
            return Err(MarketError::Validation(format!(
                "trade date {} has several expiries",
                row.trade_date
            )));
        }
        set.quotes.push(q);
    }
    Ok(by_date.into_values().collect())
}

pub fn read_observables<R: Read>(
    source_name: &str,
    input: R,
) -> Result<BTreeMap<NaiveDate, Observables>, MarketError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = BTreeMap::new();
    for rec in rdr.deserialize::<ObservablesCsvRow>() {
        let r = rec.map_err(|e| parse_err(source_name, e))?;
        let obs = Observables {
            index_level: r.index_level,
            risk_free_rate: r.risk_free_rate,
            vol_index: r.vol_index,
            trading_days_to_expiry: r.trading_days_to_expiry,
        };
        if out.insert(r.trade_date, obs).is_some() {
            return Err(MarketError::Validation(format!(
                "duplicate observables for {}",
                r.trade_date
            )));
        }
    }
    Ok(out)
}

/// Reads an exclusion list: one ISO date per line, `#` comments allowed.
pub fn read_exclusions<R: Read>(mut input: R) -> Result<BTreeSet<NaiveDate>, MarketError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let d = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| MarketError::Parse {
            source_name: "exclusions".into(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.insert(d);
    }
    Ok(out)
}

/// Joins one quote set with its observables and applies the moneyness filter.
pub fn assemble_snapshot(
    set: &QuoteSet,
    obs: &Observables,
    filter: &MoneynessFilter,
) -> Result<MarketSnapshot, MarketError> {
    let quotes: Vec<OptionQuote> = set
        .quotes
        .iter()
        .filter(|q| filter.retains(q.strike, obs.index_level))
        .cloned()
        .collect();
    if quotes.is_empty() {
        return Err(MarketError::EmptyAfterFilter(set.trade_date));
    }
    let mut snap = MarketSnapshot {
        trade_date: set.trade_date,
        expiry_date: set.expiry_date,
        index_level: obs.index_level,
        risk_free_rate: obs.risk_free_rate,
        vol_index: obs.vol_index,
        trading_days_to_expiry: obs.trading_days_to_expiry,
        quotes,
    };
    snap.canonicalize()?;
    Ok(snap)
}

/// Loads every snapshot from a quote file and an observables file, skipping
/// excluded trade dates. Snapshots come back in trade-date order.
pub fn load_snapshots(
    quotes_path: &Path,
    observables_path: &Path,
    filter: &MoneynessFilter,
    exclusions: &BTreeSet<NaiveDate>,
) -> Result<Vec<MarketSnapshot>, MarketError> {
    let sets = read_quotes(
        &quotes_path.display().to_string(),
        std::fs::File::open(quotes_path)?,
    )?;
    let obs = read_observables(
        &observables_path.display().to_string(),
        std::fs::File::open(observables_path)?,
    )?;
    sets.iter()
        .filter(|s| !exclusions.contains(&s.trade_date))
        .map(|s| {
            let o = obs
                .get(&s.trade_date)
                .ok_or(MarketError::MissingObservables(s.trade_date))?;
            assemble_snapshot(s, o, filter)
        })
        .collect()
}

/// Loads the single snapshot in a quote file.
pub fn load_snapshot(
    quotes_path: &Path,
    observables_path: &Path,
    filter: &MoneynessFilter,
) -> Result<MarketSnapshot, MarketError> {
    let mut all = load_snapshots(quotes_path, observables_path, filter, &BTreeSet::new())?;
    match all.len() {
        1 => Ok(all.remove(0)),
        k => Err(MarketError::Validation(format!(
            "expected one trade date in {}, found {k}",
            quotes_path.display()
        ))),
    }
}

/// Writes quotes in the CSV schema accepted by [`read_quotes`].
pub fn write_quotes_csv<W: std::io::Write>(
    snapshots: &[MarketSnapshot],
    out: W,
) -> Result<(), MarketError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trade_date",
        "expiry_date",
        "kind",
        "strike",
        "bid",
        "ask",
        "bid_size",
        "ask_size",
    ])
    .map_err(csv_io)?;
    for s in snapshots {
        for q in &s.quotes {
            w.write_record([
                s.trade_date.to_string(),
                s.expiry_date.to_string(),
                q.kind.code().to_string(),
                format!("{:?}", q.strike),
                format!("{:?}", q.bid),
                format!("{:?}", q.ask),
                format!("{:?}", q.bid_size),
                format!("{:?}", q.ask_size),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes observables in the CSV schema accepted by [`read_observables`].
pub fn write_observables_csv<W: std::io::Write>(
    snapshots: &[MarketSnapshot],
    out: W,
) -> Result<(), MarketError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trade_date",
        "index_level",
        "risk_free_rate",
        "vol_index",
        "trading_days_to_expiry",
    ])
    .map_err(csv_io)?;
    for s in snapshots {
        w.write_record([
            s.trade_date.to_string(),
            format!("{:?}", s.index_level),
            format!("{:?}", s.risk_free_rate),
            format!("{:?}", s.vol_index),
            s.trading_days_to_expiry.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> MarketError {
    MarketError::Io(std::io::Error::other(e.to_string()))
}

/// Position caps `v = ask_size / S` (long) and `w = bid_size / S` (short).
pub fn apply_depth_constraint(
    snapshot: &MarketSnapshot,
    scale: i64,
) -> Result<(Vec<f64>, Vec<f64>), MarketError> {
    if scale <= 0 {
        return Err(MarketError::InvalidScale(scale));
    }
    let s = scale as f64;
    let v = snapshot.quotes.iter().map(|q| q.ask_size / s).collect();
    let w = snapshot.quotes.iter().map(|q| q.bid_size / s).collect();
    Ok((v, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn csv_text(rows: &[&str]) -> String {
        let mut s = String::from("trade_date,expiry_date,kind,strike,bid,ask,bid_size,ask_size\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn obs(index: f64) -> Observables {
        Observables {
            index_level: index,
            risk_free_rate: 0.01,
            vol_index: 18.0,
            trading_days_to_expiry: 20,
        }
    }

    #[test]
    fn filter_keeps_strikes_within_moneyness() {
        let text = csv_text(&[
            "2021-11-17,2021-12-17,C,3500,1,2,5,5",
            "2021-11-17,2021-12-17,C,3700,1,2,5,5",
            "2021-11-17,2021-12-17,C,4100,1,2,5,5",
            "2021-11-17,2021-12-17,C,4300,1,2,5,5",
        ]);
        let sets = read_quotes("t", text.as_bytes()).unwrap();
        let snap = assemble_snapshot(&sets[0], &obs(4000.0), &MoneynessFilter::default()).unwrap();
        assert_eq!(snap.strikes(), vec![3700.0, 4100.0]);
    }

    #[test]
    fn crossed_quote_is_rejected() {
        let text = csv_text(&["2021-11-17,2021-12-17,P,4000,5.0,4.0,1,1"]);
        assert!(matches!(
            read_quotes("t", text.as_bytes()),
            Err(MarketError::Validation(_))
        ));
        let text = csv_text(&["2021-11-17,2021-12-17,P,0,1.0,4.0,1,1"]);
        assert!(read_quotes("t", text.as_bytes()).is_err());
    }

    #[test]
    fn puts_precede_calls_at_equal_strike() {
        let text = csv_text(&[
            "2021-11-17,2021-12-17,C,4000,1,2,5,5",
            "2021-11-17,2021-12-17,P,4000,1,2,5,5",
            "2021-11-17,2021-12-17,C,3950,1,2,5,5",
        ]);
        let sets = read_quotes("t", text.as_bytes()).unwrap();
        let snap = assemble_snapshot(&sets[0], &obs(4000.0), &MoneynessFilter::default()).unwrap();
        let kinds: Vec<_> = snap.quotes.iter().map(|q| (q.strike, q.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (3950.0, OptionKind::Call),
                (4000.0, OptionKind::Put),
                (4000.0, OptionKind::Call)
            ]
        );
    }

    #[test]
    fn empty_after_filter_and_malformed_rows() {
        let text = csv_text(&["2021-11-17,2021-12-17,C,9000,1,2,5,5"]);
        let sets = read_quotes("t", text.as_bytes()).unwrap();
        assert!(matches!(
            assemble_snapshot(&sets[0], &obs(4000.0), &MoneynessFilter::default()),
            Err(MarketError::EmptyAfterFilter(d)) if d == date("2021-11-17")
        ));
        let text = csv_text(&["2021-11-17,2021-12-17,C,abc,1,2,5,5"]);
        assert!(matches!(
            read_quotes("t", text.as_bytes()),
            Err(MarketError::Parse { .. })
        ));
    }

    #[test]
    fn depth_caps_scale_inversely() {
        let snap = MarketSnapshot {
            trade_date: date("2021-11-17"),
            expiry_date: date("2021-12-17"),
            index_level: 4700.0,
            risk_free_rate: 0.0,
            vol_index: 18.0,
            trading_days_to_expiry: 20,
            quotes: vec![OptionQuote {
                strike: 4700.0,
                kind: OptionKind::Call,
                bid: 1.0,
                ask: 2.0,
                bid_size: 0.0,
                ask_size: 50.0,
            }],
        };
        let (v, w) = apply_depth_constraint(&snap, 1).unwrap();
        assert_eq!((v[0], w[0]), (50.0, 0.0));
        let (v, _) = apply_depth_constraint(&snap, 1000).unwrap();
        assert_eq!(v[0], 0.05);
        assert!(apply_depth_constraint(&snap, 0).is_err());
    }

    #[test]
    fn exclusions_parse_with_comments() {
        let ex = read_exclusions("2004-08-20 # data glitch\n\n2010-01-04\n".as_bytes()).unwrap();
        assert_eq!(ex.len(), 2);
        assert!(ex.contains(&date("2004-08-20")));
    }
}
