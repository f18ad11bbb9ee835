//! Quasi-identifier feature profiles: when an address is active during the
//! day, and how it prices gas relative to the network.
//!
//! Both profiles share one shape: `[mean, median, population std]` followed
//! by a normalized histogram. Time-of-day works on fractional UTC hours in
//! [0, 24); gas prices are normalized by the daily network average so that a
//! wallet's pricing habit survives fee-market drift.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use primitive_types::U512;
use serde::{Deserialize, Serialize};

use crate::ingest::Transaction;
use crate::types::{u512_to_f64, Address, Wei};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Bins for the time-of-day histogram, over [0, 24) hours.
    pub b_hour: usize,
    /// Bins for the normalized-gas histogram, over [0, gas_clip].
    pub b_gas: usize,
    /// Normalized gas ratios above this are outliers: kept for the moment
    /// statistics, dropped from the histogram.
    pub gas_clip: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { b_hour: 6, b_gas: 50, gas_clip: 5.0 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(1..=24).contains(&self.b_hour) {
            return Err(ProfileError::InvalidConfig(format!(
                "b_hour must be in [1, 24], got {}",
                self.b_hour
            )));
        }
        if self.b_gas < 1 {
            return Err(ProfileError::InvalidConfig("b_gas must be at least 1".into()));
        }
        if !(self.gas_clip > 0.0) {
            return Err(ProfileError::InvalidConfig(format!(
                "gas_clip must be positive, got {}",
                self.gas_clip
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    TimeOfDay,
    GasPrice,
    Embedding,
    Concat,
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeatureKind::TimeOfDay => "timeofday",
            FeatureKind::GasPrice => "gasprice",
            FeatureKind::Embedding => "embedding",
            FeatureKind::Concat => "concat",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "timeofday" => Ok(FeatureKind::TimeOfDay),
            "gasprice" => Ok(FeatureKind::GasPrice),
            "embedding" => Ok(FeatureKind::Embedding),
            "concat" => Ok(FeatureKind::Concat),
            _ => Err(format!("unknown feature kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub address: Address,
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("no usable transactions for feature extraction")]
    EmptyInput,
    #[error("no daily average available for {0}")]
    MissingDay(String),
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
}

/// Day index since the epoch; negative-safe.
pub fn day_index(timestamp: i64) -> i64 {
    timestamp.div_euclid(SECONDS_PER_DAY)
}

pub fn day_string(day: i64) -> String {
    chrono::DateTime::from_timestamp(day * SECONDS_PER_DAY, 0)
        .map(|dt| dt.date_naive().format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| format!("day{day}"))
}

fn parse_day(s: &str) -> Option<i64> {
    let date = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    Some(day_index(date.and_hms_opt(0, 0, 0)?.and_utc().timestamp()))
}

/// Exact per-day average: sum of gas prices over the count of transactions,
/// kept as a rational so corpus-derived and file-loaded series share one
/// representation.
#[derive(Debug, Clone, Default)]
pub struct DailyGasSeries {
    days: BTreeMap<i64, (U512, u128)>,
}

impl DailyGasSeries {
    pub fn average_for(&self, day: i64) -> Option<f64> {
        self.days.get(&day).map(|(num, den)| u512_to_f64(*num) / *den as f64)
    }

    pub fn contains_day(&self, day: i64) -> bool {
        self.days.contains_key(&day)
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// gas / day-average, computed as gas * den / num to avoid rounding the
    /// average first.
    pub fn ratio_for(&self, day: i64, gas_price: Wei) -> Option<f64> {
        let (num, den) = self.days.get(&day)?;
        Some(gas_price.to_f64() * *den as f64 / u512_to_f64(*num))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "avg_gas_price_wei"])
            .map_err(csv_io)?;
        for (day, (num, den)) in &self.days {
            w.write_record([day_string(*day), render_rational(*num, *den)])
                .map_err(csv_io)?;
        }
        w.flush()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ProfileError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut days = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ProfileError::InvalidConfig(e.to_string()))?;
            let (date, avg) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
            let day = parse_day(date)
                .ok_or_else(|| ProfileError::MissingDay(date.to_string()))?;
            let (num, den) = parse_rational(avg)
                .ok_or_else(|| ProfileError::InvalidConfig(format!("bad average {avg:?}")))?;
            if num.is_zero() {
                return Err(ProfileError::InvalidConfig(format!(
                    "day {date} has zero average gas price"
                )));
            }
            days.insert(day, (num, den));
        }
        Ok(DailyGasSeries { days })
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// Renders num/den as a decimal with up to 9 fractional digits, trailing
/// zeros trimmed. Exact whenever den divides 10^9.
fn render_rational(num: U512, den: u128) -> String {
    let den = U512::from(den);
    let int = num / den;
    let rem = num % den;
    if rem.is_zero() {
        return int.to_string();
    }
    let scaled = rem * U512::from(1_000_000_000u64) / den;
    let frac = format!("{:09}", scaled.as_u128());
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        int.to_string()
    } else {
        format!("{int}.{frac}")
    }
}

fn parse_rational(s: &str) -> Option<(U512, u128)> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if frac.len() > 18 {
        return None;
    }
    let den = 10u128.pow(frac.len() as u32);
    let mut num = U512::from_dec_str(int).ok()?;
    num = num * U512::from(den);
    if !frac.is_empty() {
        num += U512::from_dec_str(frac).ok()?;
    }
    Some((num, den))
}

/// Per-UTC-day arithmetic mean of gas price over non-internal transactions.
/// A day whose mean would be zero (only zero-gas transactions) is dropped so
/// every present day supports ratio computation.
pub fn daily_average_gas_price(corpus: &[Transaction]) -> DailyGasSeries {
    let mut days: BTreeMap<i64, (U512, u128)> = BTreeMap::new();
    for tx in corpus.iter().filter(|t| !t.is_internal) {
        let entry = days.entry(day_index(tx.timestamp)).or_insert((U512::zero(), 0));
        entry.0 += tx.gas_price_wei.widen();
        entry.1 += 1;
    }
    days.retain(|_, (num, _)| !num.is_zero());
    DailyGasSeries { days }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite inputs"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn population_std(xs: &[f64], mu: f64) -> f64 {
    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// `[mean, median, population std]` of fractional UTC hours, then a
/// normalized `b_hour`-bin histogram over [0, 24).
pub fn time_of_day_features(
    address: Address,
    txs: &[Transaction],
    cfg: &FeatureConfig,
) -> Result<FeatureVector, ProfileError> {
    cfg.validate()?;
    if txs.is_empty() {
        return Err(ProfileError::EmptyInput);
    }
    let hours: Vec<f64> = txs
        .iter()
        .map(|t| t.timestamp.rem_euclid(SECONDS_PER_DAY) as f64 / 3600.0)
        .collect();
    let mut hist = vec![0.0; cfg.b_hour];
    for tx in txs {
        // Integer binning: second-of-day * bins / seconds-per-day is exact
        // and always lands in [0, b_hour).
        let sec = tx.timestamp.rem_euclid(SECONDS_PER_DAY);
        let bin = (sec as i128 * cfg.b_hour as i128 / SECONDS_PER_DAY as i128) as usize;
        hist[bin] += 1.0;
    }
    for h in &mut hist {
        *h /= txs.len() as f64;
    }
    let mu = mean(&hours);
    let mut values = vec![mu, median(&hours), population_std(&hours, mu)];
    values.extend(hist);
    Ok(FeatureVector { address, kind: FeatureKind::TimeOfDay, values })
}

/// `[mean, median, population std]` of day-normalized gas ratios, then a
/// normalized `b_gas`-bin histogram over [0, gas_clip]. Ratios above the clip
/// stay in the statistics but not the histogram; zero-gas and internal
/// transactions are ignored entirely.
pub fn normalized_gas_features(
    address: Address,
    txs: &[Transaction],
    series: &DailyGasSeries,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, ProfileError> {
    cfg.validate()?;
    let mut ratios = Vec::new();
    for tx in txs.iter().filter(|t| !t.is_internal && !t.gas_price_wei.is_zero()) {
        let day = day_index(tx.timestamp);
        let ratio = series
            .ratio_for(day, tx.gas_price_wei)
            .ok_or_else(|| ProfileError::MissingDay(day_string(day)))?;
        ratios.push(ratio);
    }
    if ratios.is_empty() {
        return Err(ProfileError::EmptyInput);
    }
    let mut hist = vec![0.0; cfg.b_gas];
    let retained: Vec<f64> = ratios.iter().copied().filter(|r| *r <= cfg.gas_clip).collect();
    let width = cfg.gas_clip / cfg.b_gas as f64;
    for r in &retained {
        let bin = ((r / width) as usize).min(cfg.b_gas - 1);
        hist[bin] += 1.0;
    }
    if !retained.is_empty() {
        for h in &mut hist {
            *h /= retained.len() as f64;
        }
    }
    let mu = mean(&ratios);
    let mut values = vec![mu, median(&ratios), population_std(&ratios, mu)];
    values.extend(hist);
    Ok(FeatureVector { address, kind: FeatureKind::GasPrice, values })
}

/// Joins several profiles of one address end to end.
pub fn concat_features(parts: &[&FeatureVector]) -> Result<FeatureVector, ProfileError> {
    let first = parts.first().ok_or(ProfileError::EmptyInput)?;
    if parts.iter().any(|p| p.address != first.address) {
        return Err(ProfileError::InvalidConfig(
            "cannot concatenate features of different addresses".into(),
        ));
    }
    Ok(FeatureVector {
        address: first.address,
        kind: FeatureKind::Concat,
        values: parts.iter().flat_map(|p| p.values.iter().copied()).collect(),
    })
}

/// A named feature extractor, so profile kinds can be picked by config or
/// flag the same way walk strategies are.
pub trait Profiler: Send + Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> FeatureKind;
    /// `txs` are the address's sent, non-internal transactions.
    fn profile(
        &self,
        address: Address,
        txs: &[Transaction],
        series: &DailyGasSeries,
        cfg: &FeatureConfig,
    ) -> Result<FeatureVector, ProfileError>;
}

struct TimeOfDayProfiler;
struct GasPriceProfiler;

impl Profiler for TimeOfDayProfiler {
    fn name(&self) -> &'static str {
        "timeofday"
    }
    fn kind(&self) -> FeatureKind {
        FeatureKind::TimeOfDay
    }
    fn profile(
        &self,
        address: Address,
        txs: &[Transaction],
        _series: &DailyGasSeries,
        cfg: &FeatureConfig,
    ) -> Result<FeatureVector, ProfileError> {
        time_of_day_features(address, txs, cfg)
    }
}

impl Profiler for GasPriceProfiler {
    fn name(&self) -> &'static str {
        "gasprice"
    }
    fn kind(&self) -> FeatureKind {
        FeatureKind::GasPrice
    }
    fn profile(
        &self,
        address: Address,
        txs: &[Transaction],
        series: &DailyGasSeries,
        cfg: &FeatureConfig,
    ) -> Result<FeatureVector, ProfileError> {
        normalized_gas_features(address, txs, series, cfg)
    }
}

pub fn profilers() -> Vec<Box<dyn Profiler>> {
    vec![Box::new(TimeOfDayProfiler), Box::new(GasPriceProfiler)]
}

pub fn profiler(name: &str) -> Option<Box<dyn Profiler>> {
    profilers().into_iter().find(|p| p.name() == name)
}

/// Writes `address,kind,v0,v1,...` rows. Rows may differ in width across
/// kinds; the header is sized to the widest.
pub fn write_features_csv<W: Write>(writer: W, features: &[FeatureVector]) -> std::io::Result<()> {
    let widest = features.iter().map(|f| f.values.len()).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    let mut header = vec!["address".to_string(), "kind".to_string()];
    header.extend((0..widest).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_io)?;
    for f in features {
        let mut rec = vec![f.address.to_string(), f.kind.to_string()];
        rec.extend(f.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<Vec<FeatureVector>, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ProfileError::InvalidConfig(e.to_string()))?;
        let mut fields = rec.iter();
        let address: Address = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|e| ProfileError::InvalidConfig(format!("{e}")))?;
        let kind: FeatureKind = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(ProfileError::InvalidConfig)?;
        let values = fields
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| ProfileError::InvalidConfig(format!("bad value {v:?}: {e}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProfileError::InvalidConfig(format!(
                "non-finite feature value for {address}"
            )));
        }
        out.push(FeatureVector { address, kind, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TxHash;
    use proptest::prelude::*;

    fn addr(n: u8) -> Address {
        let mut b = [0u8; 20];
        b[0] = n;
        Address(b)
    }

    fn tx_at(ts: i64, gas_gwei: u64, internal: bool, n: u8) -> Transaction {
        let mut h = [0u8; 32];
        h[0] = n;
        h[31] = internal as u8;
        Transaction {
            tx_hash: TxHash(h),
            block_number: n as u64,
            timestamp: ts,
            from_address: addr(1),
            to_address: Some(addr(2)),
            value_wei: Wei::from_u64(1),
            gas_price_wei: Wei::from_u64(gas_gwei * 1_000_000_000),
            gas_used: 21_000,
            is_internal: internal,
        }
    }

    // 2020-01-01 00:00:00 UTC, a day boundary.
    const DAY0: i64 = 1_577_836_800;

    #[test]
    fn time_of_day_example_histogram() {
        let txs = vec![
            tx_at(DAY0 + 30 * 60, 10, false, 1),      // 00:30
            tx_at(DAY0 + 75 * 60, 10, false, 2),      // 01:15
            tx_at(DAY0 + 13 * 3600, 10, false, 3),    // 13:00
        ];
        let cfg = FeatureConfig { b_hour: 4, ..Default::default() };
        let f = time_of_day_features(addr(1), &txs, &cfg).unwrap();
        assert_eq!(f.values.len(), 3 + 4);
        let hist = &f.values[3..];
        assert!((hist[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(hist[1], 0.0);
        assert!((hist[2] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(hist[3], 0.0);
        // Hours are 0.5, 1.25, 13.0.
        assert!((f.values[0] - (0.5 + 1.25 + 13.0) / 3.0).abs() < 1e-12);
        assert!((f.values[1] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn single_midnight_tx_is_degenerate() {
        let txs = vec![tx_at(DAY0, 10, false, 1)];
        let cfg = FeatureConfig { b_hour: 6, ..Default::default() };
        let f = time_of_day_features(addr(1), &txs, &cfg).unwrap();
        assert_eq!(&f.values[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(f.values[3], 1.0);
        assert!(f.values[4..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stats_match_independent_recomputation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let txs: Vec<Transaction> = (0..100)
            .map(|i| tx_at(DAY0 + rng.gen_range(0..30 * SECONDS_PER_DAY), 10, false, i as u8))
            .collect();
        let f = time_of_day_features(addr(1), &txs, &FeatureConfig::default()).unwrap();

        // Oracle: recompute with different formulas. Mean via Kahan-free
        // two-pass, std via E[x^2] - mu^2, median via explicit index math.
        let hours: Vec<f64> = txs
            .iter()
            .map(|t| (t.timestamp.rem_euclid(SECONDS_PER_DAY)) as f64 / 3600.0)
            .collect();
        let n = hours.len() as f64;
        let mu: f64 = hours.iter().sum::<f64>() / n;
        let ex2: f64 = hours.iter().map(|h| h * h).sum::<f64>() / n;
        let std = (ex2 - mu * mu).sqrt();
        let mut sorted = hours.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = (sorted[49] + sorted[50]) / 2.0;

        assert!((f.values[0] - mu).abs() < 1e-12, "mean {} vs {}", f.values[0], mu);
        assert!((f.values[1] - med).abs() < 1e-12);
        assert!((f.values[2] - std).abs() < 1e-9, "std {} vs {}", f.values[2], std);
    }

    #[test]
    fn daily_average_examples() {
        // One day with 10, 20, 30 gwei: mean 20 gwei.
        let txs = vec![
            tx_at(DAY0 + 10, 10, false, 1),
            tx_at(DAY0 + 20, 20, false, 2),
            tx_at(DAY0 + 30, 30, false, 3),
        ];
        let series = daily_average_gas_price(&txs);
        assert_eq!(series.average_for(day_index(DAY0)), Some(20e9));

        // A day with only internal transactions is absent.
        let txs = vec![tx_at(DAY0, 10, true, 1)];
        assert!(daily_average_gas_price(&txs).is_empty());

        // A day with only zero-gas transactions is absent too.
        let txs = vec![tx_at(DAY0, 0, false, 1)];
        assert!(daily_average_gas_price(&txs).is_empty());
    }

    #[test]
    fn daily_average_three_day_fixture() {
        let txs = vec![
            tx_at(DAY0 + 5, 4, false, 1),
            tx_at(DAY0 + 6, 8, false, 2),
            tx_at(DAY0 + SECONDS_PER_DAY, 7, false, 3),
            tx_at(DAY0 + SECONDS_PER_DAY + 1, 0, false, 4), // zero-gas pulls the mean down but stays in the count
            tx_at(DAY0 + 2 * SECONDS_PER_DAY, 5, false, 5),
            tx_at(DAY0 + 2 * SECONDS_PER_DAY, 5, true, 6), // internal, ignored
        ];
        let series = daily_average_gas_price(&txs);
        assert_eq!(series.len(), 3);
        let d = day_index(DAY0);
        assert_eq!(series.average_for(d), Some(6e9));
        assert_eq!(series.average_for(d + 1), Some(3.5e9));
        assert_eq!(series.average_for(d + 2), Some(5e9));
    }

    #[test]
    fn gas_ratio_of_day_average_is_one() {
        let txs = vec![
            tx_at(DAY0, 10, false, 1),
            tx_at(DAY0 + 1, 30, false, 2),
        ];
        let series = daily_average_gas_price(&txs);
        let probe = vec![tx_at(DAY0 + 2, 20, false, 3)];
        let f = normalized_gas_features(addr(1), &probe, &series, &FeatureConfig::default()).unwrap();
        assert!((f.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gas_example_histogram() {
        // Day average 20 gwei; sent txs at 10 and 20 gwei give ratios 0.5, 1.0.
        let corpus = vec![
            tx_at(DAY0, 10, false, 1),
            tx_at(DAY0 + 1, 30, false, 2),
        ];
        let series = daily_average_gas_price(&corpus);
        let mine = vec![tx_at(DAY0 + 2, 10, false, 3), tx_at(DAY0 + 3, 20, false, 4)];
        let cfg = FeatureConfig { b_gas: 5, gas_clip: 5.0, ..Default::default() };
        let f = normalized_gas_features(addr(1), &mine, &series, &cfg).unwrap();
        assert_eq!(&f.values[3..], &[0.5, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn clipped_ratios_stay_in_stats() {
        let corpus = vec![tx_at(DAY0, 10, false, 1)];
        let series = daily_average_gas_price(&corpus);
        // Ratios 1.0 and 7.0; the 7.0 is above the clip.
        let mine = vec![tx_at(DAY0 + 2, 10, false, 2), tx_at(DAY0 + 3, 70, false, 3)];
        let cfg = FeatureConfig { b_gas: 5, gas_clip: 5.0, ..Default::default() };
        let f = normalized_gas_features(addr(1), &mine, &series, &cfg).unwrap();
        assert!((f.values[0] - 4.0).abs() < 1e-12, "mean keeps the outlier");
        let hist = &f.values[3..];
        assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(hist[1], 1.0, "only the in-clip ratio is binned");
    }

    #[test]
    fn zero_gas_and_internal_txs_are_excluded() {
        let corpus = vec![tx_at(DAY0, 10, false, 1)];
        let series = daily_average_gas_price(&corpus);
        let mine = vec![
            tx_at(DAY0 + 2, 0, false, 2),
            tx_at(DAY0 + 3, 10, true, 3),
        ];
        assert_eq!(
            normalized_gas_features(addr(1), &mine, &series, &FeatureConfig::default()),
            Err(ProfileError::EmptyInput)
        );
    }

    #[test]
    fn missing_day_is_reported() {
        let corpus = vec![tx_at(DAY0, 10, false, 1)];
        let series = daily_average_gas_price(&corpus);
        let mine = vec![tx_at(DAY0 + 40 * SECONDS_PER_DAY, 10, false, 2)];
        match normalized_gas_features(addr(1), &mine, &series, &FeatureConfig::default()) {
            Err(ProfileError::MissingDay(d)) => assert_eq!(d, "2020-02-10"),
            other => panic!("expected MissingDay, got {other:?}"),
        }
    }

    #[test]
    fn ratio_at_clip_boundary_lands_in_last_bin() {
        let corpus = vec![tx_at(DAY0, 10, false, 1)];
        let series = daily_average_gas_price(&corpus);
        let mine = vec![tx_at(DAY0 + 1, 50, false, 2)]; // ratio exactly 5.0
        let cfg = FeatureConfig { b_gas: 5, gas_clip: 5.0, ..Default::default() };
        let f = normalized_gas_features(addr(1), &mine, &series, &cfg).unwrap();
        assert_eq!(f.values[3 + 4], 1.0);
    }

    #[test]
    fn series_csv_round_trip_preserves_ratios() {
        let txs = vec![
            tx_at(DAY0, 10, false, 1),
            tx_at(DAY0 + 1, 25, false, 2),
            tx_at(DAY0 + SECONDS_PER_DAY, 7, false, 3),
        ];
        let series = daily_average_gas_price(&txs);
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let loaded = DailyGasSeries::read_csv(buf.as_slice()).unwrap();
        for d in [day_index(DAY0), day_index(DAY0) + 1] {
            let a = series.average_for(d).unwrap();
            let b = loaded.average_for(d).unwrap();
            assert!((a - b).abs() / a < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn features_csv_round_trip_handles_mixed_widths() {
        let fs = vec![
            FeatureVector { address: addr(1), kind: FeatureKind::TimeOfDay, values: vec![1.0, 2.0, 0.5, 0.25] },
            FeatureVector { address: addr(2), kind: FeatureKind::GasPrice, values: vec![0.5, 0.5] },
        ];
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &fs).unwrap();
        let back = read_features_csv(buf.as_slice()).unwrap();
        assert_eq!(back, fs);
    }

    #[test]
    fn concat_joins_values_and_rejects_mixed_addresses() {
        let a = FeatureVector { address: addr(1), kind: FeatureKind::TimeOfDay, values: vec![1.0] };
        let b = FeatureVector { address: addr(1), kind: FeatureKind::GasPrice, values: vec![2.0, 3.0] };
        let joined = concat_features(&[&a, &b]).unwrap();
        assert_eq!(joined.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(joined.kind, FeatureKind::Concat);

        let c = FeatureVector { address: addr(2), kind: FeatureKind::GasPrice, values: vec![2.0] };
        assert!(concat_features(&[&a, &c]).is_err());
    }

    proptest! {
        #[test]
        fn shifting_a_whole_day_changes_nothing(
            offsets in proptest::collection::vec(0i64..SECONDS_PER_DAY * 7, 1..40)
        ) {
            let txs: Vec<Transaction> =
                offsets.iter().enumerate().map(|(i, o)| tx_at(DAY0 + o, 10, false, i as u8)).collect();
            let shifted: Vec<Transaction> = txs
                .iter()
                .cloned()
                .map(|mut t| { t.timestamp += SECONDS_PER_DAY; t })
                .collect();
            let cfg = FeatureConfig::default();
            let a = time_of_day_features(addr(1), &txs, &cfg).unwrap();
            let b = time_of_day_features(addr(1), &shifted, &cfg).unwrap();
            prop_assert_eq!(a.values, b.values);
        }

        #[test]
        fn scaling_a_day_leaves_ratios_alone(
            gwei in proptest::collection::vec(1u64..500, 2..20),
            scale in 2u64..20
        ) {
            let txs: Vec<Transaction> = gwei
                .iter()
                .enumerate()
                .map(|(i, g)| tx_at(DAY0 + i as i64, *g, false, i as u8))
                .collect();
            let scaled: Vec<Transaction> = txs
                .iter()
                .cloned()
                .map(|mut t| {
                    t.gas_price_wei = Wei::from_u64(
                        u64::try_from(t.gas_price_wei.0).unwrap() * scale,
                    );
                    t
                })
                .collect();
            let cfg = FeatureConfig::default();
            let a = normalized_gas_features(addr(1), &txs, &daily_average_gas_price(&txs), &cfg).unwrap();
            let b = normalized_gas_features(addr(1), &scaled, &daily_average_gas_price(&scaled), &cfg).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
            }
        }

        #[test]
        fn histograms_are_normalized_and_lengths_exact(
            offsets in proptest::collection::vec(0i64..SECONDS_PER_DAY, 1..30),
            b_hour in 1usize..=24
        ) {
            let txs: Vec<Transaction> =
                offsets.iter().enumerate().map(|(i, o)| tx_at(DAY0 + o, 10, false, i as u8)).collect();
            let cfg = FeatureConfig { b_hour, ..Default::default() };
            let f = time_of_day_features(addr(1), &txs, &cfg).unwrap();
            prop_assert_eq!(f.values.len(), 3 + b_hour);
            let hist = &f.values[3..];
            prop_assert!(hist.iter().all(|v| *v >= 0.0));
            prop_assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
