//! Linkability analysis for Tornado Cash-style fixed-denomination mixers.
//!
//! Deposits and withdraws arrive as pre-extracted event rows. Three
//! independent heuristics propose (deposit, withdraw) links within a pool:
//!
//! 1. **Address reuse** — the same address both deposited and withdrew.
//! 2. **Unique manual gas price** — a gas price that is not a whole multiple
//!    of 1 gwei (so it was almost certainly typed by hand) appears on exactly
//!    one deposit and exactly one withdraw, deposit first.
//! 3. **Direct interaction** — the deposit and withdraw addresses transacted
//!    with each other directly, in either direction, outside the mixer
//!    itself.
//!
//! Links from heuristics 2 and 3 connect *distinct* addresses and can be
//! promoted to ground-truth pairs for evaluating profiling attacks;
//! heuristic 1 links the same address to itself and is reported only as a
//! hygiene statistic. All computations are pure functions over immutable
//! event slices.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::{GroundTruthPair, PairOrigin, Transaction};
use crate::types::{Address, TxHash, Wei};

/// Fixed pool denominations, ordered by size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MixerPool {
    #[serde(rename = "0.1")]
    Eth01,
    #[serde(rename = "1")]
    Eth1,
    #[serde(rename = "10")]
    Eth10,
    #[serde(rename = "100")]
    Eth100,
}

impl MixerPool {
    pub const ALL: [MixerPool; 4] = [MixerPool::Eth01, MixerPool::Eth1, MixerPool::Eth10, MixerPool::Eth100];

    pub fn label(self) -> &'static str {
        match self {
            MixerPool::Eth01 => "0.1",
            MixerPool::Eth1 => "1",
            MixerPool::Eth10 => "10",
            MixerPool::Eth100 => "100",
        }
    }
}

impl std::fmt::Display for MixerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for MixerPool {
    type Err = TornadoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0.1" => Ok(MixerPool::Eth01),
            "1" => Ok(MixerPool::Eth1),
            "10" => Ok(MixerPool::Eth10),
            "100" => Ok(MixerPool::Eth100),
            other => Err(TornadoError::UnknownPool(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "deposit")]
    Deposit,
    #[serde(rename = "withdraw")]
    Withdraw,
}

/// One deposit or withdraw observed on a mixer pool. Withdraws sent through
/// a relayer are recorded under the recipient address; the relayer is never
/// a party to links.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TornadoEvent {
    pub mixer: MixerPool,
    pub kind: EventKind,
    pub address: Address,
    pub timestamp: i64,
    #[serde(rename = "gas_price_wei")]
    pub gas_price: Wei,
    pub tx_hash: TxHash,
}

/// A proposed (deposit, withdraw) connection within one pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub deposit: TornadoEvent,
    pub withdraw: TornadoEvent,
    /// Heuristic id: 1 address reuse, 2 unique gas price, 3 direct interaction.
    pub heuristic: u8,
    /// withdraw.timestamp − deposit.timestamp.
    pub elapsed: i64,
}

impl Link {
    fn new(deposit: &TornadoEvent, withdraw: &TornadoEvent, heuristic: u8) -> Self {
        debug_assert_eq!(deposit.mixer, withdraw.mixer);
        Link {
            deposit: deposit.clone(),
            withdraw: withdraw.clone(),
            heuristic,
            elapsed: withdraw.timestamp - deposit.timestamp,
        }
    }

    /// The moment both events have been observed on chain.
    pub fn observable_at(&self) -> i64 {
        self.deposit.timestamp.max(self.withdraw.timestamp)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TornadoError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed event row {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate event (kind, address, tx hash) at {0}")]
    DuplicateEvent(TxHash),
    #[error("non-positive timestamp on event {0}")]
    NonPositiveTimestamp(TxHash),
    #[error("unknown mixer pool {0:?}: expected 0.1, 1, 10 or 100")]
    UnknownPool(String),
    #[error("unknown link heuristic {0:?}")]
    UnknownHeuristic(String),
    #[error("unknown time window {0:?}: expected day, week or past")]
    UnknownWindow(String),
}

/// Checks event invariants: positive timestamps and a unique
/// (kind, address, tx hash) triple per event.
pub fn validate_events(events: &[TornadoEvent]) -> Result<(), TornadoError> {
    let mut seen = BTreeSet::new();
    for e in events {
        if e.timestamp <= 0 {
            return Err(TornadoError::NonPositiveTimestamp(e.tx_hash));
        }
        if !seen.insert((e.kind, e.address, e.tx_hash)) {
            return Err(TornadoError::DuplicateEvent(e.tx_hash));
        }
    }
    Ok(())
}

/// A gas price is "manual" when it is not a whole multiple of 1 gwei:
/// wallets default to round gwei values, so a fractional price was set by
/// hand and is likely to recur across one user's transactions.
pub fn is_manual_gas(gas_price: Wei) -> bool {
    !gas_price.0.is_zero() && gas_price.mod_pow10(9) != 0
}

fn sort_links(mut links: Vec<Link>) -> Vec<Link> {
    links.sort_by(|a, b| {
        (a.deposit.mixer, a.heuristic, a.deposit.tx_hash, a.withdraw.tx_hash).cmp(&(
            b.deposit.mixer,
            b.heuristic,
            b.deposit.tx_hash,
            b.withdraw.tx_hash,
        ))
    });
    links
}

/// Heuristic 1: within each pool, every (deposit, withdraw) pair whose
/// events share an address is linked.
pub fn address_reuse_links(events: &[TornadoEvent]) -> Vec<Link> {
    let mut groups: BTreeMap<(MixerPool, Address), (Vec<&TornadoEvent>, Vec<&TornadoEvent>)> =
        BTreeMap::new();
    for e in events {
        let slot = groups.entry((e.mixer, e.address)).or_default();
        match e.kind {
            EventKind::Deposit => slot.0.push(e),
            EventKind::Withdraw => slot.1.push(e),
        }
    }
    let mut links = Vec::new();
    for (deposits, withdraws) in groups.values() {
        for d in deposits {
            for w in withdraws {
                links.push(Link::new(d, w, 1));
            }
        }
    }
    sort_links(links)
}

/// How widely a gas price must be unique for heuristic 2 to trust it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GasUniquenessScope {
    /// Unique among the pool's own events (default).
    PerPool,
    /// Unique across all pools; the link itself still stays within one pool.
    Global,
}

/// Heuristic 2: a manual gas price carried by exactly one deposit and
/// exactly one withdraw, deposit strictly first, links the two. Uniqueness
/// is judged within the chosen scope.
pub fn unique_gas_links(events: &[TornadoEvent], scope: GasUniquenessScope) -> Vec<Link> {
    // Group key: the pool for per-pool scope, or a single bucket globally.
    let mut groups: BTreeMap<(Option<MixerPool>, Wei), (Vec<&TornadoEvent>, Vec<&TornadoEvent>)> =
        BTreeMap::new();
    for e in events {
        if !is_manual_gas(e.gas_price) {
            continue;
        }
        let key = match scope {
            GasUniquenessScope::PerPool => (Some(e.mixer), e.gas_price),
            GasUniquenessScope::Global => (None, e.gas_price),
        };
        let slot = groups.entry(key).or_default();
        match e.kind {
            EventKind::Deposit => slot.0.push(e),
            EventKind::Withdraw => slot.1.push(e),
        }
    }
    let mut links = Vec::new();
    for (deposits, withdraws) in groups.values() {
        if let ([d], [w]) = (deposits.as_slice(), withdraws.as_slice()) {
            if d.mixer == w.mixer && d.timestamp < w.timestamp {
                links.push(Link::new(d, w, 2));
            }
        }
    }
    sort_links(links)
}

/// Heuristic 3: a deposit and withdraw in the same pool are linked when any
/// corpus transaction connects their addresses directly, in either
/// direction. The mixer's own traffic is not evidence: corpus rows whose
/// hash matches a deposit or withdraw event are ignored.
pub fn interaction_links(events: &[TornadoEvent], corpus: &[Transaction]) -> Vec<Link> {
    let event_hashes: BTreeSet<TxHash> = events.iter().map(|e| e.tx_hash).collect();
    let mut partners: BTreeMap<Address, BTreeSet<Address>> = BTreeMap::new();
    for tx in corpus {
        if event_hashes.contains(&tx.tx_hash) {
            continue;
        }
        let Some(to) = tx.to_address else { continue };
        partners.entry(tx.from_address).or_default().insert(to);
        partners.entry(to).or_default().insert(tx.from_address);
    }

    let mut by_pool: BTreeMap<MixerPool, (Vec<&TornadoEvent>, Vec<&TornadoEvent>)> = BTreeMap::new();
    for e in events {
        let slot = by_pool.entry(e.mixer).or_default();
        match e.kind {
            EventKind::Deposit => slot.0.push(e),
            EventKind::Withdraw => slot.1.push(e),
        }
    }
    let mut links = Vec::new();
    for (deposits, withdraws) in by_pool.values() {
        for d in deposits {
            let Some(reachable) = partners.get(&d.address) else { continue };
            for w in withdraws {
                if reachable.contains(&w.address) {
                    links.push(Link::new(d, w, 3));
                }
            }
        }
    }
    sort_links(links)
}

/// A pluggable linking rule, so callers can select heuristics by name.
/// Rules that need no transaction corpus ignore the `corpus` argument.
pub trait LinkHeuristic {
    fn name(&self) -> &'static str;
    fn id(&self) -> u8;
    fn link(&self, events: &[TornadoEvent], corpus: &[Transaction]) -> Vec<Link>;
}

pub struct AddressReuse;

impl LinkHeuristic for AddressReuse {
    fn name(&self) -> &'static str {
        "address-reuse"
    }
    fn id(&self) -> u8 {
        1
    }
    fn link(&self, events: &[TornadoEvent], _corpus: &[Transaction]) -> Vec<Link> {
        address_reuse_links(events)
    }
}

pub struct UniqueGasPrice {
    pub scope: GasUniquenessScope,
}

impl Default for UniqueGasPrice {
    fn default() -> Self {
        UniqueGasPrice { scope: GasUniquenessScope::PerPool }
    }
}

impl LinkHeuristic for UniqueGasPrice {
    fn name(&self) -> &'static str {
        "unique-gas"
    }
    fn id(&self) -> u8 {
        2
    }
    fn link(&self, events: &[TornadoEvent], _corpus: &[Transaction]) -> Vec<Link> {
        unique_gas_links(events, self.scope)
    }
}

pub struct DirectInteraction;

impl LinkHeuristic for DirectInteraction {
    fn name(&self) -> &'static str {
        "interaction"
    }
    fn id(&self) -> u8 {
        3
    }
    fn link(&self, events: &[TornadoEvent], corpus: &[Transaction]) -> Vec<Link> {
        interaction_links(events, corpus)
    }
}

/// All linking rules in id order.
pub fn link_heuristics() -> Vec<Box<dyn LinkHeuristic>> {
    vec![Box::new(AddressReuse), Box::new(UniqueGasPrice::default()), Box::new(DirectInteraction)]
}

/// Looks a rule up by registry name.
pub fn link_heuristic(name: &str) -> Result<Box<dyn LinkHeuristic>, TornadoError> {
    link_heuristics()
        .into_iter()
        .find(|h| h.name() == name)
        .ok_or_else(|| TornadoError::UnknownHeuristic(name.to_string()))
}

/// How long before its withdraw a linked deposit may have happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeWindow {
    Day,
    Week,
    Past,
}

impl TimeWindow {
    pub const ALL: [TimeWindow; 3] = [TimeWindow::Day, TimeWindow::Week, TimeWindow::Past];

    fn max_elapsed(self) -> Option<i64> {
        match self {
            TimeWindow::Day => Some(86_400),
            TimeWindow::Week => Some(604_800),
            TimeWindow::Past => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TimeWindow::Day => "day",
            TimeWindow::Week => "week",
            TimeWindow::Past => "past",
        }
    }
}

impl std::fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for TimeWindow {
    type Err = TornadoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(TimeWindow::Day),
            "week" => Ok(TimeWindow::Week),
            "past" => Ok(TimeWindow::Past),
            other => Err(TornadoError::UnknownWindow(other.to_string())),
        }
    }
}

/// Turns links into deduplicated cross-address ground-truth pairs, keeping
/// those whose elapsed time fits the window. Same-address links (all of
/// heuristic 1) have no cross-address information and drop out.
pub fn build_ground_truth(links: &[Link], window: TimeWindow) -> Vec<GroundTruthPair> {
    let max_elapsed = window.max_elapsed();
    let mut pairs = BTreeSet::new();
    for link in links {
        if let Some(limit) = max_elapsed {
            if link.elapsed > limit {
                continue;
            }
        }
        if let Some(pair) = GroundTruthPair::new(
            link.deposit.address,
            link.withdraw.address,
            PairOrigin::TornadoHeuristic,
            None,
        ) {
            pairs.insert(pair);
        }
    }
    pairs.into_iter().collect()
}

/// One step of a pool's anonymity-set history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AnonymityPoint {
    pub t: i64,
    /// Deposits seen so far: the upper bound on the anonymity set.
    pub deposits: u64,
    /// Deposits minus those already linked by some heuristic.
    pub reduced: u64,
}

/// Replays each pool's events in time order and reports, at every event
/// time, the cumulative deposit count and the count remaining after
/// removing deposits that some link has exposed. A link counts only once
/// both of its events have happened.
pub fn anonymity_series(
    events: &[TornadoEvent],
    links: &[Link],
) -> BTreeMap<MixerPool, Vec<AnonymityPoint>> {
    // Earliest time each linked deposit becomes exposed.
    let mut exposed_at: BTreeMap<(MixerPool, TxHash), i64> = BTreeMap::new();
    for link in links {
        let key = (link.deposit.mixer, link.deposit.tx_hash);
        let t = link.observable_at();
        exposed_at.entry(key).and_modify(|v| *v = (*v).min(t)).or_insert(t);
    }

    let mut by_pool: BTreeMap<MixerPool, Vec<&TornadoEvent>> = BTreeMap::new();
    for e in events {
        by_pool.entry(e.mixer).or_default().push(e);
    }

    let mut series = BTreeMap::new();
    for (pool, mut pool_events) in by_pool {
        pool_events.sort_by_key(|e| (e.timestamp, e.tx_hash));
        let mut exposure_times: Vec<i64> = exposed_at
            .range((pool, TxHash([0; 32]))..=(pool, TxHash([0xff; 32])))
            .map(|(_, t)| *t)
            .collect();
        exposure_times.sort_unstable();

        let mut points: Vec<AnonymityPoint> = Vec::new();
        let mut deposits = 0u64;
        for e in &pool_events {
            if e.kind == EventKind::Deposit {
                deposits += 1;
            }
            let exposed = exposure_times.partition_point(|t| *t <= e.timestamp) as u64;
            let point = AnonymityPoint { t: e.timestamp, deposits, reduced: deposits - exposed };
            match points.last_mut() {
                Some(last) if last.t == point.t => *last = point,
                _ => points.push(point),
            }
        }
        series.insert(pool, points);
    }
    series
}

/// Per pool: how many addresses made 1, 2, 3... withdraws.
pub fn reuse_histogram(events: &[TornadoEvent]) -> BTreeMap<MixerPool, BTreeMap<u64, u64>> {
    let mut per_address: BTreeMap<(MixerPool, Address), u64> = BTreeMap::new();
    for e in events {
        if e.kind == EventKind::Withdraw {
            *per_address.entry((e.mixer, e.address)).or_insert(0) += 1;
        }
    }
    let mut histogram: BTreeMap<MixerPool, BTreeMap<u64, u64>> = BTreeMap::new();
    for ((pool, _), count) in per_address {
        *histogram.entry(pool).or_default().entry(count).or_insert(0) += 1;
    }
    histogram
}

/// Histogram of whole days elapsed between linked deposit and withdraw
/// (floor division, so 0 = within the same 24 hours).
pub fn mixing_delay_distribution(links: &[Link]) -> BTreeMap<i64, u64> {
    let mut bins = BTreeMap::new();
    for link in links {
        *bins.entry(link.elapsed.div_euclid(86_400)).or_insert(0) += 1;
    }
    bins
}

/// Flat export row for a link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub mixer: MixerPool,
    pub heuristic: u8,
    pub deposit_tx: TxHash,
    pub withdraw_tx: TxHash,
    pub deposit_addr: Address,
    pub withdraw_addr: Address,
    pub elapsed_seconds: i64,
}

impl From<&Link> for LinkRecord {
    fn from(link: &Link) -> Self {
        LinkRecord {
            mixer: link.deposit.mixer,
            heuristic: link.heuristic,
            deposit_tx: link.deposit.tx_hash,
            withdraw_tx: link.withdraw.tx_hash,
            deposit_addr: link.deposit.address,
            withdraw_addr: link.withdraw.address,
            elapsed_seconds: link.elapsed,
        }
    }
}

/// `mixer,kind,address,timestamp,gas_price_wei,tx_hash` rows.
pub fn write_events_csv<W: Write>(writer: W, events: &[TornadoEvent]) -> Result<(), TornadoError> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(e).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads, validates, and canonically sorts an event CSV.
pub fn load_events_csv(path: &Path) -> Result<Vec<TornadoEvent>, TornadoError> {
    let file = std::fs::File::open(path)?;
    read_events_csv(file)
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<TornadoEvent>, TornadoError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut events = Vec::new();
    for (idx, row) in r.deserialize::<TornadoEvent>().enumerate() {
        let event = row.map_err(|e| TornadoError::MalformedRow {
            line: idx as u64 + 2,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    validate_events(&events)?;
    events.sort();
    Ok(events)
}

/// `mixer,heuristic,deposit_tx,withdraw_tx,deposit_addr,withdraw_addr,elapsed_seconds` rows.
pub fn write_links_csv<W: Write>(writer: W, links: &[Link]) -> Result<(), TornadoError> {
    let mut w = csv::Writer::from_writer(writer);
    for link in links {
        w.serialize(LinkRecord::from(link)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_link_records<R: Read>(reader: R) -> Result<Vec<LinkRecord>, TornadoError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for (idx, row) in r.deserialize::<LinkRecord>().enumerate() {
        records.push(row.map_err(|e| TornadoError::MalformedRow {
            line: idx as u64 + 2,
            reason: e.to_string(),
        })?);
    }
    Ok(records)
}

fn csv_error(e: csv::Error) -> TornadoError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TornadoError::Io(io),
        other => TornadoError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
