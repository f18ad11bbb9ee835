//! Transaction corpus loading, normalization, and address bookkeeping.
//!
//! The canonical interchange format is CSV with the exact header
//! `tx_hash,block_number,timestamp,from_address,to_address,value_wei,gas_price_wei,gas_used,is_internal`.
//! JSON-lines files with the same field names are accepted as an alternate.
//! Loading is order-insensitive: rows are re-sorted on a total key, so any
//! permutation of the same rows yields the same corpus.

mod client;

pub use client::{ApiClient, ClientConfig};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::{Address, TxHash, Wei};

/// One value transfer, external or internal.
///
/// `to_address` is `None` for contract creations. Internal transactions carry
/// the gas price of their enclosing transaction context and never pay their
/// own base fee.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_hash: TxHash,
    pub block_number: u64,
    pub timestamp: i64,
    pub from_address: Address,
    pub to_address: Option<Address>,
    pub value_wei: Wei,
    pub gas_price_wei: Wei,
    pub gas_used: u64,
    pub is_internal: bool,
}

impl Transaction {
    /// Total ordering used for canonical corpus order. Covers every field so
    /// that loading is insensitive to input row order.
    fn sort_key(&self) -> impl Ord {
        (
            self.block_number,
            self.tx_hash,
            self.is_internal,
            self.from_address,
            self.to_address,
            self.value_wei,
            self.gas_price_wei,
            self.gas_used,
            self.timestamp,
        )
    }
}

pub const TRANSACTIONS_HEADER: [&str; 9] = [
    "tx_hash",
    "block_number",
    "timestamp",
    "from_address",
    "to_address",
    "value_wei",
    "gas_price_wei",
    "gas_used",
    "is_internal",
];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate tx hash {0} among non-internal transactions")]
    DuplicateTxHash(TxHash),
    #[error("no data rows in input")]
    EmptyFile,
    #[error("http status {0}")]
    HttpError(u16),
    #[error("rate limited: retries exhausted after {0} attempts")]
    RateLimited(u32),
    #[error("malformed api response: {0}")]
    MalformedResponse(String),
    #[error("api error: {0}")]
    ApiError(String),
    #[error("missing environment variable {0}")]
    MissingEnv(&'static str),
}

fn validate(tx: &Transaction, line: u64) -> Result<(), IngestError> {
    if tx.timestamp <= 0 {
        return Err(IngestError::MalformedRow {
            line,
            reason: format!("timestamp must be positive, got {}", tx.timestamp),
        });
    }
    Ok(())
}

/// Sorts on the total key and rejects repeated non-internal hashes. Internal
/// transactions legitimately share the hash of their enclosing transaction.
fn finalize(mut txs: Vec<Transaction>) -> Result<Vec<Transaction>, IngestError> {
    if txs.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    txs.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut seen: HashSet<TxHash> = HashSet::with_capacity(txs.len());
    for tx in txs.iter().filter(|t| !t.is_internal) {
        if !seen.insert(tx.tx_hash) {
            return Err(IngestError::DuplicateTxHash(tx.tx_hash));
        }
    }
    Ok(txs)
}

pub fn load_transactions_csv<R: Read>(reader: R) -> Result<Vec<Transaction>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    {
        let headers = rdr.headers().map_err(|e| IngestError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?;
        let got: Vec<&str> = headers.iter().collect();
        if got.is_empty() || got == [""] {
            return Err(IngestError::EmptyFile);
        }
        if got != TRANSACTIONS_HEADER {
            return Err(IngestError::MalformedRow {
                line: 1,
                reason: format!(
                    "header mismatch: expected {}, got {}",
                    TRANSACTIONS_HEADER.join(","),
                    got.join(",")
                ),
            });
        }
    }
    let mut txs = Vec::new();
    for result in rdr.deserialize() {
        let line = match &result {
            Ok(_) => 0,
            Err(e) => e.position().map(|p| p.line()).unwrap_or(0),
        };
        let tx: Transaction = result.map_err(|e| IngestError::MalformedRow {
            line,
            reason: trim_csv_error(&e),
        })?;
        txs.push(tx);
    }
    // Data rows start at line 2; the reader's position tracks that for us on
    // errors, but validation failures need the line recomputed.
    for (i, tx) in txs.iter().enumerate() {
        validate(tx, i as u64 + 2)?;
    }
    finalize(txs)
}

fn trim_csv_error(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        other => format!("{other:?}"),
    }
}

pub fn load_transactions_jsonl<R: Read>(reader: R) -> Result<Vec<Transaction>, IngestError> {
    let mut buf = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut buf)?;
    let mut txs = Vec::new();
    for (i, raw) in buf.lines().enumerate() {
        let line = i as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let tx: Transaction =
            serde_json::from_str(raw).map_err(|e| IngestError::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
        validate(&tx, line)?;
        txs.push(tx);
    }
    finalize(txs)
}

/// Loads a corpus, choosing the format by extension: `.jsonl`/`.ndjson` is
/// JSON-lines, anything else is CSV.
pub fn load_transactions<P: AsRef<Path>>(path: P) -> Result<Vec<Transaction>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => load_transactions_jsonl(file),
        _ => load_transactions_csv(file),
    }
}

/// Writes the canonical CSV form.
pub fn write_transactions_csv<W: std::io::Write>(
    writer: W,
    txs: &[Transaction],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    for tx in txs {
        w.serialize(tx).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => IngestError::Io(io),
            other => IngestError::MalformedRow { line: 0, reason: format!("{other:?}") },
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Where an address entered the collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AddressSource {
    Twitter,
    Tornado,
    HumanityDao,
    Other,
}

impl std::fmt::Display for AddressSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AddressSource::Twitter => "twitter",
            AddressSource::Tornado => "tornado",
            AddressSource::HumanityDao => "humanitydao",
            AddressSource::Other => "other",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AddressSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "twitter" => Ok(AddressSource::Twitter),
            "tornado" => Ok(AddressSource::Tornado),
            "humanitydao" => Ok(AddressSource::HumanityDao),
            "other" => Ok(AddressSource::Other),
            _ => Err(format!("unknown address source {s:?}")),
        }
    }
}

/// A deduplicated, lexicographically ordered collection of addresses, each
/// tagged with its source. The first insertion of an address fixes its tag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddressSet {
    entries: Vec<(Address, AddressSource)>,
}

impl AddressSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_addresses<I: IntoIterator<Item = Address>>(iter: I, source: AddressSource) -> Self {
        let mut set = Self::new();
        for a in iter {
            set.insert(a, source);
        }
        set
    }

    /// Inserts unless present; an address already in the set keeps its tag.
    pub fn insert(&mut self, address: Address, source: AddressSource) -> bool {
        match self.entries.binary_search_by_key(&address, |(a, _)| *a) {
            Ok(_) => false,
            Err(pos) => {
                self.entries.insert(pos, (address, source));
                true
            }
        }
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.entries
            .binary_search_by_key(address, |(a, _)| *a)
            .is_ok()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, AddressSource)> {
        self.entries.iter().map(|(a, s)| (a, *s))
    }

    pub fn addresses(&self) -> impl Iterator<Item = &Address> {
        self.entries.iter().map(|(a, _)| a)
    }

    pub fn source(&self, address: &Address) -> Option<AddressSource> {
        self.entries
            .binary_search_by_key(address, |(a, _)| *a)
            .ok()
            .map(|i| self.entries[i].1)
    }
}

/// How a linked address pair was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrigin {
    Ens,
    TornadoHeuristic,
}

/// An unordered pair of distinct addresses believed to share an owner.
/// Stored with `id_a < id_b` so pair identity is canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundTruthPair {
    pub id_a: Address,
    pub id_b: Address,
    pub origin: PairOrigin,
    pub label: Option<String>,
}

impl GroundTruthPair {
    /// Returns `None` when the two addresses are equal.
    pub fn new(a: Address, b: Address, origin: PairOrigin, label: Option<String>) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { id_a: a, id_b: b, origin, label }),
            std::cmp::Ordering::Greater => Some(Self { id_a: b, id_b: a, origin, label }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// Loads `ens_name,address` rows and forms ground-truth pairs from names that
/// resolve to exactly two distinct addresses. Addresses attached to more than
/// one name are excluded entirely: shared infrastructure addresses would
/// otherwise masquerade as personal pairs.
pub fn load_ens_pairs<R: Read>(reader: R) -> Result<Vec<GroundTruthPair>, IngestError> {
    #[derive(Deserialize)]
    struct Row {
        ens_name: String,
        address: Address,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut by_name: BTreeMap<String, BTreeSet<Address>> = BTreeMap::new();
    let mut names_per_address: HashMap<Address, BTreeSet<String>> = HashMap::new();
    for result in rdr.deserialize() {
        let line = match &result {
            Ok(_) => 0,
            Err(e) => e.position().map(|p| p.line()).unwrap_or(0),
        };
        let row: Row = result.map_err(|e| IngestError::MalformedRow {
            line,
            reason: trim_csv_error(&e),
        })?;
        by_name.entry(row.ens_name.clone()).or_default().insert(row.address);
        names_per_address.entry(row.address).or_default().insert(row.ens_name);
    }
    if by_name.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let mut pairs = Vec::new();
    for (name, addrs) in &by_name {
        if addrs.len() != 2 {
            continue;
        }
        if addrs.iter().any(|a| names_per_address[a].len() > 1) {
            continue;
        }
        let mut it = addrs.iter();
        let (a, b) = (*it.next().unwrap(), *it.next().unwrap());
        if let Some(p) = GroundTruthPair::new(a, b, PairOrigin::Ens, Some(name.clone())) {
            pairs.push(p);
        }
    }
    Ok(pairs)
}

/// Address labels naming known services, grouped into a closed category set
/// declared by the label file itself.
#[derive(Debug, Clone, Default)]
pub struct ServiceLabelMap {
    by_address: BTreeMap<Address, Vec<(String, String)>>,
    categories: BTreeSet<String>,
}

impl ServiceLabelMap {
    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.as_str())
    }

    pub fn labels_for(&self, address: &Address) -> &[(String, String)] {
        self.by_address.get(address).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.by_address.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_address.is_empty()
    }
}

/// Loads `address,service_name,category` rows.
pub fn load_labels<R: Read>(reader: R) -> Result<ServiceLabelMap, IngestError> {
    #[derive(Deserialize)]
    struct Row {
        address: Address,
        service_name: String,
        category: String,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut map = ServiceLabelMap::default();
    for result in rdr.deserialize() {
        let line = match &result {
            Ok(_) => 0,
            Err(e) => e.position().map(|p| p.line()).unwrap_or(0),
        };
        let row: Row = result.map_err(|e| IngestError::MalformedRow {
            line,
            reason: trim_csv_error(&e),
        })?;
        if row.category.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty category".to_string(),
            });
        }
        map.categories.insert(row.category.clone());
        map.by_address
            .entry(row.address)
            .or_default()
            .push((row.service_name, row.category));
    }
    Ok(map)
}

/// Addresses that sent at least `min_sent` non-internal transactions.
/// Internal traces are value movements by contracts, not user activity, so
/// they never count toward the sent threshold.
pub fn filter_active_addresses(txs: &[Transaction], min_sent: usize) -> AddressSet {
    let mut sent: HashMap<Address, usize> = HashMap::new();
    for tx in txs.iter().filter(|t| !t.is_internal) {
        *sent.entry(tx.from_address).or_insert(0) += 1;
    }
    AddressSet::from_addresses(
        sent.into_iter()
            .filter(|(_, n)| *n >= min_sent)
            .map(|(a, _)| a),
        AddressSource::Other,
    )
}

/// For every category in the label map: the fraction of the given addresses
/// that transacted at least once with a labeled counterparty in that category.
pub fn service_exposure(
    addresses: &AddressSet,
    labels: &ServiceLabelMap,
    txs: &[Transaction],
) -> BTreeMap<String, f64> {
    let mut touched: HashMap<Address, BTreeSet<&str>> = HashMap::new();
    for tx in txs {
        if let Some(to) = &tx.to_address {
            for (owner, counterparty) in [(&tx.from_address, to), (to, &tx.from_address)] {
                if !addresses.contains(owner) {
                    continue;
                }
                for (_, category) in labels.labels_for(counterparty) {
                    touched.entry(*owner).or_default().insert(category.as_str());
                }
            }
        }
    }
    let total = addresses.len();
    let mut out: BTreeMap<String, f64> = labels
        .categories()
        .map(|c| (c.to_string(), 0.0))
        .collect();
    if total == 0 {
        return out;
    }
    for cats in touched.values() {
        for c in cats {
            *out.get_mut(*c).expect("category came from the label map") += 1.0;
        }
    }
    for v in out.values_mut() {
        *v /= total as f64;
    }
    out
}
