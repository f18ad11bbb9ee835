//! Explorer API client: fetches per-address transaction history from an
//! etherscan-compatible endpoint, with request pacing, exponential backoff on
//! 429, and a per-address file cache written atomically.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{IngestError, Transaction};
use crate::types::{Address, TxHash, Wei};

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub base_url: String,
    pub api_key: String,
    pub cache_dir: PathBuf,
    /// Rows requested per page; a short page terminates pagination.
    pub page_size: usize,
    /// Retries on 429 before giving up.
    pub max_retries: u32,
    /// Minimum spacing between request starts. 200ms keeps within the usual
    /// 5 requests/second allowance.
    pub min_request_interval: Duration,
    /// First backoff sleep after a 429; doubles per retry.
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl ClientConfig {
    pub fn new(base_url: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        ClientConfig {
            base_url: base_url.into(),
            api_key: String::new(),
            cache_dir: cache_dir.into(),
            page_size: 10_000,
            max_retries: 5,
            min_request_interval: Duration::from_millis(200),
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
        }
    }

    /// Reads `CHAINPROFILER_API_URL`, `CHAINPROFILER_API_KEY` (optional), and
    /// `CHAINPROFILER_CACHE_DIR`.
    pub fn from_env() -> Result<Self, IngestError> {
        let base_url = std::env::var("CHAINPROFILER_API_URL")
            .map_err(|_| IngestError::MissingEnv("CHAINPROFILER_API_URL"))?;
        let cache_dir = std::env::var("CHAINPROFILER_CACHE_DIR")
            .map_err(|_| IngestError::MissingEnv("CHAINPROFILER_CACHE_DIR"))?;
        let mut cfg = ClientConfig::new(base_url, cache_dir);
        cfg.api_key = std::env::var("CHAINPROFILER_API_KEY").unwrap_or_default();
        Ok(cfg)
    }
}

pub struct ApiClient {
    cfg: ClientConfig,
    http: reqwest::blocking::Client,
    last_request: Mutex<Option<Instant>>,
}

#[derive(Deserialize)]
struct Envelope {
    status: String,
    message: String,
    result: serde_json::Value,
}

/// Raw explorer row. External and internal listings share this shape;
/// internal rows omit `gasPrice` and carry a `traceId`.
#[derive(Deserialize)]
struct RawTx {
    #[serde(rename = "blockNumber")]
    block_number: String,
    #[serde(rename = "timeStamp")]
    time_stamp: String,
    hash: String,
    from: String,
    #[serde(default)]
    to: String,
    value: String,
    #[serde(default, rename = "gasPrice")]
    gas_price: String,
    #[serde(default, rename = "gasUsed")]
    gas_used: String,
    #[serde(default, rename = "traceId")]
    trace_id: String,
}

fn io_other(e: impl std::error::Error + Send + Sync + 'static) -> IngestError {
    IngestError::Io(std::io::Error::other(e))
}

impl ApiClient {
    pub fn new(cfg: ClientConfig) -> Result<Self, IngestError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(io_other)?;
        Ok(ApiClient { cfg, http, last_request: Mutex::new(None) })
    }

    /// Full history for one address: external and internal transactions,
    /// deduplicated by (hash, trace position) and sorted canonically. Served
    /// from the file cache when present; a fresh fetch populates it.
    pub fn fetch_address_history(&self, address: &Address) -> Result<Vec<Transaction>, IngestError> {
        let cache_path = self.cfg.cache_dir.join(format!("{address}.json"));
        if let Ok(bytes) = std::fs::read(&cache_path) {
            match serde_json::from_slice::<Vec<Transaction>>(&bytes) {
                Ok(txs) => return Ok(txs),
                Err(e) => log::warn!("cache entry {} unreadable ({e}), refetching", cache_path.display()),
            }
        }

        let externals = self.fetch_all_pages("txlist", address)?;
        let internals = self.fetch_all_pages("txlistinternal", address)?;

        let mut gas_by_hash: HashMap<TxHash, Wei> = HashMap::new();
        let mut txs: Vec<Transaction> = Vec::with_capacity(externals.len() + internals.len());
        let mut seen: std::collections::HashSet<(TxHash, String)> = Default::default();
        for raw in &externals {
            let tx = normalize(raw, false, None)?;
            if seen.insert((tx.tx_hash, String::new())) {
                gas_by_hash.insert(tx.tx_hash, tx.gas_price_wei);
                txs.push(tx);
            }
        }
        for raw in &internals {
            let parent_gas = TxHash::parse(&raw.hash)
                .ok()
                .and_then(|h| gas_by_hash.get(&h).copied());
            let tx = normalize(raw, true, parent_gas)?;
            if seen.insert((tx.tx_hash, raw.trace_id.clone())) {
                txs.push(tx);
            }
        }
        txs.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

        std::fs::create_dir_all(&self.cfg.cache_dir)?;
        let tmp = cache_path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(&txs).map_err(io_other)?)?;
        std::fs::rename(&tmp, &cache_path)?;
        Ok(txs)
    }

    fn fetch_all_pages(&self, action: &str, address: &Address) -> Result<Vec<RawTx>, IngestError> {
        let mut rows = Vec::new();
        let mut page = 1u32;
        loop {
            let batch = self.fetch_page(action, address, page)?;
            let short = batch.len() < self.cfg.page_size;
            rows.extend(batch);
            if short {
                return Ok(rows);
            }
            page += 1;
        }
    }

    fn fetch_page(&self, action: &str, address: &Address, page: u32) -> Result<Vec<RawTx>, IngestError> {
        let mut attempt = 0u32;
        loop {
            self.pace();
            let mut req = self.http.get(&self.cfg.base_url).query(&[
                ("module", "account"),
                ("action", action),
                ("address", &address.to_string()),
                ("startblock", "0"),
                ("endblock", "latest"),
                ("page", &page.to_string()),
                ("offset", &self.cfg.page_size.to_string()),
                ("sort", "asc"),
            ]);
            if !self.cfg.api_key.is_empty() {
                req = req.query(&[("apikey", self.cfg.api_key.as_str())]);
            }
            let resp = req.send().map_err(io_other)?;
            match resp.status().as_u16() {
                200 => return parse_envelope(&resp.text().map_err(io_other)?),
                429 => {
                    attempt += 1;
                    if attempt > self.cfg.max_retries {
                        return Err(IngestError::RateLimited(attempt));
                    }
                    let sleep = self.cfg.backoff_base * 2u32.pow(attempt - 1);
                    log::debug!("429 from api, backing off {sleep:?} (attempt {attempt})");
                    std::thread::sleep(sleep);
                }
                status => return Err(IngestError::HttpError(status)),
            }
        }
    }

    fn pace(&self) {
        let mut last = self.last_request.lock().expect("pacing lock poisoned");
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < self.cfg.min_request_interval {
                std::thread::sleep(self.cfg.min_request_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

fn parse_envelope(body: &str) -> Result<Vec<RawTx>, IngestError> {
    let env: Envelope = serde_json::from_str(body)
        .map_err(|e| IngestError::MalformedResponse(e.to_string()))?;
    if env.result.is_array() {
        return serde_json::from_value(env.result)
            .map_err(|e| IngestError::MalformedResponse(e.to_string()));
    }
    // Empty histories come back as status "0" rather than an empty page.
    if env.status == "0" && env.message.to_ascii_lowercase().contains("no transactions") {
        return Ok(Vec::new());
    }
    let detail = env.result.as_str().unwrap_or(&env.message);
    Err(IngestError::ApiError(detail.to_string()))
}

fn normalize(raw: &RawTx, is_internal: bool, parent_gas: Option<Wei>) -> Result<Transaction, IngestError> {
    let bad = |what: &str| IngestError::MalformedResponse(format!("{what} in row with hash {}", raw.hash));
    let gas_price_wei = if is_internal {
        // Internal traces execute inside their parent's gas envelope.
        parent_gas.unwrap_or(Wei::ZERO)
    } else {
        Wei::parse(&raw.gas_price).map_err(|_| bad("bad gasPrice"))?
    };
    Ok(Transaction {
        tx_hash: TxHash::parse(&raw.hash).map_err(|_| bad("bad hash"))?,
        block_number: raw.block_number.parse().map_err(|_| bad("bad blockNumber"))?,
        timestamp: raw.time_stamp.parse().map_err(|_| bad("bad timeStamp"))?,
        from_address: Address::parse(&raw.from).map_err(|_| bad("bad from"))?,
        to_address: if raw.to.is_empty() {
            None
        } else {
            Some(Address::parse(&raw.to).map_err(|_| bad("bad to"))?)
        },
        value_wei: Wei::parse(&raw.value).map_err(|_| bad("bad value"))?,
        gas_price_wei,
        gas_used: if raw.gas_used.is_empty() {
            0
        } else {
            raw.gas_used.parse().map_err(|_| bad("bad gasUsed"))?
        },
        is_internal,
    })
}
