//! Balance-fingerprint analysis.
//!
//! The low-order digits of an account balance (`balance mod 10^d`) act as a
//! fingerprint: ordinary transfers move round amounts at round gas prices,
//! so most transactions leave the fingerprint untouched, and a deliberately
//! planted fractional amount survives long enough to tag its owner across
//! addresses. This module reconstructs balance trajectories from a corpus,
//! measures how often real transactions disturb fingerprints, fits the
//! heavy-tailed activity distribution those rates ride on, and turns both
//! into fingerprint survival probabilities.
//!
//! Replayed balances start from zero rather than the true (unknown) opening
//! balance. That offset cannot affect change detection: a transaction flips
//! the fingerprint if and only if its net balance delta is nonzero modulo
//! 10^d, which is independent of the starting point. Ledgers whose replay
//! dips below zero are flagged approximate, but their change rates are still
//! exact.

use std::collections::BTreeMap;

use primitive_types::U512;
use serde::Serialize;

use crate::ingest::Transaction;
use crate::types::{u512_mod_pow10, Address, TxHash, Wei};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FingerprintError {
    #[error("no addresses qualify for the requested cutoff")]
    EmptyLedger,
    #[error("no balances supplied")]
    EmptyInput,
    #[error("all samples sit at the minimum; the tail exponent is undefined")]
    DegenerateSample,
    #[error("only {have} samples above the minimum; at least {need} required")]
    InsufficientSample { have: usize, need: usize },
    #[error("sample {0} is below the minimum of 1")]
    InvalidSample(f64),
    #[error("integral of x^-k diverges for k <= 1 with no exponential damping")]
    NonConvergent,
}

/// Parameters of the fitted fingerprint-survival model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FingerprintModel {
    /// Fingerprint width: the last `digits` decimal digits of the balance.
    pub digits: u32,
    /// Per-transaction probability that the fingerprint changes.
    pub p: f64,
    /// Power-law exponent of per-address transaction counts.
    pub k: f64,
    /// Max sent transactions per address considered; `None` = unlimited.
    pub cutoff: Option<u64>,
}

/// The last `digits` decimal digits of a balance, as an exact integer.
pub fn fingerprint(balance: Wei, digits: u32) -> u64 {
    assert!((1..=18).contains(&digits), "fingerprint digits must be in [1, 18]");
    balance.mod_pow10(digits)
}

/// One applied transaction in an account's replayed history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceStep {
    pub timestamp: i64,
    pub tx_hash: TxHash,
    /// Cumulative wei received up to and including this step.
    pub credit: U512,
    /// Cumulative wei spent (value plus fees) up to and including this step.
    pub debit: U512,
    /// Total wei leaving in this step when the address was the sender of a
    /// non-internal transaction; `None` for receipts and internal sends.
    pub outflow: Option<U512>,
}

impl BalanceStep {
    /// Fingerprint of the running balance after this step. Well defined even
    /// when the replayed balance is negative: the true balance differs from
    /// credit − debit by the constant opening balance, so *changes* in this
    /// value coincide with changes in the true fingerprint.
    pub fn fingerprint(&self, digits: u32) -> u64 {
        let m = 10u64.pow(digits);
        let c = u512_mod_pow10(self.credit, digits);
        let d = u512_mod_pow10(self.debit, digits);
        (c + m - d) % m
    }

    /// Running balance when it is representable (non-negative).
    pub fn balance(&self) -> Option<Wei> {
        let diff = self.credit.checked_sub(self.debit)?;
        if diff > U512::from(primitive_types::U256::MAX) {
            return None;
        }
        let mut limbs = [0u64; 4];
        limbs.copy_from_slice(&diff.0[..4]);
        Some(Wei(primitive_types::U256(limbs)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct AccountHistory {
    pub steps: Vec<BalanceStep>,
    /// Non-internal transactions sent by this address.
    pub sent_count: u64,
    /// True when the replayed balance dipped below zero, i.e. the corpus
    /// does not contain this account's full inbound history.
    pub went_negative: bool,
}

/// Per-address balance trajectories replayed from a canonically ordered
/// corpus. Senders are debited value plus `gas_used × gas_price` (fees are
/// charged on non-internal transactions only); recipients are credited the
/// value.
#[derive(Debug, Clone, Default)]
pub struct BalanceLedger {
    accounts: BTreeMap<Address, AccountHistory>,
    approximate: bool,
}

impl BalanceLedger {
    pub fn replay(corpus: &[Transaction]) -> Self {
        let mut ledger = BalanceLedger::default();
        for tx in corpus {
            ledger.apply(tx);
        }
        ledger
    }

    fn apply(&mut self, tx: &Transaction) {
        let value = tx.value_wei.widen();
        let fee = if tx.is_internal {
            U512::zero()
        } else {
            tx.gas_price_wei.widen() * U512::from(tx.gas_used)
        };
        let spend = value + fee;
        let self_transfer = tx.to_address == Some(tx.from_address);

        {
            let sender = self.accounts.entry(tx.from_address).or_default();
            let (mut credit, mut debit) = last_totals(sender);
            debit += spend;
            if self_transfer {
                credit += value;
            }
            sender.steps.push(BalanceStep {
                timestamp: tx.timestamp,
                tx_hash: tx.tx_hash,
                credit,
                debit,
                outflow: (!tx.is_internal).then_some(spend),
            });
            if !tx.is_internal {
                sender.sent_count += 1;
            }
            if debit > credit {
                sender.went_negative = true;
                self.approximate = true;
            }
        }

        if let Some(to) = tx.to_address {
            if !self_transfer {
                let receiver = self.accounts.entry(to).or_default();
                let (mut credit, debit) = last_totals(receiver);
                credit += value;
                receiver.steps.push(BalanceStep {
                    timestamp: tx.timestamp,
                    tx_hash: tx.tx_hash,
                    credit,
                    debit,
                    outflow: None,
                });
            }
        }
    }

    pub fn accounts(&self) -> &BTreeMap<Address, AccountHistory> {
        &self.accounts
    }

    /// True when some replayed balance went negative, i.e. the corpus is
    /// missing inbound history. Change rates remain exact regardless.
    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    /// Final balances, `None` where the replay is not representable.
    pub fn final_balances(&self) -> Vec<(Address, Option<Wei>)> {
        self.accounts
            .iter()
            .map(|(a, h)| (*a, h.steps.last().and_then(BalanceStep::balance)))
            .collect()
    }

    /// Non-internal sent-transaction counts, one sample per address that
    /// sent at least once. Input for the power-law fit.
    pub fn sent_count_samples(&self) -> Vec<f64> {
        self.accounts
            .values()
            .filter(|h| h.sent_count > 0)
            .map(|h| h.sent_count as f64)
            .collect()
    }
}

fn last_totals(history: &AccountHistory) -> (U512, U512) {
    history
        .steps
        .last()
        .map(|s| (s.credit, s.debit))
        .unwrap_or((U512::zero(), U512::zero()))
}

/// Fingerprint-change statistics over one activity band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChangeRate {
    /// Addresses with 1..=cutoff sent transactions.
    pub addresses: u64,
    /// Their sent (non-internal) transactions.
    pub txs: u64,
    /// How many of those changed the sender's fingerprint.
    pub fingerprinting_txs: u64,
    pub avg_sent: f64,
    /// fingerprinting_txs / txs.
    pub p: f64,
}

/// Measures, over addresses whose sent-transaction count is within
/// `cutoff`, the fraction of their sent transactions that changed the
/// sender's `digits`-digit fingerprint.
pub fn fingerprint_change_rate(
    ledger: &BalanceLedger,
    digits: u32,
    cutoff: Option<u64>,
) -> Result<ChangeRate, FingerprintError> {
    assert!((1..=18).contains(&digits), "fingerprint digits must be in [1, 18]");
    let limit = cutoff.unwrap_or(u64::MAX);
    let mut addresses = 0u64;
    let mut txs = 0u64;
    let mut fingerprinting = 0u64;
    for history in ledger.accounts.values() {
        if history.sent_count == 0 || history.sent_count > limit {
            continue;
        }
        addresses += 1;
        let mut previous = 0u64; // fingerprint of the zero opening balance
        for step in &history.steps {
            let current = step.fingerprint(digits);
            if step.outflow.is_some() {
                txs += 1;
                if current != previous {
                    fingerprinting += 1;
                }
            }
            previous = current;
        }
    }
    if addresses == 0 {
        return Err(FingerprintError::EmptyLedger);
    }
    Ok(ChangeRate {
        addresses,
        txs,
        fingerprinting_txs: fingerprinting,
        avg_sent: txs as f64 / addresses as f64,
        p: fingerprinting as f64 / txs as f64,
    })
}

/// Continuous Hill maximum-likelihood estimate of the tail exponent k for
/// samples following x^-k on [1, ∞): k = 1 + n / Σ ln(x_i).
pub fn fit_power_law(samples: &[f64]) -> Result<f64, FingerprintError> {
    const X_MIN: f64 = 1.0;
    const MIN_TAIL: usize = 10;
    if samples.is_empty() {
        return Err(FingerprintError::DegenerateSample);
    }
    let mut log_sum = 0.0f64;
    let mut above = 0usize;
    for &x in samples {
        if !(x >= X_MIN) || !x.is_finite() {
            return Err(FingerprintError::InvalidSample(x));
        }
        if x > X_MIN {
            above += 1;
        }
        log_sum += (x / X_MIN).ln();
    }
    if above == 0 {
        return Err(FingerprintError::DegenerateSample);
    }
    if above < MIN_TAIL {
        return Err(FingerprintError::InsufficientSample { have: above, need: MIN_TAIL });
    }
    Ok(1.0 + samples.len() as f64 / log_sum)
}

/// Survival probability under the fitted model: the integral over activity
/// levels x of x^-k · (1-p)^x from 1 to ∞, evaluated by adaptive Simpson
/// quadrature with an analytic bound on the discarded tail.
pub fn survival_probability_integral(p: f64, k: f64) -> Result<f64, FingerprintError> {
    assert!((0.0..=1.0).contains(&p), "p must be in [0, 1]");
    assert!(k.is_finite(), "k must be finite");
    if p == 1.0 {
        return Ok(0.0);
    }
    if p == 0.0 {
        if k > 1.0 {
            return Ok(1.0 / (k - 1.0)); // exact: ∫ x^-k dx from 1 to ∞
        }
        return Err(FingerprintError::NonConvergent);
    }
    assert!(k > 0.0, "k must exceed 0 when p < 1");

    let ln_q = (1.0 - p).ln(); // < 0
    let f = |x: f64| (-k * x.ln() + x * ln_q).exp();

    // Pick X so the dropped tail ∫_X^∞ x^-k q^x dx ≤ X^-k q^X / (-ln q)
    // falls below 1e-16 (x^-k is decreasing, the rest is geometric).
    let mut upper = 2.0f64;
    while (-k * upper.ln() + upper * ln_q).exp() / -ln_q > 1e-16 {
        upper *= 2.0;
    }

    // Coarse pass to scale the error budget, then refine adaptively.
    let coarse = simpson_fixed(&f, 1.0, upper, 512);
    let tolerance = (coarse.abs() * 1e-12).max(1e-18);
    Ok(adaptive_simpson(&f, 1.0, upper, tolerance))
}

/// The integral with the x^-k weight normalized into a probability density
/// (division by ∫ x^-k dx = 1/(k-1)); requires k > 1.
pub fn survival_probability_integral_normalized(p: f64, k: f64) -> Result<f64, FingerprintError> {
    if !(k > 1.0) {
        return Err(FingerprintError::NonConvergent);
    }
    Ok(survival_probability_integral(p, k)? * (k - 1.0))
}

/// Survival probability at a single activity level: (1-p)^avg_x.
pub fn survival_probability_point(p: f64, avg_x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must be in [0, 1]");
    assert!(avg_x > 0.0, "average activity must be positive");
    (1.0 - p).powf(avg_x)
}

fn simpson_fixed(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += weight * f(a + h * i as f64);
    }
    sum * h / 3.0
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tolerance: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tolerance, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tolerance: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tolerance {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tolerance, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tolerance, depth - 1)
}

/// Entropy of the fingerprint distribution over a fixed histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FingerprintEntropy {
    pub bins: usize,
    pub entropy_bits: f64,
    /// log2(bins) − entropy: how many bits a fingerprint reveals.
    pub gain_bits: f64,
}

pub const DEFAULT_FINGERPRINT_BINS: usize = 256;

/// Histograms `balance mod 10^digits` over `bins` equal cells of
/// [0, 10^digits) and reports entropy and entropy gain.
pub fn fingerprint_entropy(
    balances: &[Wei],
    digits: u32,
    bins: usize,
) -> Result<FingerprintEntropy, FingerprintError> {
    assert!((1..=18).contains(&digits), "fingerprint digits must be in [1, 18]");
    assert!(bins >= 1, "need at least one bin");
    if balances.is_empty() {
        return Err(FingerprintError::EmptyInput);
    }
    let modulus = 10u64.pow(digits) as u128;
    let mut counts = vec![0u64; bins];
    for b in balances {
        let fp = fingerprint(*b, digits) as u128;
        let bin = (fp * bins as u128 / modulus) as usize;
        counts[bin] += 1;
    }
    let total = balances.len() as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let q = *c as f64 / total;
            -q * q.log2()
        })
        .sum();
    Ok(FingerprintEntropy { bins, entropy_bits: entropy, gain_bits: (bins as f64).log2() - entropy })
}

/// One activity band of the survival report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffRow {
    /// `None` = unlimited ("all senders").
    pub cutoff: Option<u64>,
    pub addresses: u64,
    pub txs: u64,
    pub fingerprinting_txs: u64,
    pub avg_sent: f64,
    pub p: f64,
    pub survival_point: f64,
    /// Present when the tail exponent is available and above 1.
    pub survival_integral: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FingerprintReport {
    pub digits: u32,
    /// Hill estimate over per-address sent counts, when the fit succeeds.
    pub power_law_k: Option<f64>,
    pub approximate_ledger: bool,
    pub rows: Vec<CutoffRow>,
}

/// Full survival analysis: change rates per cutoff band, the fitted tail
/// exponent, and both survival estimators side by side.
pub fn fingerprint_report(
    ledger: &BalanceLedger,
    digits: u32,
    cutoffs: &[Option<u64>],
) -> Result<FingerprintReport, FingerprintError> {
    let k = fit_power_law(&ledger.sent_count_samples()).ok();
    let mut rows = Vec::new();
    for &cutoff in cutoffs {
        let rate = fingerprint_change_rate(ledger, digits, cutoff)?;
        let survival_integral = match k {
            Some(k) if k > 1.0 => survival_probability_integral(rate.p, k).ok(),
            _ => None,
        };
        rows.push(CutoffRow {
            cutoff,
            addresses: rate.addresses,
            txs: rate.txs,
            fingerprinting_txs: rate.fingerprinting_txs,
            avg_sent: rate.avg_sent,
            p: rate.p,
            survival_point: survival_probability_point(rate.p, rate.avg_sent),
            survival_integral,
        });
    }
    Ok(FingerprintReport { digits, power_law_k: k, approximate_ledger: ledger.is_approximate(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use primitive_types::U256;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn addr(n: u16) -> Address {
        let mut b = [0u8; 20];
        b[0] = (n >> 8) as u8;
        b[1] = n as u8;
        Address(b)
    }

    fn hash(n: u16) -> TxHash {
        let mut b = [0u8; 32];
        b[0] = (n >> 8) as u8;
        b[1] = n as u8;
        TxHash(b)
    }

    fn tx(from: u16, to: u16, value: u64, gas_price: u64, gas_used: u64, id: u16) -> Transaction {
        Transaction {
            block_number: u64::from(id),
            timestamp: 1_600_000_000 + i64::from(id),
            tx_hash: hash(id),
            from_address: addr(from),
            to_address: Some(addr(to)),
            value_wei: Wei(U256::from(value)),
            gas_price_wei: Wei(U256::from(gas_price)),
            gas_used,
            is_internal: false,
        }
    }

    const ETH: u64 = 1_000_000_000_000_000_000;

    #[test]
    fn fingerprint_examples() {
        assert_eq!(fingerprint(Wei(U256::from(ETH)), 9), 0);
        assert_eq!(fingerprint(Wei(U256::from(1_000_000_000_123_456_789u64)), 9), 123_456_789);
        assert_eq!(fingerprint(Wei(U256::from(7u64)), 1), 7);
    }

    proptest! {
        #[test]
        fn fingerprint_is_additive_mod_10d(a in 0u128..u128::MAX / 2, b in 0u128..u128::MAX / 2, d in 1u32..=18) {
            let m = 10u128.pow(d);
            let fa = fingerprint(Wei(U256::from(a)), d) as u128;
            let fb = fingerprint(Wei(U256::from(b)), d) as u128;
            let fsum = fingerprint(Wei(U256::from(a + b)), d) as u128;
            prop_assert_eq!(fsum, (fa + fb) % m);
        }
    }

    /// Independent oracle: replay balances in plain signed arithmetic.
    fn oracle_change_flags(corpus: &[Transaction], digits: u32) -> BTreeMap<(Address, TxHash), bool> {
        let m = 10i128.pow(digits);
        let mut balance: BTreeMap<Address, i128> = BTreeMap::new();
        let mut flags = BTreeMap::new();
        for t in corpus {
            let value = t.value_wei.to_f64() as i128;
            let fee = if t.is_internal { 0 } else { (t.gas_price_wei.to_f64() as i128) * t.gas_used as i128 };
            let before = *balance.get(&t.from_address).unwrap_or(&0);
            let mut after = before - value - fee;
            if t.to_address == Some(t.from_address) {
                after += value;
            }
            balance.insert(t.from_address, after);
            if !t.is_internal {
                flags.insert(
                    (t.from_address, t.tx_hash),
                    before.rem_euclid(m) != after.rem_euclid(m),
                );
            }
            if let Some(to) = t.to_address {
                if to != t.from_address {
                    *balance.entry(to).or_insert(0) += value;
                }
            }
        }
        flags
    }

    #[test]
    fn replay_matches_signed_arithmetic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let corpus: Vec<Transaction> = (0..20u16)
                .map(|i| {
                    tx(
                        rng.gen_range(0..6),
                        rng.gen_range(0..6),
                        rng.gen_range(0..1_000_000),
                        rng.gen_range(0..500),
                        rng.gen_range(0..100),
                        i,
                    )
                })
                .collect();
            let digits = rng.gen_range(1..=6);
            let ledger = BalanceLedger::replay(&corpus);
            let oracle = oracle_change_flags(&corpus, digits);

            let mut got = BTreeMap::new();
            for (a, history) in ledger.accounts() {
                let mut prev = 0u64;
                for step in &history.steps {
                    let fp = step.fingerprint(digits);
                    if step.outflow.is_some() {
                        got.insert((*a, step.tx_hash), fp != prev);
                    }
                    prev = fp;
                }
            }
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn whole_eth_transfers_with_free_gas_never_fingerprint() {
        let corpus = vec![
            tx(1, 2, ETH, 0, 21_000, 1),
            tx(2, 3, ETH, 0, 21_000, 2),
            tx(1, 3, 3 * ETH, 0, 21_000, 3),
        ];
        let ledger = BalanceLedger::replay(&corpus);
        let rate = fingerprint_change_rate(&ledger, 9, None).unwrap();
        assert_eq!(rate.p, 0.0);
        assert_eq!(rate.txs, 3);
        assert_eq!(rate.fingerprinting_txs, 0);
    }

    #[test]
    fn round_gas_keeps_fingerprint_and_odd_value_flips_it() {
        // 21000 gas at a whole-gwei price is a whole multiple of 10^9.
        let clean = tx(1, 2, ETH, 20_000_000_000, 21_000, 1);
        let dirty = tx(1, 2, ETH + 1, 20_000_000_000, 21_000, 2);
        let ledger = BalanceLedger::replay(&[clean, dirty]);
        let rate = fingerprint_change_rate(&ledger, 9, None).unwrap();
        assert_eq!(rate.txs, 2);
        assert_eq!(rate.fingerprinting_txs, 1);
        assert_eq!(rate.p, 0.5);
    }

    #[test]
    fn cutoff_excludes_busy_senders() {
        let mut corpus = Vec::new();
        for i in 0..5u16 {
            corpus.push(tx(1, 2, ETH, 0, 0, i)); // address 1 sends 5 times
        }
        corpus.push(tx(3, 2, ETH + 7, 0, 0, 100)); // address 3 sends once
        let ledger = BalanceLedger::replay(&corpus);

        let tight = fingerprint_change_rate(&ledger, 9, Some(1)).unwrap();
        assert_eq!((tight.addresses, tight.txs, tight.fingerprinting_txs), (1, 1, 1));
        assert_eq!(tight.avg_sent, 1.0);

        let all = fingerprint_change_rate(&ledger, 9, None).unwrap();
        assert_eq!((all.addresses, all.txs), (2, 6));

        assert_eq!(
            fingerprint_change_rate(&ledger, 9, Some(0)).unwrap_err(),
            FingerprintError::EmptyLedger
        );
    }

    #[test]
    fn self_transfer_changes_fingerprint_only_through_the_fee() {
        let round_fee = tx(1, 1, 123, 1_000_000_000, 21_000, 1); // value returns; fee is round
        let ledger = BalanceLedger::replay(&[round_fee]);
        let rate = fingerprint_change_rate(&ledger, 9, None).unwrap();
        assert_eq!(rate.fingerprinting_txs, 0);

        let odd_fee = tx(1, 1, 123, 1_000_000_001, 21_000, 1);
        let ledger = BalanceLedger::replay(&[odd_fee]);
        let rate = fingerprint_change_rate(&ledger, 9, None).unwrap();
        assert_eq!(rate.fingerprinting_txs, 1);
    }

    #[test]
    fn partial_corpus_is_flagged_approximate_but_still_counts() {
        // Address 1 spends without any recorded inflow.
        let corpus = vec![tx(1, 2, ETH, 0, 0, 1)];
        let ledger = BalanceLedger::replay(&corpus);
        assert!(ledger.is_approximate());
        assert!(fingerprint_change_rate(&ledger, 9, None).is_ok());

        // A funded account stays consistent even though the root funder,
        // replayed from zero, necessarily dips negative.
        let funded = vec![tx(9, 1, 2 * ETH, 0, 0, 1), tx(1, 2, ETH, 0, 0, 2)];
        let ledger = BalanceLedger::replay(&funded);
        assert!(!ledger.accounts()[&addr(1)].went_negative);
        assert!(ledger.accounts()[&addr(9)].went_negative);
        assert!(ledger.is_approximate());
        let balances: BTreeMap<Address, Option<Wei>> = ledger.final_balances().into_iter().collect();
        assert_eq!(balances[&addr(1)], Some(Wei(U256::from(ETH))));
    }

    #[test]
    fn power_law_fit_recovers_known_exponent() {
        use rand_distr::{Distribution, Pareto};
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Density ∝ x^(-k) with k = 2.5 means Pareto shape k - 1 = 1.5.
        let pareto = Pareto::new(1.0, 1.5).unwrap();
        let samples: Vec<f64> = (0..100_000).map(|_| pareto.sample(&mut rng)).collect();
        let k = fit_power_law(&samples).unwrap();
        assert!((k - 2.5).abs() < 0.05, "estimated {k}");
    }

    #[test]
    fn power_law_fit_rejects_degenerate_and_thin_samples() {
        assert_eq!(fit_power_law(&[1.0; 50]).unwrap_err(), FingerprintError::DegenerateSample);
        let mut thin = vec![1.0; 50];
        thin.extend([2.0; 5]);
        assert_eq!(
            fit_power_law(&thin).unwrap_err(),
            FingerprintError::InsufficientSample { have: 5, need: 10 }
        );
        assert_eq!(fit_power_law(&[0.5; 20]).unwrap_err(), FingerprintError::InvalidSample(0.5));
    }

    #[test]
    fn survival_integral_closed_forms() {
        assert_eq!(survival_probability_integral(0.0, 2.0).unwrap(), 1.0);
        assert_eq!(survival_probability_integral(0.0, 3.0).unwrap(), 0.5);
        assert_eq!(survival_probability_integral(1.0, 1.91).unwrap(), 0.0);
        assert_eq!(
            survival_probability_integral(0.0, 1.0).unwrap_err(),
            FingerprintError::NonConvergent
        );
        assert_eq!(survival_probability_integral_normalized(0.0, 2.7).unwrap(), 1.0);
    }

    /// Composite trapezoid at a fixed high resolution — deliberately the
    /// dumbest possible quadrature, sharing nothing with the adaptive path.
    fn trapezoid_oracle(p: f64, k: f64) -> f64 {
        let q = 1.0 - p;
        let ln_q = q.ln();
        let mut upper = 2.0f64;
        while upper.powf(-k) * q.powf(upper) / -ln_q > 1e-16 {
            upper *= 2.0;
        }
        let panels = 8_000_000usize;
        let h = (upper - 1.0) / panels as f64;
        let f = |x: f64| x.powf(-k) * q.powf(x);
        let mut sum = 0.5 * (f(1.0) + f(upper));
        for i in 1..panels {
            sum += f(1.0 + h * i as f64);
        }
        sum * h
    }

    #[test]
    fn survival_integral_matches_trapezoid_oracle() {
        let got = survival_probability_integral(0.3095, 1.91).unwrap();
        let expect = trapezoid_oracle(0.3095, 1.91);
        assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
    }

    #[test]
    fn survival_integral_is_monotone_in_p_and_k() {
        let ps = [0.05, 0.2, 0.4, 0.6, 0.8];
        let ks = [1.2, 1.5, 1.91, 2.5, 3.5];
        for &k in &ks {
            let mut last = f64::INFINITY;
            for &p in &ps {
                let v = survival_probability_integral(p, k).unwrap();
                assert!(v < last, "not decreasing in p at p={p}, k={k}");
                last = v;
            }
        }
        for &p in &ps {
            let mut last = f64::INFINITY;
            for &k in &ks {
                let v = survival_probability_integral(p, k).unwrap();
                assert!(v < last, "not decreasing in k at p={p}, k={k}");
                last = v;
            }
        }
    }

    #[test]
    fn survival_point_behaviour() {
        assert_eq!(survival_probability_point(0.0, 5.0), 1.0);
        assert_eq!(survival_probability_point(1.0, 2.0), 0.0);
        let hi = survival_probability_point(0.3, 2.0);
        let lo = survival_probability_point(0.3, 10.0);
        assert!(lo < hi);
        let expect = 0.7f64.powf(2.0);
        assert!((hi - expect).abs() < 1e-15);
    }

    #[test]
    fn entropy_of_round_balances_is_zero() {
        let balances = vec![Wei(U256::from(ETH)), Wei(U256::from(2 * ETH)), Wei(U256::from(5 * ETH))];
        let e = fingerprint_entropy(&balances, 9, 256).unwrap();
        assert_eq!(e.entropy_bits, 0.0);
        assert_eq!(e.gain_bits, 8.0);
    }

    #[test]
    fn entropy_of_uniform_fingerprints_is_full() {
        // One balance per bin: 256 balances at fingerprints i * 10^9 / 256.
        let balances: Vec<Wei> = (0..256u64)
            .map(|i| Wei(U256::from(ETH + i * 1_000_000_000 / 256)))
            .collect();
        let e = fingerprint_entropy(&balances, 9, 256).unwrap();
        assert!((e.entropy_bits - 8.0).abs() < 1e-12);
        assert!(e.gain_bits.abs() < 1e-12);
    }

    #[test]
    fn entropy_bounds_hold_on_random_balances() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let balances: Vec<Wei> = (0..500).map(|_| Wei(U256::from(rng.gen::<u64>()))).collect();
        let e = fingerprint_entropy(&balances, 9, 64).unwrap();
        assert!(e.entropy_bits >= 0.0 && e.entropy_bits <= 6.0 + 1e-12);
        assert!((e.entropy_bits + e.gain_bits - 6.0).abs() < 1e-12);
        assert!(fingerprint_entropy(&[], 9, 64).is_err());
    }

    #[test]
    fn report_combines_rates_fit_and_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut corpus = Vec::new();
        let mut id = 0u16;
        // Heavy-tailed-ish sender activity with mixed round and odd values.
        for sender in 0..120u16 {
            let sends = 1 + (sender % 14);
            for _ in 0..sends {
                let value = if rng.gen_bool(0.5) { ETH } else { ETH + u64::from(rng.gen_range(1..999u16)) };
                corpus.push(tx(sender, 5000, value, 0, 0, id));
                id += 1;
            }
        }
        let ledger = BalanceLedger::replay(&corpus);
        let report = fingerprint_report(&ledger, 9, &[Some(3), Some(50), None]).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.digits, 9);
        let all = &report.rows[2];
        assert_eq!(all.txs, corpus.len() as u64);
        assert!(all.p > 0.0 && all.p < 1.0);
        assert!(all.survival_point > 0.0 && all.survival_point < 1.0);
        if let Some(k) = report.power_law_k {
            if k > 1.0 {
                assert!(all.survival_integral.is_some());
            }
        }
        // Band with cutoff 3 has fewer or equal transactions than "all".
        assert!(report.rows[0].txs <= all.txs);
    }
}
