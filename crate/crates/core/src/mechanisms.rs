//! Reference curators and learners, from publishing the data in the clear
//! to differentially private releases.
//!
//! A [`Learner`] only ever receives a [`Report`]; it has no access to the
//! dataset or the split.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Lens, Predictor, Record, Value};
use crate::error::{Error, Result};

/// Version tag written next to serialized reports.
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Largest number of histogram cells a Laplace release will materialize.
pub const MAX_HISTOGRAM_CELLS: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramCell {
    pub key: Vec<Value>,
    pub count: f64,
}

/// What a curator publishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Report {
    ClearRecords {
        records: Vec<Record>,
    },
    NoisyHistogram {
        /// Schema indices of the features each cell key lists, in order.
        features: Vec<usize>,
        cells: Vec<HistogramCell>,
    },
    RrRecords {
        records: Vec<Record>,
        epsilon_per_bit: f64,
        effective_epsilon: f64,
    },
    SubsampleRecords {
        records: Vec<Record>,
    },
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::ClearRecords { .. } => "clear-records",
            Report::NoisyHistogram { .. } => "noisy-histogram",
            Report::RrRecords { .. } => "rr-records",
            Report::SubsampleRecords { .. } => "subsample-records",
        }
    }

    pub fn records(&self) -> Option<&[Record]> {
        match self {
            Report::ClearRecords { records }
            | Report::RrRecords { records, .. }
            | Report::SubsampleRecords { records } => Some(records),
            Report::NoisyHistogram { .. } => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&VersionedReport {
            version: REPORT_FORMAT_VERSION,
            report: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: VersionedReport = serde_json::from_str(s)?;
        if v.version != REPORT_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported report version {}", v.version)));
        }
        Ok(v.report)
    }
}

#[derive(Serialize, Deserialize)]
struct VersionedReport {
    version: u32,
    report: Report,
}

/// A randomized map from `n/2` records to a [`Report`].
///
/// Implementations must be safe to call from several trials at once; they
/// take `&self` and keep no mutable state.
pub trait Curator: Send + Sync {
    fn name(&self) -> &'static str;
    fn release(&self, data: &Dataset, rng: &mut dyn RngCore) -> Result<Report>;
}

/// Turns a report into a predictor. The report is the only input.
pub trait Learner: Send + Sync {
    fn name(&self) -> &'static str;
    fn learn(&self, report: &Report, rng: &mut dyn RngCore) -> Result<Box<dyn Predictor>>;
}

fn shuffled(data: &Dataset, rng: &mut dyn RngCore) -> Vec<Record> {
    let mut records = data.records().to_vec();
    records.shuffle(rng);
    records
}

/// Publishes its input unchanged (up to order).
#[derive(Clone, Copy, Debug, Default)]
pub struct ClearRelease;

pub fn clear_release() -> ClearRelease {
    ClearRelease
}

impl Curator for ClearRelease {
    fn name(&self) -> &'static str {
        "clear_release"
    }

    fn release(&self, data: &Dataset, rng: &mut dyn RngCore) -> Result<Report> {
        Ok(Report::ClearRecords {
            records: shuffled(data, rng),
        })
    }
}

/// Flips every randomized bit independently with probability `1/(e^ε + 1)`.
///
/// Features outside `features` are withheld (replaced by ⊥). Randomized
/// features must hold `"0"` or `"1"`. A record with `k` randomized bits is
/// released under `k·ε`-DP, reported as `effective_epsilon`.
#[derive(Clone, Debug)]
pub struct RandomizedResponse {
    epsilon: f64,
    features: Option<Vec<usize>>,
    names: Option<Vec<String>>,
}

pub fn randomized_response(epsilon: f64) -> Result<RandomizedResponse> {
    RandomizedResponse::new(epsilon)
}

impl RandomizedResponse {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(Error::domain("epsilon", format!("must be positive, got {epsilon}")));
        }
        Ok(RandomizedResponse {
            epsilon,
            features: None,
            names: None,
        })
    }

    /// Restricts randomization (and release) to the given schema indices.
    pub fn with_features(mut self, features: Vec<usize>) -> Self {
        self.features = Some(features);
        self
    }

    /// Human-readable names used in error messages.
    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn flip_probability(&self) -> f64 {
        1.0 / (self.epsilon.exp() + 1.0)
    }

    /// `Pr[output bit | input bit]` for one randomized feature.
    pub fn channel_probability(&self, input: bool, output: bool) -> f64 {
        let flip = self.flip_probability();
        if input == output {
            1.0 - flip
        } else {
            flip
        }
    }

    pub fn effective_epsilon(&self, arity: usize) -> f64 {
        let k = self.features.as_ref().map_or(arity, Vec::len);
        k as f64 * self.epsilon
    }

    fn feature_name(&self, i: usize) -> String {
        self.names
            .as_ref()
            .and_then(|n| n.get(i).cloned())
            .unwrap_or_else(|| format!("#{i}"))
    }
}

impl Curator for RandomizedResponse {
    fn name(&self) -> &'static str {
        "randomized_response"
    }

    fn release(&self, data: &Dataset, rng: &mut dyn RngCore) -> Result<Report> {
        let arity = data.schema().arity();
        let lens = match &self.features {
            Some(f) => Lens::new(f.iter().copied()),
            None => Lens::full(arity),
        };
        lens.validate(data.schema())?;
        let flip = self.flip_probability();
        let mut records = Vec::with_capacity(data.len());
        for r in shuffled(data, rng) {
            let mut values = Vec::with_capacity(arity);
            for (i, v) in r.values().iter().enumerate() {
                if !lens.contains(i) {
                    values.push(Value::Null);
                    continue;
                }
                let bit = match v.as_bytes() {
                    Some(b"0") => false,
                    Some(b"1") => true,
                    _ => {
                        return Err(Error::NonBinaryFeature {
                            feature: self.feature_name(i),
                        })
                    }
                };
                let out = if rng.random::<f64>() < flip { !bit } else { bit };
                values.push(Value::text(if out { "1" } else { "0" }));
            }
            records.push(Record::new(values));
        }
        Ok(Report::RrRecords {
            records,
            epsilon_per_bit: self.epsilon,
            effective_epsilon: self.effective_epsilon(arity),
        })
    }
}

/// One draw from Laplace(0, scale) by inverse CDF.
pub fn laplace_sample<R: RngCore + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        if u.abs() < 0.5 {
            return -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}

/// Histogram over the declared finite domains of `features`, with
/// Laplace(2/ε) noise added to every cell.
///
/// Neighbouring datasets differ by substituting one record, which moves two
/// cells by one each, so the L1 sensitivity is 2.
#[derive(Clone, Debug)]
pub struct LaplaceHistogram {
    epsilon: f64,
    features: Vec<usize>,
    domains: Vec<Vec<Value>>,
}

pub fn laplace_histogram(
    epsilon: f64,
    features: Vec<usize>,
    domains: Vec<Vec<Value>>,
) -> Result<LaplaceHistogram> {
    LaplaceHistogram::new(epsilon, features, domains)
}

impl LaplaceHistogram {
    pub fn new(epsilon: f64, features: Vec<usize>, domains: Vec<Vec<Value>>) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::domain("epsilon", format!("must be positive and finite, got {epsilon}")));
        }
        if features.len() != domains.len() {
            return Err(Error::UnboundedDomain(format!(
                "{} features but {} domains",
                features.len(),
                domains.len()
            )));
        }
        if let Some(i) = domains.iter().position(Vec::is_empty) {
            return Err(Error::UnboundedDomain(format!("#{}", features[i])));
        }
        let cells = domains
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(d.len()))
            .filter(|&c| c <= MAX_HISTOGRAM_CELLS);
        if cells.is_none() {
            return Err(Error::domain("domains", "histogram has too many cells"));
        }
        Ok(LaplaceHistogram {
            epsilon,
            features,
            domains,
        })
    }

    pub fn noise_scale(&self) -> f64 {
        2.0 / self.epsilon
    }

    fn cell_keys(&self) -> Vec<Vec<Value>> {
        let mut keys: Vec<Vec<Value>> = vec![Vec::new()];
        for d in &self.domains {
            keys = keys
                .into_iter()
                .flat_map(|k| {
                    d.iter().map(move |v| {
                        let mut k = k.clone();
                        k.push(v.clone());
                        k
                    })
                })
                .collect();
        }
        keys
    }

    /// Exact counts per cell, in cell order.
    pub fn exact_counts(&self, data: &Dataset) -> Result<Vec<(Vec<Value>, u64)>> {
        Lens::new(self.features.iter().copied()).validate(data.schema())?;
        let keys = self.cell_keys();
        let index: HashMap<&[Value], usize> =
            keys.iter().enumerate().map(|(i, k)| (k.as_slice(), i)).collect();
        let mut counts = vec![0u64; keys.len()];
        for r in data.records() {
            let key: Vec<Value> = self.features.iter().map(|&f| r.values()[f].clone()).collect();
            match index.get(key.as_slice()) {
                Some(&i) => counts[i] += 1,
                None => {
                    return Err(Error::domain(
                        "domains",
                        format!("record value {key:?} lies outside the declared domains"),
                    ))
                }
            }
        }
        Ok(keys.into_iter().zip(counts).collect())
    }
}

impl Curator for LaplaceHistogram {
    fn name(&self) -> &'static str {
        "laplace_histogram"
    }

    fn release(&self, data: &Dataset, rng: &mut dyn RngCore) -> Result<Report> {
        let scale = self.noise_scale();
        let cells = self
            .exact_counts(data)?
            .into_iter()
            .map(|(key, c)| HistogramCell {
                key,
                count: c as f64 + laplace_sample(scale, rng),
            })
            .collect();
        Ok(Report::NoisyHistogram {
            features: self.features.clone(),
            cells,
        })
    }
}

/// Publishes a uniformly chosen `k`-subset of its input in the clear.
#[derive(Clone, Copy, Debug)]
pub struct SubsampleRelease {
    k: usize,
}

pub fn subsample_release(k: usize) -> Result<SubsampleRelease> {
    if k == 0 {
        return Err(Error::domain("k", "must be at least 1"));
    }
    Ok(SubsampleRelease { k })
}

impl Curator for SubsampleRelease {
    fn name(&self) -> &'static str {
        "subsample_release"
    }

    fn release(&self, data: &Dataset, rng: &mut dyn RngCore) -> Result<Report> {
        if self.k > data.len() {
            return Err(Error::domain(
                "k",
                format!("cannot choose {} of {} records", self.k, data.len()),
            ));
        }
        let chosen = rand::seq::index::sample(rng, data.len(), self.k);
        Ok(Report::SubsampleRecords {
            records: chosen.into_iter().map(|i| data.records()[i].clone()).collect(),
        })
    }
}

/// Predicts +1 on records whose lens view matches a released record, -1 otherwise.
#[derive(Clone, Debug)]
pub struct MemorizingLearner {
    lens: Lens,
}

pub fn memorizing_learner(lens: Lens) -> MemorizingLearner {
    MemorizingLearner { lens }
}

struct Memorized {
    lens: Lens,
    seen: std::collections::HashSet<Record>,
}

impl Predictor for Memorized {
    fn predict(&self, record: &Record) -> f64 {
        if self.seen.contains(&record.restrict(&self.lens)) {
            1.0
        } else {
            -1.0
        }
    }
}

impl Learner for MemorizingLearner {
    fn name(&self) -> &'static str {
        "memorizing"
    }

    fn learn(&self, report: &Report, _rng: &mut dyn RngCore) -> Result<Box<dyn Predictor>> {
        let records = report.records().ok_or(Error::IncompatibleReport {
            learner: "memorizing",
            report: report.kind(),
        })?;
        Ok(Box::new(Memorized {
            seen: records.iter().map(|r| r.restrict(&self.lens)).collect(),
            lens: self.lens.clone(),
        }))
    }
}

/// Maps an estimated probability to a confidence-rated prediction.
pub fn confidence_from_probability(p_hat: f64) -> f64 {
    (2.0 * p_hat - 1.0).clamp(-1.0, 1.0)
}

/// Predicts `2p̂ - 1`, where `p̂` is the add-one smoothed frequency of the
/// target value among released records sharing the query's values on the
/// conditioning features. Unseen cells predict 0.
#[derive(Clone, Debug)]
pub struct HistogramThresholdLearner {
    target_feature: usize,
    target_value: Value,
    condition: Vec<usize>,
}

pub fn histogram_threshold_learner(
    target_feature: usize,
    target_value: Value,
    condition: Vec<usize>,
) -> HistogramThresholdLearner {
    HistogramThresholdLearner {
        target_feature,
        target_value,
        condition,
    }
}

#[derive(Default, Clone, Copy)]
struct CellTally {
    total: f64,
    hits: f64,
}

struct CellFrequencies {
    condition: Vec<usize>,
    tallies: HashMap<Vec<Value>, CellTally>,
}

impl Predictor for CellFrequencies {
    fn predict(&self, record: &Record) -> f64 {
        let key: Vec<Value> = self
            .condition
            .iter()
            .map(|&f| record.get(f).cloned().unwrap_or(Value::Null))
            .collect();
        match self.tallies.get(&key) {
            Some(t) => confidence_from_probability((t.hits + 1.0) / (t.total + 2.0)),
            None => 0.0,
        }
    }
}

impl Learner for HistogramThresholdLearner {
    fn name(&self) -> &'static str {
        "histogram_threshold"
    }

    fn learn(&self, report: &Report, _rng: &mut dyn RngCore) -> Result<Box<dyn Predictor>> {
        let mut tallies: HashMap<Vec<Value>, CellTally> = HashMap::new();
        match report {
            Report::NoisyHistogram { features, cells } => {
                let pos = |f: usize| {
                    features.iter().position(|&x| x == f).ok_or(Error::IncompatibleReport {
                        learner: "histogram_threshold",
                        report: "noisy-histogram without the needed feature",
                    })
                };
                let target = pos(self.target_feature)?;
                let cond = self.condition.iter().map(|&f| pos(f)).collect::<Result<Vec<_>>>()?;
                for cell in cells {
                    let count = cell.count.max(0.0);
                    let key: Vec<Value> = cond.iter().map(|&i| cell.key[i].clone()).collect();
                    let t = tallies.entry(key).or_default();
                    t.total += count;
                    if cell.key[target] == self.target_value {
                        t.hits += count;
                    }
                }
            }
            other => {
                let records = other.records().expect("every other report carries records");
                for r in records {
                    let key: Vec<Value> = self
                        .condition
                        .iter()
                        .map(|&f| r.get(f).cloned().unwrap_or(Value::Null))
                        .collect();
                    let t = tallies.entry(key).or_default();
                    t.total += 1.0;
                    if r.get(self.target_feature) == Some(&self.target_value) {
                        t.hits += 1.0;
                    }
                }
            }
        }
        Ok(Box::new(CellFrequencies {
            condition: self.condition.clone(),
            tallies,
        }))
    }
}

/// Predicts `c` everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantLearner {
    c: f64,
}

pub fn constant_learner(c: f64) -> Result<ConstantLearner> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(Error::domain("c", format!("must lie in [-1, 1], got {c}")));
    }
    Ok(ConstantLearner { c })
}

impl Learner for ConstantLearner {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn learn(&self, _report: &Report, _rng: &mut dyn RngCore) -> Result<Box<dyn Predictor>> {
        let c = self.c;
        Ok(Box::new(move |_: &Record| c))
    }
}

/// Ignores the report and returns a predictor fixed in advance, so the
/// predictor is independent of the split.
#[derive(Clone)]
pub struct FixedLearner {
    predictor: Arc<dyn Predictor>,
}

pub fn fixed_learner(predictor: impl Predictor + 'static) -> FixedLearner {
    FixedLearner {
        predictor: Arc::new(predictor),
    }
}

struct Shared(Arc<dyn Predictor>);

impl Predictor for Shared {
    fn predict(&self, record: &Record) -> f64 {
        self.0.predict(record)
    }
}

impl Learner for FixedLearner {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn learn(&self, _report: &Report, _rng: &mut dyn RngCore) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(Shared(Arc::clone(&self.predictor))))
    }
}
