//! The demographic coherence experiment, its Monte Carlo `β` estimator, and
//! audit reports.
//!
//! One trial: drop every subpopulation with fewer than `γ` members in the
//! full dataset, split the dataset into random halves `X_a`, `X_b`, train
//! `h = learner(curator(X_a))`, and compare `h(ρ(X_a ∩ C))` with
//! `h(ρ(X_b ∩ C))` in Wasserstein distance for each remaining `C`. The trial
//! witnesses incoherence (`b = 0`) when some distance exceeds `α`.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundResult;
use crate::data::{checked_prediction, split_indices, Collection, Dataset, EmpiricalDistribution, Lens, Record, Split};
use crate::error::{Error, PartialResults, Result};
use crate::mechanisms::{Curator, Learner};
use crate::metric::wasserstein1;
use crate::stats::clopper_pearson;

pub const AUDIT_REPORT_VERSION: u32 = 1;
pub const CONFIDENCE_LEVEL: f64 = 0.95;
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug)]
pub struct AuditConfig {
    /// Distance threshold, in `(0, 2]`.
    pub alpha: f64,
    /// Minimum subpopulation size `γ`.
    pub gamma: u64,
    pub trials: u64,
    pub seed: u64,
    pub collection: Collection,
    pub lens: Lens,
}

impl AuditConfig {
    pub fn new(alpha: f64, gamma: u64, trials: u64, seed: u64, collection: Collection, lens: Lens) -> Self {
        AuditConfig {
            alpha,
            gamma,
            trials,
            seed,
            collection,
            lens,
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::domain("alpha", format!("must lie in (0, 2], got {}", self.alpha)));
        }
        if self.gamma == 0 {
            return Err(Error::domain("gamma", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::domain("trials", "must be at least 1"));
        }
        self.lens.validate(data.schema())?;
        if data.len() < 2 || data.len() % 2 != 0 {
            return Err(Error::OddDataset(data.len()));
        }
        Ok(())
    }
}

/// The random stream owned by trial `index`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubpopStatus {
    Audited,
    /// `|X ∩ C| < γ`; not part of `𝒞*`.
    BelowSizeConstraint,
    /// In `𝒞*` but one realized half was empty; skipped and flagged.
    EmptyHalf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubpopOutcome {
    pub name: String,
    pub size: usize,
    pub size_a: usize,
    pub size_b: usize,
    pub status: SubpopStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    /// `1` unless some audited subpopulation's distance exceeds `α`.
    pub b: u8,
    pub subpopulations: Vec<SubpopOutcome>,
}

impl TrialOutcome {
    pub fn coherent(&self) -> bool {
        self.b == 1
    }
}

/// Per-dataset work shared by all trials: memberships and lens views.
struct Prepared {
    members: Vec<Vec<usize>>,
    views: Vec<Record>,
}

impl Prepared {
    fn new(data: &Dataset, cfg: &AuditConfig) -> Self {
        let members = cfg
            .collection
            .iter()
            .map(|c| {
                data.records()
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| c.contains(r))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let views = data.records().iter().map(|r| r.restrict(&cfg.lens)).collect();
        Prepared { members, views }
    }
}

fn run_on_split(
    curator: &dyn Curator,
    learner: &dyn Learner,
    data: &Dataset,
    cfg: &AuditConfig,
    prep: &Prepared,
    split: &Split,
    trial: u64,
    rng: &mut dyn RngCore,
) -> Result<TrialOutcome> {
    // the curator always sees its input in random order
    let mut xa: Vec<Record> = split.index_set_a().iter().map(|&i| data.records()[i].clone()).collect();
    xa.shuffle(rng);
    let report = curator.release(&data.with_records(xa), rng)?;
    let h = learner.learn(&report, rng)?;

    let mut predictions: Vec<Option<f64>> = vec![None; data.len()];
    let mut predict = |i: usize| -> Result<f64> {
        match predictions[i] {
            Some(p) => Ok(p),
            None => {
                let p = checked_prediction(h.predict(&prep.views[i]))?;
                predictions[i] = Some(p);
                Ok(p)
            }
        }
    };

    let mut subpopulations = Vec::with_capacity(cfg.collection.len());
    let mut b = 1u8;
    for (c, members) in cfg.collection.iter().zip(&prep.members) {
        let (ia, ib): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| split.in_a(i));
        let mut outcome = SubpopOutcome {
            name: c.name().to_string(),
            size: members.len(),
            size_a: ia.len(),
            size_b: ib.len(),
            status: SubpopStatus::Audited,
            distance: None,
        };
        if (members.len() as u64) < cfg.gamma {
            outcome.status = SubpopStatus::BelowSizeConstraint;
        } else if ia.is_empty() || ib.is_empty() {
            outcome.status = SubpopStatus::EmptyHalf;
        } else {
            let pa = ia.iter().map(|&i| predict(i)).collect::<Result<Vec<_>>>()?;
            let pb = ib.iter().map(|&i| predict(i)).collect::<Result<Vec<_>>>()?;
            let d = wasserstein1(&EmpiricalDistribution::new(pa)?, &EmpiricalDistribution::new(pb)?);
            if d > cfg.alpha {
                b = 0;
            }
            outcome.distance = Some(d);
        }
        subpopulations.push(outcome);
    }
    Ok(TrialOutcome {
        trial,
        b,
        subpopulations,
    })
}

/// One run of the experiment with a fresh split drawn from `rng`.
pub fn dem_coh_trial(
    curator: &dyn Curator,
    learner: &dyn Learner,
    data: &Dataset,
    cfg: &AuditConfig,
    trial: u64,
    rng: &mut dyn RngCore,
) -> Result<TrialOutcome> {
    cfg.validate(data)?;
    let prep = Prepared::new(data, cfg);
    let split = split_indices(data.len(), rng)?;
    run_on_split(curator, learner, data, cfg, &prep, &split, trial, rng)
}

/// One run of the experiment on a given split.
pub fn dem_coh_trial_on_split(
    curator: &dyn Curator,
    learner: &dyn Learner,
    data: &Dataset,
    cfg: &AuditConfig,
    split: &Split,
    rng: &mut dyn RngCore,
) -> Result<TrialOutcome> {
    cfg.validate(data)?;
    if split.n() != data.len() {
        return Err(Error::domain("split", "split size does not match the dataset"));
    }
    let prep = Prepared::new(data, cfg);
    run_on_split(curator, learner, data, cfg, &prep, split, 0, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub trials: u64,
    pub incoherent: u64,
    pub estimate: f64,
    pub confidence: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BetaEstimate {
    pub fn from_counts(incoherent: u64, trials: u64) -> Result<Self> {
        let (lower, upper) = clopper_pearson(incoherent, trials, CONFIDENCE_LEVEL)?;
        Ok(BetaEstimate {
            trials,
            incoherent,
            estimate: incoherent as f64 / trials as f64,
            confidence: CONFIDENCE_LEVEL,
            lower,
            upper,
        })
    }
}

/// Every trial outcome plus the resulting estimate.
#[derive(Clone, Debug)]
pub struct Audit {
    pub alpha: f64,
    pub outcomes: Vec<TrialOutcome>,
    pub estimate: BetaEstimate,
}

/// Runs `cfg.trials` trials, trial `i` on stream `(seed, i)`, on the
/// current rayon pool. Results do not depend on the number of threads.
pub fn run_trials(curator: &dyn Curator, learner: &dyn Learner, data: &Dataset, cfg: &AuditConfig) -> Result<Audit> {
    cfg.validate(data)?;
    let prep = Prepared::new(data, cfg);
    let results: Vec<Result<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, i);
            let split = split_indices(data.len(), &mut rng)?;
            run_on_split(curator, learner, data, cfg, &prep, &split, i, &mut rng)
        })
        .collect();

    let mut outcomes = Vec::with_capacity(results.len());
    let mut first_error = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) if first_error.is_none() => first_error = Some((i as u64, e)),
            Err(_) => {}
        }
    }
    let incoherent = outcomes.iter().filter(|o| !o.coherent()).count() as u64;
    if let Some((trial, source)) = first_error {
        return Err(Error::Aborted {
            partial: PartialResults {
                requested: cfg.trials,
                completed: outcomes.len() as u64,
                incoherent,
            },
            source: Box::new(Error::Trial {
                trial,
                source: Box::new(source),
            }),
        });
    }
    Ok(Audit {
        alpha: cfg.alpha,
        estimate: BetaEstimate::from_counts(incoherent, cfg.trials)?,
        outcomes,
    })
}

/// [`run_trials`] on a dedicated pool of `threads` workers (`None`: rayon default).
pub fn run_trials_with_threads(
    curator: &dyn Curator,
    learner: &dyn Learner,
    data: &Dataset,
    cfg: &AuditConfig,
    threads: Option<usize>,
) -> Result<Audit> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_trials(curator, learner, data, cfg))
}

pub fn estimate_beta(
    curator: &dyn Curator,
    learner: &dyn Learner,
    data: &Dataset,
    cfg: &AuditConfig,
) -> Result<BetaEstimate> {
    Ok(run_trials(curator, learner, data, cfg)?.estimate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<u64>,
}

impl DistanceHistogram {
    fn new() -> Self {
        DistanceHistogram {
            lower: 0.0,
            upper: 2.0,
            counts: vec![0; HISTOGRAM_BINS],
        }
    }

    fn add(&mut self, d: f64) {
        let width = (self.upper - self.lower) / HISTOGRAM_BINS as f64;
        let bin = (((d - self.lower) / width).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        self.counts[bin] += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubpopSummary {
    pub name: String,
    pub size: usize,
    pub below_size_constraint: bool,
    pub audited_trials: u64,
    pub empty_half_trials: u64,
    pub exceeded_alpha: u64,
    pub max_distance: Option<f64>,
    pub histogram: DistanceHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    #[serde(flatten)]
    pub result: BoundResult,
    /// Whether the audit's size constraint meets the theorem's `γ`.
    pub gamma_satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub version: u32,
    pub config: serde_json::Value,
    pub estimate: BetaEstimate,
    pub subpopulations: Vec<SubpopSummary>,
    pub trials: Vec<TrialOutcome>,
    pub bound: Option<BoundComparison>,
    pub verdict: Verdict,
}

/// Fail iff the lower confidence limit exceeds the theoretical `β`.
pub fn verdict(estimate: &BetaEstimate, bound: Option<&BoundResult>) -> Verdict {
    match bound {
        None => Verdict::Inconclusive,
        Some(b) if estimate.lower > b.params.beta => Verdict::Fail,
        Some(_) => Verdict::Pass,
    }
}

/// Joins the empirical results with an optional theoretical bound.
/// `config` is echoed verbatim; `gamma` is the audit's size constraint.
pub fn audit_report(audit: &Audit, config: serde_json::Value, gamma: u64, bound: Option<&BoundResult>) -> AuditReport {
    let mut summaries: Vec<SubpopSummary> = Vec::new();
    for o in &audit.outcomes {
        for (j, s) in o.subpopulations.iter().enumerate() {
            if summaries.len() <= j {
                summaries.push(SubpopSummary {
                    name: s.name.clone(),
                    size: s.size,
                    below_size_constraint: s.status == SubpopStatus::BelowSizeConstraint,
                    audited_trials: 0,
                    empty_half_trials: 0,
                    exceeded_alpha: 0,
                    max_distance: None,
                    histogram: DistanceHistogram::new(),
                });
            }
            let sum = &mut summaries[j];
            match s.status {
                SubpopStatus::EmptyHalf => sum.empty_half_trials += 1,
                SubpopStatus::BelowSizeConstraint => {}
                SubpopStatus::Audited => {
                    let d = s.distance.unwrap_or(0.0);
                    sum.audited_trials += 1;
                    sum.histogram.add(d);
                    if d > audit.alpha {
                        sum.exceeded_alpha += 1;
                    }
                    sum.max_distance = Some(sum.max_distance.map_or(d, |m: f64| m.max(d)));
                }
            }
        }
    }
    AuditReport {
        version: AUDIT_REPORT_VERSION,
        config,
        estimate: audit.estimate,
        subpopulations: summaries,
        trials: audit.outcomes.clone(),
        bound: bound.map(|b| BoundComparison {
            result: *b,
            gamma_satisfied: gamma as f64 >= b.gamma,
        }),
        verdict: verdict(&audit.estimate, bound),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{gamma_from_maxinfo, CoherenceParams};
    use crate::data::Subpopulation;
    use crate::mechanisms::{clear_release, constant_learner, fixed_learner, memorizing_learner};

    fn distinct(n: usize) -> Dataset {
        Dataset::from_rows((0..n).map(|i| [format!("r{i}")])).unwrap()
    }

    fn bits(n: usize) -> Dataset {
        Dataset::from_rows((0..n).map(|i| [if i % 2 == 0 { "0" } else { "1" }])).unwrap()
    }

    fn cfg(alpha: f64, gamma: u64, trials: u64, arity: usize) -> AuditConfig {
        AuditConfig::new(alpha, gamma, trials, 42, Collection::everyone(), Lens::full(arity))
    }

    fn bit_predictor(r: &Record) -> f64 {
        if r.get(0).and_then(|v| v.as_bytes()) == Some(b"1") {
            1.0
        } else {
            -1.0
        }
    }

    #[test]
    fn constant_learner_is_always_coherent() {
        let x = distinct(50);
        let audit = run_trials(&clear_release(), &constant_learner(0.0).unwrap(), &x, &cfg(0.1, 1, 20, 1)).unwrap();
        assert_eq!(audit.estimate.incoherent, 0);
        assert!(audit
            .outcomes
            .iter()
            .all(|o| o.subpopulations[0].distance == Some(0.0)));
        assert_eq!(audit.estimate.lower, 0.0);
    }

    #[test]
    fn memorizing_on_distinct_records_is_always_incoherent() {
        let x = distinct(200);
        let audit = run_trials(&clear_release(), &memorizing_learner(Lens::full(1)), &x, &cfg(1.0, 80, 30, 1)).unwrap();
        assert_eq!(audit.estimate.estimate, 1.0);
        assert!(audit
            .outcomes
            .iter()
            .all(|o| o.subpopulations[0].distance == Some(2.0)));
    }

    #[test]
    fn odd_dataset_rejected() {
        let x = distinct(5);
        assert!(matches!(
            run_trials(&clear_release(), &constant_learner(0.0).unwrap(), &x, &cfg(0.5, 1, 1, 1)),
            Err(Error::OddDataset(5))
        ));
    }

    #[test]
    fn size_filter_uses_the_full_dataset() {
        let x = bits(20);
        let ones = Subpopulation::new("ones", |r: &Record| r.get(0).and_then(|v| v.as_bytes()) == Some(b"1"));
        let coll = Collection::new(vec![Subpopulation::everyone(), ones]).unwrap();
        let c = AuditConfig::new(0.5, 11, 5, 1, coll, Lens::full(1));
        let audit = run_trials(&clear_release(), &fixed_learner(bit_predictor), &x, &c).unwrap();
        for o in &audit.outcomes {
            assert_eq!(o.subpopulations[0].status, SubpopStatus::Audited);
            // 10 members in X, below γ = 11 even though the halves are never consulted
            assert_eq!(o.subpopulations[1].status, SubpopStatus::BelowSizeConstraint);
            assert_eq!(o.subpopulations[1].size, 10);
        }
    }

    #[test]
    fn empty_half_is_flagged_not_counted() {
        let x = Dataset::from_rows([["a"], ["b"]]).unwrap();
        let only_a = Subpopulation::new("a", |r: &Record| r.get(0).and_then(|v| v.as_bytes()) == Some(b"a"));
        let c = AuditConfig::new(0.1, 1, 10, 3, Collection::new(vec![only_a]).unwrap(), Lens::full(1));
        let audit = run_trials(&clear_release(), &memorizing_learner(Lens::full(1)), &x, &c).unwrap();
        assert!(audit
            .outcomes
            .iter()
            .all(|o| o.coherent() && o.subpopulations[0].status == SubpopStatus::EmptyHalf));
    }

    #[test]
    fn prediction_out_of_range_aborts_with_trial_index() {
        let x = distinct(10);
        let err = run_trials(&clear_release(), &fixed_learner(|_: &Record| 3.0), &x, &cfg(0.5, 1, 4, 1)).unwrap_err();
        let Error::Aborted { partial, source } = err else { panic!() };
        assert_eq!(partial.completed, 0);
        assert!(matches!(*source, Error::Trial { trial: 0, .. }));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let x = bits(100);
        let c = cfg(0.2, 1, 64, 1);
        let one = run_trials_with_threads(&clear_release(), &fixed_learner(bit_predictor), &x, &c, Some(1)).unwrap();
        let many = run_trials_with_threads(&clear_release(), &fixed_learner(bit_predictor), &x, &c, Some(8)).unwrap();
        assert_eq!(one.outcomes, many.outcomes);
    }

    #[test]
    fn estimate_is_nonincreasing_in_alpha() {
        let x = bits(40);
        let mut last = u64::MAX;
        for alpha in [0.05, 0.1, 0.2, 0.4, 0.8, 1.6] {
            let e = estimate_beta(&clear_release(), &fixed_learner(bit_predictor), &x, &cfg(alpha, 1, 200, 1)).unwrap();
            assert!(e.incoherent <= last);
            last = e.incoherent;
        }
    }

    #[test]
    fn swapping_halves_preserves_distances_for_fixed_predictors() {
        let x = bits(30);
        let c = cfg(0.3, 1, 1, 1);
        let learner = fixed_learner(|r: &Record| if bit_predictor(r) > 0.0 { 0.7 } else { -0.2 });
        for seed in 0..50 {
            let split = split_indices(30, &mut trial_rng(seed, 0)).unwrap();
            let a = dem_coh_trial_on_split(&clear_release(), &learner, &x, &c, &split, &mut trial_rng(seed, 1)).unwrap();
            let b = dem_coh_trial_on_split(&clear_release(), &learner, &x, &c, &split.complement(), &mut trial_rng(seed, 1))
                .unwrap();
            assert_eq!(a.subpopulations[0].distance, b.subpopulations[0].distance);
        }
    }

    #[test]
    fn verdicts() {
        let p = CoherenceParams::new(1.0, 0.1, 1, 1000);
        let bound = gamma_from_maxinfo(0.0, &p).unwrap();
        let none = BetaEstimate::from_counts(0, 1000).unwrap();
        let all = BetaEstimate::from_counts(1000, 1000).unwrap();
        assert_eq!(verdict(&none, Some(&bound)), Verdict::Pass);
        assert_eq!(verdict(&all, Some(&bound)), Verdict::Fail);
        assert_eq!(verdict(&all, None), Verdict::Inconclusive);
    }

    #[test]
    fn report_histograms() {
        let x = distinct(200);
        let audit = run_trials(&clear_release(), &memorizing_learner(Lens::full(1)), &x, &cfg(1.0, 80, 10, 1)).unwrap();
        let report = audit_report(&audit, serde_json::json!({}), 80, None);
        assert_eq!(report.subpopulations[0].histogram.counts[HISTOGRAM_BINS - 1], 10);
        assert_eq!(report.subpopulations[0].exceeded_alpha, 10);
        assert_eq!(report.verdict, Verdict::Inconclusive);
    }
}
