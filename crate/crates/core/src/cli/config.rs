//! Run configuration, CSV ingestion and the predicate mini-language.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{gamma_approx_dp, gamma_pure_dp, ApproxFormula, BoundResult, CoherenceParams};
use crate::data::{Atom, Collection, Conjunction, Dataset, Lens, Record, Schema, Subpopulation, Value};
use crate::error::{Error, Result};
use crate::experiment::{audit_report, run_trials_with_threads, AuditConfig, AuditReport};
use crate::mechanisms::{
    clear_release, constant_learner, histogram_threshold_learner, laplace_histogram, memorizing_learner,
    randomized_response, subsample_release, Curator, Learner,
};

pub const DEFAULT_NULL_TOKEN: &str = "NULL";

fn default_null_token() -> String {
    DEFAULT_NULL_TOKEN.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV path, relative to the config file's directory unless absolute.
    pub dataset: PathBuf,
    #[serde(default = "default_null_token")]
    pub null_token: String,
    /// Features the predictor may see; all features when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lens: Option<Vec<String>>,
    /// The collection; a single `everyone` subpopulation when empty.
    #[serde(default)]
    pub subpopulations: Vec<SubpopSpec>,
    pub alpha: f64,
    pub gamma: GammaSpec,
    pub trials: u64,
    pub seed: u64,
    pub curator: CuratorSpec,
    pub learner: LearnerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubpopSpec {
    pub name: String,
    /// `feature=value & feature!=value ...`; empty matches every record.
    #[serde(default)]
    pub predicate: String,
}

/// An explicit size constraint or `"from-bounds"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Size(f64),
    Keyword(String),
}

impl GammaSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "from-bounds" {
            Ok(GammaSpec::Keyword(s.to_string()))
        } else {
            s.parse::<f64>()
                .map(GammaSpec::Size)
                .map_err(|_| Error::Config(format!("gamma must be a number or \"from-bounds\", got `{s}`")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CuratorSpec {
    ClearRelease,
    RandomizedResponse {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<Vec<String>>,
    },
    LaplaceHistogram {
        epsilon: f64,
        features: Vec<String>,
        /// Declared finite domain of every histogram feature.
        #[serde(default)]
        domains: BTreeMap<String, Vec<String>>,
    },
    SubsampleRelease {
        k: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LearnerSpec {
    #[serde(alias = "memorizing_learner")]
    Memorizing {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lens: Option<Vec<String>>,
    },
    #[serde(alias = "histogram_threshold_learner")]
    HistogramThreshold {
        target: String,
        value: String,
        #[serde(default)]
        condition: Vec<String>,
    },
    #[serde(alias = "constant_learner")]
    Constant {
        c: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsRegime {
    Pure,
    Approx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub regime: BoundsRegime,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub beta: f64,
    /// Defaults to the number of configured subpopulations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collection_size: Option<u64>,
    #[serde(default)]
    pub formula: ApproxFormula,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Reads a headed CSV; cells equal to `null_token` become ⊥.
pub fn load_csv(path: &Path, null_token: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_csv_from(file, null_token)
}

pub fn load_csv_from(input: impl std::io::Read, null_token: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut rows = reader.records();
    let header = match rows.next() {
        None => return Err(Error::EmptyCsv),
        Some(h) => h?,
    };
    let mut seen = HashSet::new();
    for name in header.iter() {
        if !seen.insert(name) {
            return Err(Error::DuplicateHeader(name.to_string()));
        }
    }
    let schema = Schema::new(header.iter())?;
    let mut records = Vec::new();
    for row in rows {
        let row = row?;
        if row.len() != schema.arity() {
            return Err(Error::RaggedRow {
                line: row.position().map_or(0, |p| p.line()),
                expected: schema.arity(),
                found: row.len(),
            });
        }
        records.push(
            row.iter()
                .map(|cell| if cell == null_token { Value::Null } else { Value::text(cell) })
                .collect::<Record>(),
        );
    }
    Dataset::new(schema, records)
}

/// Parses `feature=value & feature!=value`. `≠` is accepted for `!=`;
/// a value equal to `null_token` denotes ⊥.
pub fn parse_predicate(expr: &str, schema: &Schema, null_token: &str) -> Result<Conjunction> {
    let mut atoms = Vec::new();
    if expr.trim().is_empty() {
        return Ok(Conjunction { atoms });
    }
    for part in expr.split('&') {
        let part = part.trim();
        let (name, value, negated) = if let Some((f, v)) = part.split_once("!=") {
            (f, v, true)
        } else if let Some((f, v)) = part.split_once('≠') {
            (f, v, true)
        } else if let Some((f, v)) = part.split_once('=') {
            (f, v, false)
        } else {
            return Err(Error::Predicate(format!("`{part}` is not of the form feature=value or feature!=value")));
        };
        let (name, value) = (name.trim(), value.trim());
        if name.is_empty() {
            return Err(Error::Predicate(format!("missing feature name in `{part}`")));
        }
        let feature = schema
            .index_of(name)
            .map_err(|_| Error::Predicate(format!("unknown feature `{name}`")))?;
        let value = if value == null_token { Value::Null } else { Value::text(value) };
        atoms.push(Atom {
            feature,
            value,
            negated,
        });
    }
    Ok(Conjunction { atoms })
}

fn feature_indices(schema: &Schema, names: &[String]) -> Result<Vec<usize>> {
    names.iter().map(|n| schema.index_of(n)).collect()
}

pub fn build_curator(spec: &CuratorSpec, schema: &Schema) -> Result<Box<dyn Curator>> {
    Ok(match spec {
        CuratorSpec::ClearRelease => Box::new(clear_release()),
        CuratorSpec::RandomizedResponse { epsilon, features } => {
            let mut rr = randomized_response(*epsilon)?.with_feature_names(schema.names().to_vec());
            if let Some(f) = features {
                rr = rr.with_features(feature_indices(schema, f)?);
            }
            Box::new(rr)
        }
        CuratorSpec::LaplaceHistogram {
            epsilon,
            features,
            domains,
        } => {
            let idx = feature_indices(schema, features)?;
            let doms = features
                .iter()
                .map(|f| {
                    domains
                        .get(f)
                        .map(|d| d.iter().map(|v| Value::text(v)).collect())
                        .ok_or_else(|| Error::UnboundedDomain(f.clone()))
                })
                .collect::<Result<Vec<Vec<Value>>>>()?;
            Box::new(laplace_histogram(*epsilon, idx, doms)?)
        }
        CuratorSpec::SubsampleRelease { k } => Box::new(subsample_release(*k as usize)?),
    })
}

pub fn build_learner(spec: &LearnerSpec, schema: &Schema) -> Result<Box<dyn Learner>> {
    Ok(match spec {
        LearnerSpec::Memorizing { lens } => {
            let lens = match lens {
                Some(names) => Lens::from_names(schema, names)?,
                None => Lens::full(schema.arity()),
            };
            Box::new(memorizing_learner(lens))
        }
        LearnerSpec::HistogramThreshold {
            target,
            value,
            condition,
        } => Box::new(histogram_threshold_learner(
            schema.index_of(target)?,
            Value::text(value),
            feature_indices(schema, condition)?,
        )),
        LearnerSpec::Constant { c } => Box::new(constant_learner(*c)?),
    })
}

pub fn build_collection(specs: &[SubpopSpec], schema: &Schema, null_token: &str) -> Result<Collection> {
    if specs.is_empty() {
        return Ok(Collection::everyone());
    }
    let subpops = specs
        .iter()
        .map(|s| Ok(Subpopulation::new(s.name.clone(), parse_predicate(&s.predicate, schema, null_token)?)))
        .collect::<Result<Vec<_>>>()?;
    Collection::new(subpops)
}

/// `γ` from the bounds spec for a dataset of `n` records.
pub fn compute_bound(spec: &BoundsSpec, alpha: f64, collection_size: u64, n: u64) -> Result<BoundResult> {
    let p = CoherenceParams::new(alpha, spec.beta, spec.collection_size.unwrap_or(collection_size), n);
    match spec.regime {
        BoundsRegime::Pure => gamma_pure_dp(spec.epsilon, &p),
        BoundsRegime::Approx => {
            let delta = spec
                .delta
                .ok_or_else(|| Error::Config("approx bounds need `delta`".into()))?;
            gamma_approx_dp(spec.epsilon, delta, &p, spec.formula)
        }
    }
}

fn resolve_gamma(spec: &GammaSpec, bound: Option<&BoundResult>) -> Result<u64> {
    match spec {
        GammaSpec::Size(g) => {
            if *g >= 1.0 && g.fract() == 0.0 && *g <= u64::MAX as f64 {
                Ok(*g as u64)
            } else {
                Err(Error::Config(format!("gamma must be a positive integer, got {g}")))
            }
        }
        GammaSpec::Keyword(k) if k == "from-bounds" => match bound {
            Some(b) => Ok(b.gamma.ceil() as u64),
            None => Err(Error::Config("gamma \"from-bounds\" requires a bounds section".into())),
        },
        GammaSpec::Keyword(k) => Err(Error::Config(format!("unknown gamma keyword `{k}`"))),
    }
}

/// Everything an audit needs, built from a config.
pub struct PreparedRun {
    pub data: Dataset,
    pub audit: AuditConfig,
    pub curator: Box<dyn Curator>,
    pub learner: Box<dyn Learner>,
    pub bound: Option<BoundResult>,
    /// Resolved configuration echoed into the report.
    pub echo: serde_json::Value,
}

pub fn prepare(config: &RunConfig, base_dir: &Path) -> Result<PreparedRun> {
    let path = if config.dataset.is_absolute() {
        config.dataset.clone()
    } else {
        base_dir.join(&config.dataset)
    };
    let data = load_csv(&path, &config.null_token)?;
    let schema = data.schema().clone();
    let lens = match &config.lens {
        Some(names) => Lens::from_names(&schema, names)?,
        None => Lens::full(schema.arity()),
    };
    let collection = build_collection(&config.subpopulations, &schema, &config.null_token)?;
    let bound = config
        .bounds
        .as_ref()
        .map(|b| compute_bound(b, config.alpha, collection.len() as u64, data.len() as u64))
        .transpose()?;
    let gamma = resolve_gamma(&config.gamma, bound.as_ref())?;
    let curator = build_curator(&config.curator, &schema)?;
    let learner = build_learner(&config.learner, &schema)?;
    let audit = AuditConfig::new(config.alpha, gamma, config.trials, config.seed, collection, lens);

    let mut echo = serde_json::to_value(config)?;
    echo["gamma"] = json!(gamma);
    echo["gamma_spec"] = serde_json::to_value(&config.gamma)?;
    echo["lens"] = json!(audit.lens.names(&schema));
    echo["subpopulations"] = json!(config
        .subpopulations
        .iter()
        .map(|s| json!({ "name": s.name, "predicate": s.predicate }))
        .collect::<Vec<_>>());
    echo["collection"] = json!(audit.collection.names());
    echo["records"] = json!(data.len());
    echo["features"] = json!(schema.names());
    if let (Some(b), Some(r)) = (echo.get_mut("bounds"), bound.as_ref()) {
        b["collection_size"] = json!(r.params.collection_size);
    }
    Ok(PreparedRun {
        data,
        audit,
        curator,
        learner,
        bound,
        echo,
    })
}

/// Runs the configured audit. `threads` only affects speed, never the report.
pub fn run_audit(config: &RunConfig, base_dir: &Path, threads: Option<usize>) -> Result<AuditReport> {
    let run = prepare(config, base_dir)?;
    let audit = run_trials_with_threads(run.curator.as_ref(), run.learner.as_ref(), &run.data, &run.audit, threads)?;
    Ok(audit_report(&audit, run.echo, run.audit.gamma, run.bound.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_basics() {
        let d = load_csv_from("age,zip\n30,02139\n".as_bytes(), "NULL").unwrap();
        assert_eq!(d.schema().names(), ["age", "zip"]);
        let want: Record = ["30", "02139"].into_iter().collect();
        assert_eq!(d.records()[0], want);
    }

    #[test]
    fn csv_null_token() {
        let d = load_csv_from("a,b\nNA,x\n".as_bytes(), "NA").unwrap();
        assert!(d.records()[0].values()[0].is_null());
        assert_eq!(d.records()[0].values()[1], Value::text("x"));
    }

    #[test]
    fn csv_quoting() {
        let d = load_csv_from("a,b\n\"x,y\",\"he said \"\"hi\"\"\"\n".as_bytes(), "NULL").unwrap();
        assert_eq!(d.records()[0].values()[0], Value::text("x,y"));
        assert_eq!(d.records()[0].values()[1], Value::text("he said \"hi\""));
    }

    #[test]
    fn csv_errors_are_distinct() {
        assert!(matches!(load_csv_from("".as_bytes(), "NULL"), Err(Error::EmptyCsv)));
        assert!(matches!(
            load_csv_from("a,a\n1,2\n".as_bytes(), "NULL"),
            Err(Error::DuplicateHeader(h)) if h == "a"
        ));
        assert!(matches!(
            load_csv_from("a,b\n1,2\n3\n".as_bytes(), "NULL"),
            Err(Error::RaggedRow { line: 3, expected: 2, found: 1 })
        ));
    }

    #[test]
    fn predicates() {
        let schema = Schema::new(["race", "sex"]).unwrap();
        let c = parse_predicate("race=A & sex != F", &schema, "NULL").unwrap();
        let yes: Record = ["A", "M"].into_iter().collect();
        let no: Record = ["A", "F"].into_iter().collect();
        use crate::data::Membership;
        assert!(c.contains(&yes));
        assert!(!c.contains(&no));
        assert!(parse_predicate("", &schema, "NULL").unwrap().atoms.is_empty());
        assert!(matches!(parse_predicate("age=3", &schema, "NULL"), Err(Error::Predicate(_))));
        assert!(matches!(parse_predicate("race", &schema, "NULL"), Err(Error::Predicate(_))));
        let null = parse_predicate("sex=NULL", &schema, "NULL").unwrap();
        assert!(null.atoms[0].value.is_null());
        assert!(parse_predicate("sex≠F", &schema, "NULL").unwrap().atoms[0].negated);
    }

    #[test]
    fn gamma_resolution() {
        assert_eq!(resolve_gamma(&GammaSpec::Size(80.0), None).unwrap(), 80);
        assert!(resolve_gamma(&GammaSpec::Size(0.5), None).is_err());
        assert!(matches!(
            resolve_gamma(&GammaSpec::Keyword("from-bounds".into()), None),
            Err(Error::Config(_))
        ));
        let b = compute_bound(
            &BoundsSpec {
                regime: BoundsRegime::Pure,
                epsilon: 0.01,
                delta: None,
                beta: 0.1,
                collection_size: None,
                formula: ApproxFormula::default(),
            },
            0.5,
            1,
            1000,
        )
        .unwrap();
        assert_eq!(
            resolve_gamma(&GammaSpec::Keyword("from-bounds".into()), Some(&b)).unwrap(),
            b.gamma.ceil() as u64
        );
    }

    #[test]
    fn config_parses() {
        let c: RunConfig = serde_json::from_str(
            r#"{"dataset":"d.csv","alpha":1,"gamma":"from-bounds","trials":5,"seed":1,
                "curator":{"name":"randomized_response","epsilon":0.5},
                "learner":{"name":"histogram_threshold_learner","target":"b","value":"1"},
                "bounds":{"regime":"pure","epsilon":0.5,"beta":0.1}}"#,
        )
        .unwrap();
        assert_eq!(c.null_token, "NULL");
        assert_eq!(c.gamma, GammaSpec::Keyword("from-bounds".into()));
        assert!(serde_json::from_str::<RunConfig>(r#"{"dataset":"x","bogus":1}"#).is_err());
    }
}
