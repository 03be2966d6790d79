//! Records over a universe with a null symbol, lenses, subpopulations,
//! random half-splits, and empirical prediction distributions.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Slack tolerated on predictor outputs before they count as out of range.
pub const PREDICTION_TOLERANCE: f64 = 1e-9;

/// A single feature value: a byte string or the null symbol ⊥.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Null,
    Bytes(Box<[u8]>),
}

impl Value {
    pub fn text(s: &str) -> Self {
        Value::Bytes(s.as_bytes().into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Null => None,
            Value::Bytes(b) => Some(b),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::text(s)
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Bytes(s.into_bytes().into_boxed_slice())
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Null, Into::into)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("⊥"),
            Value::Bytes(b) => write!(f, "{:?}", String::from_utf8_lossy(b)),
        }
    }
}

// JSON form: null for ⊥, a string for UTF-8 bytes, {"hex": ".."} otherwise.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ValueRepr {
    Null(()),
    Text(String),
    Hex { hex: String },
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Bytes(b) => match std::str::from_utf8(b) {
                Ok(t) => s.serialize_str(t),
                Err(_) => ValueRepr::Hex {
                    hex: b.iter().map(|x| format!("{x:02x}")).collect(),
                }
                .serialize(s),
            },
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ValueRepr::deserialize(d)? {
            ValueRepr::Null(()) => Ok(Value::Null),
            ValueRepr::Text(t) => Ok(Value::text(&t)),
            ValueRepr::Hex { hex } => {
                if hex.len() % 2 != 0 {
                    return Err(serde::de::Error::custom("odd-length hex value"));
                }
                (0..hex.len())
                    .step_by(2)
                    .map(|i| u8::from_str_radix(&hex[i..i + 2], 16))
                    .collect::<std::result::Result<Vec<u8>, _>>()
                    .map(|v| Value::Bytes(v.into()))
                    .map_err(serde::de::Error::custom)
            }
        }
    }
}

/// A feature vector. Cloning is a reference-count bump.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Record(Arc<[Value]>);

impl Record {
    pub fn new(values: Vec<Value>) -> Self {
        Record(values.into())
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Option<&Value> {
        self.0.get(i)
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    /// Nulls every feature outside the lens. Indices must already be valid.
    pub fn restrict(&self, lens: &Lens) -> Record {
        Record(
            self.0
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if lens.contains(i) {
                        v.clone()
                    } else {
                        Value::Null
                    }
                })
                .collect(),
        )
    }
}

impl fmt::Debug for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Record").field(&self.0).finish()
    }
}

impl<V: Into<Value>> FromIterator<V> for Record {
    fn from_iter<I: IntoIterator<Item = V>>(iter: I) -> Self {
        Record(iter.into_iter().map(Into::into).collect())
    }
}

/// Ordered feature names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    names: Vec<String>,
}

impl Schema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateHeader(n.clone()));
            }
        }
        Ok(Schema { names })
    }

    /// Schema with generated names `f0, f1, ...`.
    pub fn anonymous(arity: usize) -> Self {
        Schema {
            names: (0..arity).map(|i| format!("f{i}")).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{name}`")))
    }
}

/// A multiset of records sharing one schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<Record>) -> Result<Self> {
        Self::with_shared_schema(Arc::new(schema), records)
    }

    fn with_shared_schema(schema: Arc<Schema>, records: Vec<Record>) -> Result<Self> {
        if let Some((i, r)) = records
            .iter()
            .enumerate()
            .find(|(_, r)| r.arity() != schema.arity())
        {
            return Err(Error::Schema(format!(
                "record {i} has {} features, schema has {}",
                r.arity(),
                schema.arity()
            )));
        }
        Ok(Dataset { schema, records })
    }

    /// Builds a dataset from rows of optional strings with an anonymous schema.
    pub fn from_rows<R, V>(rows: impl IntoIterator<Item = R>) -> Result<Self>
    where
        R: IntoIterator<Item = V>,
        V: Into<Value>,
    {
        let records: Vec<Record> = rows.into_iter().map(|r| r.into_iter().collect()).collect();
        let arity = records.first().map_or(0, Record::arity);
        Dataset::new(Schema::anonymous(arity), records)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dataset over the same schema holding the selected records.
    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            records: indices
                .into_iter()
                .map(|i| self.records[i].clone())
                .collect(),
        }
    }

    pub(crate) fn with_records(&self, records: Vec<Record>) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            records,
        }
    }
}

/// The set of features a predictor is allowed to see.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lens {
    included: BTreeSet<usize>,
}

impl Lens {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        Lens {
            included: indices.into_iter().collect(),
        }
    }

    pub fn full(arity: usize) -> Self {
        Lens::new(0..arity)
    }

    pub fn empty() -> Self {
        Lens::default()
    }

    pub fn from_names<S: AsRef<str>>(schema: &Schema, names: &[S]) -> Result<Self> {
        names
            .iter()
            .map(|n| schema.index_of(n.as_ref()))
            .collect::<Result<BTreeSet<_>>>()
            .map(|included| Lens { included })
    }

    pub fn contains(&self, index: usize) -> bool {
        self.included.contains(&index)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.included.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.included.len()
    }

    pub fn is_empty(&self) -> bool {
        self.included.is_empty()
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        match self.included.iter().find(|&&i| i >= schema.arity()) {
            Some(i) => Err(Error::Schema(format!(
                "lens references feature {i} but the schema has {} features",
                schema.arity()
            ))),
            None => Ok(()),
        }
    }

    pub fn names(&self, schema: &Schema) -> Vec<String> {
        self.indices()
            .filter_map(|i| schema.names().get(i).cloned())
            .collect()
    }
}

/// Replaces every feature outside `lens` with ⊥.
pub fn restrict_lens(data: &Dataset, lens: &Lens) -> Result<Dataset> {
    lens.validate(data.schema())?;
    Ok(data.with_records(data.records.iter().map(|r| r.restrict(lens)).collect()))
}

/// Deterministic membership test for a subpopulation.
pub trait Membership: Send + Sync {
    fn contains(&self, record: &Record) -> bool;
}

impl<F> Membership for F
where
    F: Fn(&Record) -> bool + Send + Sync,
{
    fn contains(&self, record: &Record) -> bool {
        self(record)
    }
}

/// `feature = value` or `feature != value`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub feature: usize,
    pub value: Value,
    pub negated: bool,
}

impl Atom {
    pub fn holds(&self, record: &Record) -> bool {
        let eq = record.get(self.feature) == Some(&self.value);
        eq != self.negated
    }
}

/// Conjunction of equality/inequality atoms; the empty conjunction accepts everything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conjunction {
    pub atoms: Vec<Atom>,
}

impl Membership for Conjunction {
    fn contains(&self, record: &Record) -> bool {
        self.atoms.iter().all(|a| a.holds(record))
    }
}

#[derive(Clone)]
pub struct Subpopulation {
    name: String,
    predicate: Arc<dyn Membership>,
}

impl Subpopulation {
    pub fn new(name: impl Into<String>, predicate: impl Membership + 'static) -> Self {
        Subpopulation {
            name: name.into(),
            predicate: Arc::new(predicate),
        }
    }

    pub fn everyone() -> Self {
        Subpopulation::new("everyone", Conjunction::default())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, record: &Record) -> bool {
        self.predicate.contains(record)
    }
}

impl fmt::Debug for Subpopulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Subpopulation")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

/// Keeps the records the predicate accepts, in order, with multiplicity.
pub fn restrict_subpop(data: &Dataset, subpop: &Subpopulation) -> Dataset {
    data.with_records(
        data.records
            .iter()
            .filter(|r| subpop.contains(r))
            .cloned()
            .collect(),
    )
}

/// Non-empty list of uniquely named subpopulations.
#[derive(Clone, Debug)]
pub struct Collection {
    subpops: Vec<Subpopulation>,
}

impl Collection {
    pub fn new(subpops: Vec<Subpopulation>) -> Result<Self> {
        if subpops.is_empty() {
            return Err(Error::domain("collection", "needs at least one subpopulation"));
        }
        let mut seen = HashSet::new();
        for s in &subpops {
            if !seen.insert(s.name()) {
                return Err(Error::domain(
                    "collection",
                    format!("duplicate subpopulation name `{}`", s.name()),
                ));
            }
        }
        Ok(Collection { subpops })
    }

    pub fn everyone() -> Self {
        Collection {
            subpops: vec![Subpopulation::everyone()],
        }
    }

    pub fn len(&self) -> usize {
        self.subpops.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = &Subpopulation> {
        self.subpops.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.subpops.iter().map(|s| s.name.clone()).collect()
    }
}

/// A half-split of `[n]`: the sorted index set `I` with `|I| = n/2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    n: usize,
    in_a: Vec<bool>,
    index_set_a: Vec<usize>,
}

impl Split {
    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        check_even(n)?;
        let mut in_a = vec![false; n];
        for i in indices {
            if i >= n || in_a[i] {
                return Err(Error::domain("split", format!("invalid or repeated index {i}")));
            }
            in_a[i] = true;
        }
        let index_set_a: Vec<usize> = (0..n).filter(|&i| in_a[i]).collect();
        if index_set_a.len() != n / 2 {
            return Err(Error::domain(
                "split",
                format!("{} indices given, expected {}", index_set_a.len(), n / 2),
            ));
        }
        Ok(Split {
            n,
            in_a,
            index_set_a,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn index_set_a(&self) -> &[usize] {
        &self.index_set_a
    }

    pub fn index_set_b(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.in_a[i]).collect()
    }

    pub fn in_a(&self, i: usize) -> bool {
        self.in_a[i]
    }

    /// The split with the roles of the two halves exchanged.
    pub fn complement(&self) -> Split {
        let in_a: Vec<bool> = self.in_a.iter().map(|b| !b).collect();
        let index_set_a = (0..self.n).filter(|&i| in_a[i]).collect();
        Split {
            n: self.n,
            in_a,
            index_set_a,
        }
    }

    /// `(X_a, X_b)` in index order.
    pub fn halves(&self, data: &Dataset) -> (Dataset, Dataset) {
        (
            data.select(self.index_set_a.iter().copied()),
            data.select(self.index_set_b()),
        )
    }
}

fn check_even(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        Err(Error::OddDataset(n))
    } else {
        Ok(())
    }
}

/// Draws `I` uniformly from all `n/2`-subsets of `[n]`.
pub fn random_split<R: RngCore + ?Sized>(data: &Dataset, rng: &mut R) -> Result<Split> {
    split_indices(data.len(), rng)
}

pub(crate) fn split_indices<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Result<Split> {
    check_even(n)?;
    let chosen = rand::seq::index::sample(rng, n, n / 2);
    Split::from_indices(n, chosen.into_iter())
}

/// A confidence-rated predictor `Record -> [-1, 1]`.
pub trait Predictor: Send + Sync {
    fn predict(&self, record: &Record) -> f64;
}

impl<F> Predictor for F
where
    F: Fn(&Record) -> f64 + Send + Sync,
{
    fn predict(&self, record: &Record) -> f64 {
        self(record)
    }
}

/// Checks a raw prediction against `[-1, 1]`, clamping round-off.
pub fn checked_prediction(value: f64) -> Result<f64> {
    if value.is_nan() || value.abs() > 1.0 + PREDICTION_TOLERANCE {
        Err(Error::PredictionOutOfRange { value })
    } else {
        Ok(value.clamp(-1.0, 1.0))
    }
}

/// Uniform distribution over a non-empty multiset of predictions in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySupport("empirical distribution needs a sample"));
        }
        for v in values.iter_mut() {
            *v = checked_prediction(*v)?;
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { values })
    }

    pub fn point_mass(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    /// Sorted support with multiplicity.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(#values <= p) / m`.
    pub fn cdf(&self, p: f64) -> f64 {
        self.values.partition_point(|&v| v <= p) as f64 / self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        crate::numeric::neumaier_sum(self.values.iter().copied()) / self.values.len() as f64
    }
}

/// `h(X)`: the predictions of `h` on every record of `X`.
pub fn empirical_distribution(h: &dyn Predictor, data: &Dataset) -> Result<EmpiricalDistribution> {
    if data.is_empty() {
        return Err(Error::EmptySupport("cannot evaluate a predictor on an empty dataset"));
    }
    EmpiricalDistribution::new(data.records().iter().map(|r| h.predict(r)).collect())
}
