//! Attributed-sequence data model: item vocabulary, attribute schema and
//! encoding, JSONL ingestion, and the synthetic benchmark generator.
//!
//! JSONL format, one object per line:
//!
//! ```json
//! {"id": "s000017", "attributes": {"duration": 5.0, "os": "linux"}, "sequence": ["i3", "i4"], "label": "inlier"}
//! ```
//!
//! Attribute values are either strings (categorical) or numbers (numerical).
//! The schema and vocabulary can be supplied through a sidecar document or
//! inferred from the whole file.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{RandomSource, Vector};

/// The item alphabet. Index `r` (one past the last real item) is reserved for
/// the start symbol fed to the sequence network at its first step; it never
/// appears in stored sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ItemVocabulary {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl ItemVocabulary {
    pub fn new(items: Vec<String>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::input("vocabulary must contain at least one item"));
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, token) in items.iter().enumerate() {
            if index.insert(token.clone(), i).is_some() {
                return Err(Error::input(format!("duplicate vocabulary token {token:?}")));
            }
        }
        Ok(ItemVocabulary { items, index })
    }

    /// Number of real items, r.
    pub fn size(&self) -> usize {
        self.items.len()
    }

    /// Index of the reserved start symbol.
    pub fn start_index(&self) -> usize {
        self.items.len()
    }

    /// One-hot width for sequence-network inputs: r real items plus the start
    /// symbol.
    pub fn input_width(&self) -> usize {
        self.items.len() + 1
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.items.get(index).map(String::as_str)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

impl TryFrom<Vec<String>> for ItemVocabulary {
    type Error = String;

    fn try_from(items: Vec<String>) -> std::result::Result<Self, String> {
        ItemVocabulary::new(items).map_err(|e| e.to_string())
    }
}

impl From<ItemVocabulary> for Vec<String> {
    fn from(v: ItemVocabulary) -> Vec<String> {
        v.items
    }
}

/// One-hot encoding over a fixed width.
pub fn one_hot(index: usize, width: usize) -> Result<Vector> {
    if index >= width {
        return Err(Error::input(format!("one-hot index {index} out of range for width {width}")));
    }
    let mut v = Vector::zeros(width);
    v.set(index, 1.0);
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Inlier => "inlier",
            Label::Outlier => "outlier",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "inlier" => Some(Label::Inlier),
            "outlier" => Some(Label::Outlier),
            _ => None,
        }
    }
}

/// Raw attribute cell before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// One-hot expanded over the listed levels.
    Categorical { levels: Vec<String> },
    /// Min-max scaled into [0,1]. The squared-error reconstruction target must
    /// live where the decoder's sigmoid output can reach it.
    Numerical { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub columns: Vec<AttributeColumn>,
}

/// What to do with a categorical level the schema has never seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownLevel {
    /// Encode as an all-zeros block. The forgiving default for embedding new
    /// data with a trained model.
    #[default]
    ZeroBlock,
    /// Fail with an input-domain error.
    Reject,
}

impl AttributeSchema {
    /// Encoded width u.
    pub fn encoded_width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Categorical { levels } => levels.len(),
                ColumnKind::Numerical { .. } => 1,
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for col in &self.columns {
            if !names.insert(col.name.as_str()) {
                return Err(Error::input(format!("duplicate attribute column {:?}", col.name)));
            }
            match &col.kind {
                ColumnKind::Categorical { levels } => {
                    if levels.is_empty() {
                        return Err(Error::input(format!(
                            "categorical column {:?} has no levels",
                            col.name
                        )));
                    }
                    let unique: HashSet<&String> = levels.iter().collect();
                    if unique.len() != levels.len() {
                        return Err(Error::input(format!(
                            "categorical column {:?} has duplicate levels",
                            col.name
                        )));
                    }
                }
                ColumnKind::Numerical { min, max } => {
                    if !min.is_finite() || !max.is_finite() || min > max {
                        return Err(Error::input(format!(
                            "numerical column {:?} has invalid range [{min}, {max}]",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Encode one record's values (aligned with `columns`) into the flat
    /// attribute vector.
    pub fn encode(&self, values: &[AttrValue], unknown: UnknownLevel) -> Result<Vector> {
        if values.len() != self.columns.len() {
            return Err(Error::input(format!(
                "expected {} attribute values, got {}",
                self.columns.len(),
                values.len()
            )));
        }
        let mut out = Vec::with_capacity(self.encoded_width());
        for (col, value) in self.columns.iter().zip(values) {
            match (&col.kind, value) {
                (ColumnKind::Categorical { levels }, AttrValue::Text(level)) => {
                    match levels.iter().position(|l| l == level) {
                        Some(pos) => {
                            for i in 0..levels.len() {
                                out.push(if i == pos { 1.0 } else { 0.0 });
                            }
                        }
                        None => match unknown {
                            UnknownLevel::ZeroBlock => out.extend(vec![0.0; levels.len()]),
                            UnknownLevel::Reject => {
                                return Err(Error::input(format!(
                                    "unknown level {level:?} in column {:?}",
                                    col.name
                                )))
                            }
                        },
                    }
                }
                (ColumnKind::Categorical { .. }, AttrValue::Number(_)) => {
                    return Err(Error::input(format!(
                        "column {:?} is categorical but the value is a number",
                        col.name
                    )))
                }
                (ColumnKind::Numerical { min, max }, AttrValue::Number(v)) => {
                    if !v.is_finite() {
                        return Err(Error::input(format!(
                            "non-finite value in numerical column {:?}",
                            col.name
                        )));
                    }
                    if max > min {
                        out.push(((v - min) / (max - min)).clamp(0.0, 1.0));
                    } else {
                        // Constant column: carries no information, encode as 0.
                        out.push(0.0);
                    }
                }
                (ColumnKind::Numerical { .. }, AttrValue::Text(_)) => {
                    return Err(Error::input(format!(
                        "column {:?} is numerical but the value is a string",
                        col.name
                    )))
                }
            }
        }
        Ok(Vector::from_vec(out))
    }
}

/// One instance: attribute vector plus item sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedSequence {
    pub id: String,
    /// Raw cell values in schema column order; kept so datasets can be written
    /// back out unchanged.
    pub raw_attributes: Vec<AttrValue>,
    /// Encoded attribute vector of dimension u.
    pub attributes: Vector,
    /// Vocabulary indices, all < r.
    pub items: Vec<usize>,
    /// Ground truth read only by evaluation, never by training.
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocabulary: ItemVocabulary,
    pub schema: AttributeSchema,
    pub instances: Vec<AttributedSequence>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Encoded attribute dimension u.
    pub fn attribute_width(&self) -> usize {
        self.schema.encoded_width()
    }

    /// Labels for every instance, or an error naming the first unlabeled one.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.instances
            .iter()
            .map(|inst| {
                inst.label
                    .ok_or_else(|| Error::data_for_instance(inst.id.clone(), "missing label"))
            })
            .collect()
    }
}

/// Schema plus vocabulary, stored next to a dataset as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: AttributeSchema,
    pub vocabulary: ItemVocabulary,
}

pub fn save_sidecar(sidecar: &Sidecar, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, sidecar)
        .map_err(|e| Error::data(format!("cannot serialize sidecar: {e}")))?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

pub fn load_sidecar(path: &Path) -> Result<Sidecar> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::data(format!("invalid sidecar: {e}")))?;
    sidecar.schema.validate()?;
    Ok(sidecar)
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Schema and vocabulary to load against. `None` infers both from the
    /// whole file.
    pub sidecar: Option<Sidecar>,
    pub unknown_levels: UnknownLevel,
    /// Truncate longer sequences, keeping the earliest items.
    pub max_sequence_len: Option<usize>,
}

/// Wire form of one JSONL line.
#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    attributes: serde_json::Map<String, serde_json::Value>,
    sequence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

pub fn load_jsonl(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    if let Some(0) = opts.max_sequence_len {
        return Err(Error::config("max sequence length must be at least 1"));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut records: Vec<(usize, JsonRecord)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data_at_line(line_no, format!("malformed record: {e}")))?;
        records.push((line_no, record));
    }
    if records.is_empty() {
        return Err(Error::data("file contains no records"));
    }

    let (schema, vocabulary) = match &opts.sidecar {
        Some(sidecar) => {
            sidecar.schema.validate()?;
            (sidecar.schema.clone(), sidecar.vocabulary.clone())
        }
        None => infer_schema_and_vocabulary(&records)?,
    };

    let mut seen_ids = HashSet::new();
    let mut instances = Vec::with_capacity(records.len());
    for (line_no, record) in &records {
        if !seen_ids.insert(record.id.clone()) {
            return Err(Error::data_at_line(*line_no, format!("duplicate id {:?}", record.id)));
        }
        for name in record.attributes.keys() {
            if !schema.columns.iter().any(|c| &c.name == name) {
                return Err(Error::data_at_line(
                    *line_no,
                    format!("attribute column {name:?} not in schema"),
                ));
            }
        }
        let mut raw = Vec::with_capacity(schema.columns.len());
        for col in &schema.columns {
            let value = record.attributes.get(&col.name).ok_or_else(|| {
                Error::data_at_line(*line_no, format!("missing attribute column {:?}", col.name))
            })?;
            raw.push(attr_value_from_json(value, &col.name, *line_no)?);
        }
        let attributes = schema.encode(&raw, opts.unknown_levels).map_err(|e| match e {
            Error::InputDomain(msg) => Error::data_at_line(*line_no, msg),
            other => other,
        })?;

        if record.sequence.is_empty() {
            return Err(Error::data_for_instance(record.id.clone(), "sequence is empty"));
        }
        let mut items = Vec::with_capacity(record.sequence.len());
        for token in &record.sequence {
            let idx = vocabulary.index_of(token).ok_or_else(|| {
                Error::data_at_line(*line_no, format!("unknown item token {token:?}"))
            })?;
            items.push(idx);
        }
        if let Some(cap) = opts.max_sequence_len {
            items.truncate(cap);
        }

        let label = match &record.label {
            None => None,
            Some(text) => Some(Label::parse(text).ok_or_else(|| {
                Error::data_at_line(
                    *line_no,
                    format!("label must be \"inlier\" or \"outlier\", got {text:?}"),
                )
            })?),
        };

        instances.push(AttributedSequence {
            id: record.id.clone(),
            raw_attributes: raw,
            attributes,
            items,
            label,
        });
    }

    Ok(Dataset { vocabulary, schema, instances })
}

fn attr_value_from_json(
    value: &serde_json::Value,
    column: &str,
    line_no: usize,
) -> Result<AttrValue> {
    match value {
        serde_json::Value::String(s) => Ok(AttrValue::Text(s.clone())),
        serde_json::Value::Number(n) => n.as_f64().map(AttrValue::Number).ok_or_else(|| {
            Error::data_at_line(line_no, format!("unrepresentable number in column {column:?}"))
        }),
        other => Err(Error::data_at_line(
            line_no,
            format!("column {column:?} must be a string or number, got {other}"),
        )),
    }
}

enum ColumnDraft {
    Categorical(BTreeSet<String>),
    Numerical { min: f64, max: f64 },
}

fn infer_schema_and_vocabulary(
    records: &[(usize, JsonRecord)],
) -> Result<(AttributeSchema, ItemVocabulary)> {
    let mut drafts: BTreeMap<String, ColumnDraft> = BTreeMap::new();
    let mut tokens: BTreeSet<String> = BTreeSet::new();
    for (line_no, record) in records {
        for (name, value) in &record.attributes {
            let value = attr_value_from_json(value, name, *line_no)?;
            match (drafts.get_mut(name), value) {
                (None, AttrValue::Text(level)) => {
                    let mut levels = BTreeSet::new();
                    levels.insert(level);
                    drafts.insert(name.clone(), ColumnDraft::Categorical(levels));
                }
                (None, AttrValue::Number(v)) => {
                    drafts.insert(name.clone(), ColumnDraft::Numerical { min: v, max: v });
                }
                (Some(ColumnDraft::Categorical(levels)), AttrValue::Text(level)) => {
                    levels.insert(level);
                }
                (Some(ColumnDraft::Numerical { min, max }), AttrValue::Number(v)) => {
                    *min = min.min(v);
                    *max = max.max(v);
                }
                (Some(ColumnDraft::Categorical(_)), AttrValue::Number(_))
                | (Some(ColumnDraft::Numerical { .. }), AttrValue::Text(_)) => {
                    return Err(Error::data_at_line(
                        *line_no,
                        format!("column {name:?} mixes string and numeric values"),
                    ));
                }
            }
        }
        for token in &record.sequence {
            tokens.insert(token.clone());
        }
    }
    let columns = drafts
        .into_iter()
        .map(|(name, draft)| AttributeColumn {
            name,
            kind: match draft {
                ColumnDraft::Categorical(levels) => {
                    ColumnKind::Categorical { levels: levels.into_iter().collect() }
                }
                ColumnDraft::Numerical { min, max } => ColumnKind::Numerical { min, max },
            },
        })
        .collect();
    let vocabulary = ItemVocabulary::new(tokens.into_iter().collect())?;
    Ok((AttributeSchema { columns }, vocabulary))
}

pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    for inst in &dataset.instances {
        let mut attributes = serde_json::Map::new();
        for (col, value) in dataset.schema.columns.iter().zip(&inst.raw_attributes) {
            let json = match value {
                AttrValue::Text(s) => serde_json::Value::String(s.clone()),
                AttrValue::Number(v) => serde_json::Number::from_f64(*v)
                    .map(serde_json::Value::Number)
                    .ok_or_else(|| {
                        Error::data_for_instance(inst.id.clone(), "non-finite attribute value")
                    })?,
            };
            attributes.insert(col.name.clone(), json);
        }
        let sequence = inst
            .items
            .iter()
            .map(|&idx| {
                dataset.vocabulary.token(idx).map(str::to_owned).ok_or_else(|| {
                    Error::data_for_instance(inst.id.clone(), format!("item index {idx} out of range"))
                })
            })
            .collect::<Result<Vec<String>>>()?;
        let record = JsonRecord {
            id: inst.id.clone(),
            attributes,
            sequence,
            label: inst.label.map(|l| l.as_str().to_owned()),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::data(format!("cannot serialize record: {e}")))?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// Where sequences start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    /// Every sequence starts at item 0 regardless of regime, so the first item
    /// never identifies the regime on its own.
    Shared,
    /// Uniformly random start item.
    Uniform,
}

/// Synthetic benchmark with planted cross-dependency outliers.
///
/// Each inlier belongs to a regime that fixes both its attribute distribution
/// and its item-transition grammar. Outliers pair one regime's attributes with
/// the next regime's grammar (outlier j crosses regime j mod R with grammar
/// j+1 mod R), so neither the attributes alone nor the sequence alone marks
/// them; only the pairing is wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub inliers: usize,
    /// Outlier count = round(inliers × fraction); must lie in (0, 0.5).
    pub outlier_fraction: f64,
    pub regimes: usize,
    pub vocab_size: usize,
    /// Numerical columns whose center depends on the regime.
    pub informative_attrs: usize,
    /// Numerical columns drawn uniformly regardless of regime.
    pub nuisance_attrs: usize,
    /// Levels of one regime-independent categorical column; 0 omits it.
    pub nuisance_levels: usize,
    /// Half-width of the uniform noise around each informative center.
    pub attr_noise: f64,
    /// Probability that a step ignores the grammar and jumps uniformly.
    pub transition_noise: f64,
    pub start_mode: StartMode,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            inliers: 1000,
            outlier_fraction: 0.02,
            regimes: 2,
            vocab_size: 10,
            informative_attrs: 2,
            nuisance_attrs: 5,
            nuisance_levels: 6,
            attr_noise: 0.08,
            transition_noise: 0.05,
            start_mode: StartMode::Uniform,
            min_len: 4,
            max_len: 12,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inliers < self.regimes {
            return Err(Error::config("need at least one inlier per regime"));
        }
        if !(self.outlier_fraction > 0.0 && self.outlier_fraction < 0.5) {
            return Err(Error::config(format!(
                "outlier fraction must lie in (0, 0.5), got {}",
                self.outlier_fraction
            )));
        }
        if self.regimes < 2 {
            return Err(Error::config("need at least 2 regimes to plant crossed outliers"));
        }
        if self.vocab_size < self.regimes {
            return Err(Error::config(
                "vocabulary must be at least as large as the regime count so grammars stay distinct",
            ));
        }
        if self.informative_attrs == 0 {
            return Err(Error::config("need at least one informative attribute column"));
        }
        if self.nuisance_levels == 1 {
            return Err(Error::config("a categorical column needs 0 or at least 2 levels"));
        }
        if !(self.attr_noise >= 0.0 && self.attr_noise.is_finite()) {
            return Err(Error::config("attribute noise must be a finite non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.transition_noise) {
            return Err(Error::config("transition noise must lie in [0, 1]"));
        }
        if self.min_len < 1 || self.max_len < self.min_len {
            return Err(Error::config("sequence length range must satisfy 1 <= min <= max"));
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        (self.inliers as f64 * self.outlier_fraction).round() as usize
    }
}

fn zero_padded(prefix: &str, idx: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len();
    format!("{prefix}{idx:0width$}")
}

/// Deterministic successor tables: regime g maps item i to (base[i] + g) mod r,
/// where base is one random permutation. Any two regimes then disagree on the
/// successor of every single item, and every regime's table stays a bijection,
/// so walks keep covering the whole vocabulary instead of collapsing into a
/// short cycle.
fn build_grammars(config: &SyntheticConfig, rng: &mut RandomSource) -> Vec<Vec<usize>> {
    let r = config.vocab_size;
    let mut base: Vec<usize> = (0..r).collect();
    rng.shuffle(&mut base);
    (0..config.regimes)
        .map(|g| base.iter().map(|&s| (s + g) % r).collect())
        .collect()
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = RandomSource::new(config.seed);
    let r = config.vocab_size;

    let tokens: Vec<String> = (0..r).map(|i| zero_padded("i", i, r)).collect();
    let vocabulary = ItemVocabulary::new(tokens)?;

    // Column names are chosen so that lexicographic order (what schema
    // inference produces) matches construction order.
    let mut columns = Vec::new();
    for j in 0..config.nuisance_attrs {
        columns.push(AttributeColumn {
            name: zero_padded("bg", j, config.nuisance_attrs),
            kind: ColumnKind::Numerical { min: 0.0, max: 1.0 },
        });
    }
    if config.nuisance_levels > 0 {
        columns.push(AttributeColumn {
            name: "channel".to_owned(),
            kind: ColumnKind::Categorical {
                levels: (0..config.nuisance_levels)
                    .map(|l| zero_padded("ch", l, config.nuisance_levels))
                    .collect(),
            },
        });
    }
    for j in 0..config.informative_attrs {
        columns.push(AttributeColumn {
            name: zero_padded("sig", j, config.informative_attrs),
            kind: ColumnKind::Numerical { min: 0.0, max: 1.0 },
        });
    }
    columns.sort_by(|a, b| a.name.cmp(&b.name));
    let schema = AttributeSchema { columns };

    let grammars = build_grammars(config, &mut rng);
    let outliers = config.outlier_count();
    let total = config.inliers + outliers;
    let mut instances = Vec::with_capacity(total);

    for i in 0..total {
        let (attr_regime, grammar_regime, label) = if i < config.inliers {
            let regime = i % config.regimes;
            (regime, regime, Label::Inlier)
        } else {
            // Crossed: one regime's attributes with the next regime's grammar.
            let regime = (i - config.inliers) % config.regimes;
            (regime, (regime + 1) % config.regimes, Label::Outlier)
        };

        let mut raw = Vec::with_capacity(schema.columns.len());
        for col in &schema.columns {
            let value = match &col.kind {
                ColumnKind::Categorical { levels } => {
                    AttrValue::Text(levels[rng.index(levels.len())].clone())
                }
                ColumnKind::Numerical { .. } => {
                    if col.name.starts_with("sig") {
                        let center =
                            (attr_regime as f64 + 1.0) / (config.regimes as f64 + 1.0);
                        let noise = if config.attr_noise > 0.0 {
                            rng.uniform(-config.attr_noise, config.attr_noise)
                        } else {
                            0.0
                        };
                        AttrValue::Number((center + noise).clamp(0.0, 1.0))
                    } else {
                        AttrValue::Number(rng.uniform(0.0, 1.0))
                    }
                }
            };
            raw.push(value);
        }
        let attributes = schema.encode(&raw, UnknownLevel::Reject)?;

        let len = config.min_len + rng.index(config.max_len - config.min_len + 1);
        let grammar = &grammars[grammar_regime];
        let mut items = Vec::with_capacity(len);
        let start = match config.start_mode {
            StartMode::Shared => 0,
            StartMode::Uniform => rng.index(r),
        };
        items.push(start);
        for _ in 1..len {
            let prev = *items.last().unwrap();
            let next = if config.transition_noise > 0.0 && rng.chance(config.transition_noise) {
                rng.index(r)
            } else {
                grammar[prev]
            };
            items.push(next);
        }

        instances.push(AttributedSequence {
            id: zero_padded("s", i, total),
            raw_attributes: raw,
            attributes,
            items,
            label: Some(label),
        });
    }

    Ok(Dataset { vocabulary, schema, instances })
}
