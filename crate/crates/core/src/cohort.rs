//! Cohort ingestion and preprocessing.
//!
//! Turns longitudinal clinical CSVs into the imputed, one-hot-encoded,
//! min-max-normalized design matrix consumed by the factorization and
//! prediction stages. All steps are pure functions of their inputs and keep
//! enough fitted state (fill values, token lists, per-column min/max) to
//! transform held-out cohorts with training statistics.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const VALID_VISIT_MONTHS: [u32; 4] = [0, 12, 24, 48];

/// Clinical stage labels. CSV tokens are `CN`, `MCI`, `AD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Diagnosis {
    Control,
    Mci,
    Dementia,
}

impl Diagnosis {
    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "CN" => Some(Diagnosis::Control),
            "MCI" => Some(Diagnosis::Mci),
            "AD" => Some(Diagnosis::Dementia),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Diagnosis::Control => "CN",
            Diagnosis::Mci => "MCI",
            Diagnosis::Dementia => "AD",
        }
    }

    /// Ordering from least to most impaired, used to detect reversions.
    pub fn severity(self) -> u8 {
        match self {
            Diagnosis::Control => 0,
            Diagnosis::Mci => 1,
            Diagnosis::Dementia => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    F,
    M,
}

impl Sex {
    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "F" => Some(Sex::F),
            "M" => Some(Sex::M),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Sex::F => "F",
            Sex::M => "M",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureGroup {
    Memory,
    Cognition,
    Function,
    Other,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Memory,
        FeatureGroup::Cognition,
        FeatureGroup::Function,
        FeatureGroup::Other,
    ];

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "memory" => Some(FeatureGroup::Memory),
            "cognition" => Some(FeatureGroup::Cognition),
            "function" => Some(FeatureGroup::Function),
            "other" => Some(FeatureGroup::Other),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            FeatureGroup::Memory => "memory",
            FeatureGroup::Cognition => "cognition",
            FeatureGroup::Function => "function",
            FeatureGroup::Other => "other",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl ColumnKind {
    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "numeric" => Some(ColumnKind::Numeric),
            "categorical" => Some(ColumnKind::Categorical),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
        }
    }
}

/// One feature column of the cohort schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnDescriptor {
    pub name: String,
    pub kind: ColumnKind,
    pub group: FeatureGroup,
}

/// A raw feature cell: numeric, categorical token, or missing.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl RawValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, RawValue::Missing)
    }
}

/// One subject-visit row of labeled clinical measurements.
#[derive(Debug, Clone)]
pub struct ClinicalRecord {
    pub subject_id: String,
    pub visit_month: u32,
    pub diagnosis: Diagnosis,
    pub age: f64,
    pub sex: Sex,
    pub apoe4_count: Option<u8>,
    pub features: Vec<RawValue>,
}

/// Schema plus records; every record conforms to the schema and
/// (subject_id, visit_month) pairs are unique.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub schema: Vec<ColumnDescriptor>,
    pub records: Vec<ClinicalRecord>,
}

impl Cohort {
    pub fn new(schema: Vec<ColumnDescriptor>, records: Vec<ClinicalRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for rec in &records {
            if rec.features.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "record ({}, m{}) has {} features, schema has {}",
                    rec.subject_id,
                    rec.visit_month,
                    rec.features.len(),
                    schema.len()
                )));
            }
            if !VALID_VISIT_MONTHS.contains(&rec.visit_month) {
                return Err(Error::Schema(format!(
                    "record ({}, m{}) has an invalid visit month",
                    rec.subject_id, rec.visit_month
                )));
            }
            if !seen.insert((rec.subject_id.clone(), rec.visit_month)) {
                return Err(Error::Integrity(format!(
                    "duplicate (subject, visit) pair ({}, {})",
                    rec.subject_id, rec.visit_month
                )));
            }
        }
        Ok(Cohort { schema, records })
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    /// Subject ids in order of first appearance.
    pub fn subject_order(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for rec in &self.records {
            if seen.insert(rec.subject_id.as_str()) {
                out.push(rec.subject_id.clone());
            }
        }
        out
    }

    /// Index of records by (subject, visit month).
    fn visit_index(&self) -> HashMap<(&str, u32), usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.subject_id.as_str(), r.visit_month), i))
            .collect()
    }
}

const META_COLUMNS: [&str; 6] = ["subject_id", "visit_month", "diagnosis", "age", "sex", "apoe4"];

/// Read a schema sidecar: one `column_name,kind,feature_group` line per feature.
pub fn load_schema(path: &Path) -> Result<Vec<ColumnDescriptor>> {
    let text = std::fs::read_to_string(path)?;
    parse_schema(&text)
}

pub fn parse_schema(text: &str) -> Result<Vec<ColumnDescriptor>> {
    let mut schema = Vec::new();
    let mut names = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected `name,kind,group`, got `{line}`"),
            });
        }
        let kind = ColumnKind::from_token(parts[1]).ok_or_else(|| Error::Schema(format!(
            "unknown column kind `{}` for column `{}`",
            parts[1], parts[0]
        )))?;
        let group = FeatureGroup::from_token(parts[2]).ok_or_else(|| Error::Schema(format!(
            "unknown feature group `{}` for column `{}`",
            parts[2], parts[0]
        )))?;
        if !names.insert(parts[0].to_string()) {
            return Err(Error::Schema(format!("duplicate column name `{}`", parts[0])));
        }
        schema.push(ColumnDescriptor { name: parts[0].to_string(), kind, group });
    }
    if schema.is_empty() {
        return Err(Error::Schema("schema has no feature columns".into()));
    }
    Ok(schema)
}

pub fn write_schema(schema: &[ColumnDescriptor], path: &Path) -> Result<()> {
    let mut out = String::new();
    for col in schema {
        out.push_str(&format!("{},{},{}\n", col.name, col.kind.token(), col.group.token()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a cohort CSV against a known schema.
///
/// The file must carry a header starting with
/// `subject_id,visit_month,diagnosis,age,sex,apoe4` followed by the schema's
/// feature columns in order. Empty cells become missing markers.
pub fn load_cohort(path: &Path, schema: &[ColumnDescriptor]) -> Result<Cohort> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;

    let headers = reader.headers().map_err(csv_err)?.clone();
    let expected = META_COLUMNS.len() + schema.len();
    if headers.len() != expected {
        return Err(Error::Schema(format!(
            "header has {} columns, expected {} (6 metadata + {} features)",
            headers.len(),
            expected,
            schema.len()
        )));
    }
    for (i, want) in META_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(*want) {
            return Err(Error::Schema(format!(
                "header column {} is `{}`, expected `{}`",
                i + 1,
                headers.get(i).unwrap_or(""),
                want
            )));
        }
    }
    for (i, col) in schema.iter().enumerate() {
        let got = headers.get(META_COLUMNS.len() + i).unwrap_or("");
        if got != col.name {
            return Err(Error::Schema(format!(
                "feature column {} is `{}`, schema expects `{}`",
                i + 1,
                got,
                col.name
            )));
        }
    }

    let mut records = Vec::new();
    for (row_idx, rec) in reader.records().enumerate() {
        let line = row_idx + 2; // 1-based, after the header
        let rec = rec.map_err(csv_err)?;
        if rec.len() != expected {
            return Err(Error::Parse {
                line,
                msg: format!("row has {} fields, expected {}", rec.len(), expected),
            });
        }
        records.push(parse_record(&rec, schema, line)?);
    }
    Cohort::new(schema.to_vec(), records)
}

fn csv_err(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(e.to_string())),
        _ => Error::Parse { line: e.position().map(|p| p.line() as usize).unwrap_or(0), msg: e.to_string() },
    }
}

fn parse_record(rec: &csv::StringRecord, schema: &[ColumnDescriptor], line: usize) -> Result<ClinicalRecord> {
    let field = |i: usize| rec.get(i).unwrap_or("").trim();

    let subject_id = field(0).to_string();
    if subject_id.is_empty() {
        return Err(Error::Parse { line, msg: "empty subject_id".into() });
    }
    let visit_month: u32 = field(1)
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("bad visit_month `{}`", field(1)) })?;
    if !VALID_VISIT_MONTHS.contains(&visit_month) {
        return Err(Error::Parse { line, msg: format!("visit_month {visit_month} not in {{0,12,24,48}}") });
    }
    let diagnosis = Diagnosis::from_token(field(2))
        .ok_or_else(|| Error::Schema(format!("unknown diagnosis token `{}` at line {line}", field(2))))?;
    let age: f64 = field(3)
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("bad age `{}`", field(3)) })?;
    if !(age > 0.0) {
        return Err(Error::Parse { line, msg: format!("age must be positive, got {age}") });
    }
    let sex = Sex::from_token(field(4))
        .ok_or_else(|| Error::Parse { line, msg: format!("bad sex token `{}`", field(4)) })?;
    let apoe4_count = match field(5) {
        "" => None,
        s => {
            let v: u8 = s
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("bad apoe4 `{s}`") })?;
            if v > 2 {
                return Err(Error::Parse { line, msg: format!("apoe4 count {v} not in {{0,1,2}}") });
            }
            Some(v)
        }
    };

    let mut features = Vec::with_capacity(schema.len());
    for (j, col) in schema.iter().enumerate() {
        let cell = field(META_COLUMNS.len() + j);
        if cell.is_empty() {
            features.push(RawValue::Missing);
            continue;
        }
        match col.kind {
            ColumnKind::Numeric => {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad numeric value `{cell}` in column `{}`", col.name),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("non-finite value in column `{}`", col.name),
                    });
                }
                features.push(RawValue::Numeric(v));
            }
            ColumnKind::Categorical => features.push(RawValue::Categorical(cell.to_string())),
        }
    }

    Ok(ClinicalRecord { subject_id, visit_month, diagnosis, age, sex, apoe4_count, features })
}

/// Write a cohort in the exact input format (`load_cohort` round-trips it).
pub fn write_cohort_csv(cohort: &Cohort, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&META_COLUMNS.join(","));
    for col in &cohort.schema {
        out.push(',');
        out.push_str(&col.name);
    }
    out.push('\n');
    for rec in &cohort.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            rec.subject_id,
            rec.visit_month,
            rec.diagnosis.token(),
            rec.age,
            rec.sex.token(),
            rec.apoe4_count.map(|v| v.to_string()).unwrap_or_default()
        ));
        for val in &rec.features {
            out.push(',');
            match val {
                RawValue::Numeric(v) => out.push_str(&format!("{v}")),
                RawValue::Categorical(t) => out.push_str(t),
                RawValue::Missing => {}
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// A diagnosis that improved between two consecutive visits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reversion {
    pub subject_id: String,
    pub from: Diagnosis,
    pub to: Diagnosis,
    /// Visit month at which the improved diagnosis was observed.
    pub month: u32,
}

/// Find subjects whose diagnosis improves between consecutive visits.
pub fn detect_reversions(cohort: &Cohort) -> Vec<Reversion> {
    let mut out = Vec::new();
    for subject in cohort.subject_order() {
        let mut visits: Vec<(u32, Diagnosis)> = cohort
            .records
            .iter()
            .filter(|r| r.subject_id == subject)
            .map(|r| (r.visit_month, r.diagnosis))
            .collect();
        visits.sort_by_key(|(m, _)| *m);
        for pair in visits.windows(2) {
            if pair[1].1.severity() < pair[0].1.severity() {
                out.push(Reversion {
                    subject_id: subject.clone(),
                    from: pair[0].1,
                    to: pair[1].1,
                    month: pair[1].0,
                });
            }
        }
    }
    out
}

/// Imputation policy. Only median/mode is implemented: numeric columns take
/// the column median over observed values, categorical columns the most
/// frequent token with ties broken by token sort order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputePolicy {
    MedianMode,
}

/// Fitted per-column fill values.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputePlan {
    pub fills: Vec<RawValue>,
}

/// Compute median/mode fill values over the observed cells of each column.
pub fn impute_plan(cohort: &Cohort) -> Result<ImputePlan> {
    if cohort.records.is_empty() {
        return Err(Error::EmptyDesign("cannot impute an empty cohort".into()));
    }
    let mut fills = Vec::with_capacity(cohort.schema.len());
    for (j, col) in cohort.schema.iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => {
                let mut observed: Vec<f64> = cohort
                    .records
                    .iter()
                    .filter_map(|r| match &r.features[j] {
                        RawValue::Numeric(v) => Some(*v),
                        _ => None,
                    })
                    .collect();
                if observed.is_empty() {
                    return Err(Error::EmptyColumn(col.name.clone()));
                }
                observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
                fills.push(RawValue::Numeric(median_sorted(&observed)));
            }
            ColumnKind::Categorical => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for r in &cohort.records {
                    if let RawValue::Categorical(t) = &r.features[j] {
                        *counts.entry(t.as_str()).or_insert(0) += 1;
                    }
                }
                if counts.is_empty() {
                    return Err(Error::EmptyColumn(col.name.clone()));
                }
                // Most frequent token; ties go to the smaller token in sort order.
                let mode = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                    .map(|(t, _)| t.to_string())
                    .unwrap();
                fills.push(RawValue::Categorical(mode));
            }
        }
    }
    Ok(ImputePlan { fills })
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Replace missing cells using a fitted plan.
pub fn apply_impute(cohort: &Cohort, plan: &ImputePlan) -> Result<Cohort> {
    if plan.fills.len() != cohort.schema.len() {
        return Err(Error::Shape(format!(
            "impute plan covers {} columns, cohort has {}",
            plan.fills.len(),
            cohort.schema.len()
        )));
    }
    let mut out = cohort.clone();
    for rec in &mut out.records {
        for (j, val) in rec.features.iter_mut().enumerate() {
            if val.is_missing() {
                *val = plan.fills[j].clone();
            }
        }
    }
    Ok(out)
}

/// Fill every missing feature cell using column medians/modes computed over
/// the full cohort.
pub fn impute(cohort: &Cohort, policy: ImputePolicy) -> Result<Cohort> {
    let ImputePolicy::MedianMode = policy;
    let plan = impute_plan(cohort)?;
    apply_impute(cohort, &plan)
}

/// Token lists fitted for one-hot encoding, per source column (None for
/// numeric pass-through columns). Token order is sort order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMap {
    pub tokens: Vec<Option<Vec<String>>>,
}

/// Collect the distinct observed tokens of each categorical column.
pub fn encoding_map(cohort: &Cohort) -> Result<EncodingMap> {
    let mut tokens = Vec::with_capacity(cohort.schema.len());
    for (j, col) in cohort.schema.iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => tokens.push(None),
            ColumnKind::Categorical => {
                let mut set = BTreeSet::new();
                for r in &cohort.records {
                    match &r.features[j] {
                        RawValue::Categorical(t) => {
                            set.insert(t.clone());
                        }
                        RawValue::Missing => {
                            return Err(Error::Schema(format!(
                                "column `{}` still has missing values; impute before encoding",
                                col.name
                            )))
                        }
                        RawValue::Numeric(_) => {
                            return Err(Error::Schema(format!(
                                "numeric value in categorical column `{}`",
                                col.name
                            )))
                        }
                    }
                }
                tokens.push(Some(set.into_iter().collect()));
            }
        }
    }
    Ok(EncodingMap { tokens })
}

/// Expanded schema implied by an encoding map.
pub fn encoded_schema(schema: &[ColumnDescriptor], map: &EncodingMap) -> Vec<ColumnDescriptor> {
    let mut out = Vec::new();
    for (col, toks) in schema.iter().zip(&map.tokens) {
        match toks {
            None => out.push(col.clone()),
            Some(list) => {
                for t in list {
                    out.push(ColumnDescriptor {
                        name: format!("{}={}", col.name, t),
                        kind: ColumnKind::Numeric,
                        group: col.group,
                    });
                }
            }
        }
    }
    out
}

/// Apply a fitted encoding: each categorical column becomes 0/1 indicator
/// columns in token sort order. Tokens unseen at fit time map to all-zero
/// indicators.
pub fn apply_encoding(cohort: &Cohort, map: &EncodingMap) -> Result<Cohort> {
    if map.tokens.len() != cohort.schema.len() {
        return Err(Error::Shape(format!(
            "encoding map covers {} columns, cohort has {}",
            map.tokens.len(),
            cohort.schema.len()
        )));
    }
    let new_schema = encoded_schema(&cohort.schema, map);
    let mut records = Vec::with_capacity(cohort.records.len());
    for rec in &cohort.records {
        let mut features = Vec::with_capacity(new_schema.len());
        for (j, toks) in map.tokens.iter().enumerate() {
            match toks {
                None => match &rec.features[j] {
                    RawValue::Numeric(v) => features.push(RawValue::Numeric(*v)),
                    RawValue::Missing => {
                        return Err(Error::Schema(format!(
                            "column `{}` still has missing values; impute before encoding",
                            cohort.schema[j].name
                        )))
                    }
                    RawValue::Categorical(_) => {
                        return Err(Error::Schema(format!(
                            "categorical value in numeric column `{}`",
                            cohort.schema[j].name
                        )))
                    }
                },
                Some(list) => {
                    let tok = match &rec.features[j] {
                        RawValue::Categorical(t) => t.as_str(),
                        RawValue::Missing => {
                            return Err(Error::Schema(format!(
                                "column `{}` still has missing values; impute before encoding",
                                cohort.schema[j].name
                            )))
                        }
                        RawValue::Numeric(_) => {
                            return Err(Error::Schema(format!(
                                "numeric value in categorical column `{}`",
                                cohort.schema[j].name
                            )))
                        }
                    };
                    for t in list {
                        features.push(RawValue::Numeric(if t == tok { 1.0 } else { 0.0 }));
                    }
                }
            }
        }
        let mut new_rec = rec.clone();
        new_rec.features = features;
        records.push(new_rec);
    }
    Ok(Cohort { schema: new_schema, records })
}

/// One-hot encode every categorical column of a fully imputed cohort.
pub fn one_hot_encode(cohort: &Cohort) -> Result<(Cohort, EncodingMap)> {
    let map = encoding_map(cohort)?;
    let encoded = apply_encoding(cohort, &map)?;
    Ok((encoded, map))
}

/// Per-column training statistics for min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
}

/// Map each column by `x' = (x - min) / (max - min)`. Constant columns map
/// to all-zero so column indices stay stable.
pub fn min_max_normalize(values: &Array2<f64>) -> Result<(Array2<f64>, Vec<ColumnStats>)> {
    let (n, d) = values.dim();
    if n == 0 {
        return Err(Error::Domain("min-max normalization needs at least one row".into()));
    }
    for ((i, j), v) in values.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    let mut stats = Vec::with_capacity(d);
    for j in 0..d {
        let col = values.column(j);
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        stats.push(ColumnStats { min, max });
    }
    let normalized = apply_min_max_unchecked(values, &stats);
    Ok((normalized, stats))
}

/// Transform held-out rows with training statistics, clamped to [0, 1].
pub fn apply_min_max(values: &Array2<f64>, stats: &[ColumnStats]) -> Result<Array2<f64>> {
    if values.ncols() != stats.len() {
        return Err(Error::Shape(format!(
            "matrix has {} columns, stats cover {}",
            values.ncols(),
            stats.len()
        )));
    }
    for ((i, j), v) in values.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    Ok(apply_min_max_unchecked(values, stats))
}

fn apply_min_max_unchecked(values: &Array2<f64>, stats: &[ColumnStats]) -> Array2<f64> {
    let mut out = values.clone();
    for (j, st) in stats.iter().enumerate() {
        let range = st.max - st.min;
        for v in out.column_mut(j) {
            *v = if range > 0.0 { ((*v - st.min) / range).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    out
}

/// Per-row metadata of the design matrix.
#[derive(Debug, Clone)]
pub struct RowMeta {
    pub subject_id: String,
    /// Diagnosis at the prediction horizon; None when the horizon visit is
    /// absent (prediction-time cohorts).
    pub diagnosis: Option<Diagnosis>,
    pub apoe4_count: Option<u8>,
    pub age: f64,
}

/// Per-column metadata of the design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMeta {
    /// Final column name, e.g. `adas13_m12` or `marital=widowed_m0`.
    pub name: String,
    /// Source column of the cohort schema.
    pub source: String,
    pub group: FeatureGroup,
    pub visit_month: u32,
}

/// The non-negative, normalized design matrix with its metadata and the
/// training min/max statistics needed to place held-out samples.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub row_meta: Vec<RowMeta>,
    pub col_meta: Vec<ColMeta>,
    pub col_stats: Vec<ColumnStats>,
}

impl FeatureMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }
}

fn raw_design(
    cohort: &Cohort,
    input_months: [u32; 2],
    horizon: Option<u32>,
) -> Result<(Array2<f64>, Vec<RowMeta>, Vec<ColMeta>)> {
    let d0 = cohort.schema.len();
    let index = cohort.visit_index();

    let mut col_meta = Vec::with_capacity(2 * d0);
    for &month in &input_months {
        for col in &cohort.schema {
            if col.kind != ColumnKind::Numeric {
                return Err(Error::Schema(format!(
                    "column `{}` is categorical; encode before assembling the design",
                    col.name
                )));
            }
            col_meta.push(ColMeta {
                name: format!("{}_m{}", col.name, month),
                source: col.name.clone(),
                group: col.group,
                visit_month: month,
            });
        }
    }

    let mut rows = Vec::new();
    let mut row_meta = Vec::new();
    for subject in cohort.subject_order() {
        let visits: Option<Vec<usize>> = input_months
            .iter()
            .map(|m| index.get(&(subject.as_str(), *m)).copied())
            .collect();
        let Some(visits) = visits else { continue };
        let horizon_diag = match horizon {
            Some(h) => match index.get(&(subject.as_str(), h)) {
                Some(&i) => Some(cohort.records[i].diagnosis),
                None => continue, // not eligible: no diagnosis at the horizon
            },
            None => None,
        };
        let baseline = &cohort.records[visits[0]];
        let mut row = Vec::with_capacity(2 * d0);
        for &ri in &visits {
            for val in &cohort.records[ri].features {
                match val {
                    RawValue::Numeric(v) => row.push(*v),
                    _ => {
                        return Err(Error::Schema(format!(
                            "subject {} has a non-numeric cell; impute and encode first",
                            subject
                        )))
                    }
                }
            }
        }
        let apoe4 = visits
            .iter()
            .filter_map(|&ri| cohort.records[ri].apoe4_count)
            .next();
        row_meta.push(RowMeta {
            subject_id: subject.clone(),
            diagnosis: horizon_diag,
            apoe4_count: apoe4,
            age: baseline.age,
        });
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::EmptyDesign(format!(
            "no subject has visits at months {:?}{}",
            input_months,
            horizon.map(|h| format!(" and a diagnosis at month {h}")).unwrap_or_default()
        )));
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((n, 2 * d0), flat)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok((values, row_meta, col_meta))
}

/// Build the normalized design matrix: one row per subject possessing both
/// input visits and a diagnosis at the horizon, columns the concatenation of
/// the two visits' encoded features.
pub fn assemble_design(cohort: &Cohort, input_months: [u32; 2], horizon: u32) -> Result<FeatureMatrix> {
    let (raw, row_meta, col_meta) = raw_design(cohort, input_months, Some(horizon))?;
    let (values, col_stats) = min_max_normalize(&raw)?;
    Ok(FeatureMatrix { values, row_meta, col_meta, col_stats })
}

/// All fitted preprocessing state: schema, fill values, token lists, input
/// months/horizon, and design-column min/max. Enough to rebuild the training
/// design bit-for-bit and to transform held-out cohorts.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub schema: Vec<ColumnDescriptor>,
    pub plan: ImputePlan,
    pub encoding: EncodingMap,
    pub input_months: [u32; 2],
    pub horizon: u32,
    pub col_meta: Vec<ColMeta>,
    pub col_stats: Vec<ColumnStats>,
}

impl Preprocessor {
    /// Fit on a training cohort and return the training design.
    pub fn fit(cohort: &Cohort, input_months: [u32; 2], horizon: u32) -> Result<(Preprocessor, FeatureMatrix)> {
        let plan = impute_plan(cohort)?;
        let imputed = apply_impute(cohort, &plan)?;
        let (encoded, encoding) = one_hot_encode(&imputed)?;
        let design = assemble_design(&encoded, input_months, horizon)?;
        let pre = Preprocessor {
            schema: cohort.schema.clone(),
            plan,
            encoding,
            input_months,
            horizon,
            col_meta: design.col_meta.clone(),
            col_stats: design.col_stats.clone(),
        };
        Ok((pre, design))
    }

    /// Transform a cohort with the stored training statistics. Rows need both
    /// input visits; the horizon visit is optional and only fills row
    /// metadata. Values are clamped to [0, 1].
    pub fn transform(&self, cohort: &Cohort) -> Result<FeatureMatrix> {
        if cohort.schema != self.schema {
            return Err(Error::Schema(
                "cohort schema does not match the training manifest".into(),
            ));
        }
        let imputed = apply_impute(cohort, &self.plan)?;
        let encoded = apply_encoding(&imputed, &self.encoding)?;
        let (raw, mut row_meta, col_meta) = raw_design(&encoded, self.input_months, None)?;
        if col_meta != self.col_meta {
            return Err(Error::Schema(
                "encoded design columns do not match the training manifest".into(),
            ));
        }
        let values = apply_min_max(&raw, &self.col_stats)?;
        // Fill horizon diagnoses where that visit exists.
        let index = cohort.visit_index();
        for meta in &mut row_meta {
            meta.diagnosis = index
                .get(&(meta.subject_id.as_str(), self.horizon))
                .map(|&i| cohort.records[i].diagnosis);
        }
        Ok(FeatureMatrix { values, row_meta, col_meta, col_stats: self.col_stats.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema3() -> Vec<ColumnDescriptor> {
        vec![
            ColumnDescriptor { name: "mem1".into(), kind: ColumnKind::Numeric, group: FeatureGroup::Memory },
            ColumnDescriptor { name: "cog1".into(), kind: ColumnKind::Numeric, group: FeatureGroup::Cognition },
            ColumnDescriptor { name: "marital".into(), kind: ColumnKind::Categorical, group: FeatureGroup::Other },
        ]
    }

    fn record(id: &str, month: u32, diag: Diagnosis, features: Vec<RawValue>) -> ClinicalRecord {
        ClinicalRecord {
            subject_id: id.into(),
            visit_month: month,
            diagnosis: diag,
            age: 72.0,
            sex: Sex::F,
            apoe4_count: Some(1),
            features,
        }
    }

    fn num(v: f64) -> RawValue {
        RawValue::Numeric(v)
    }

    fn cat(t: &str) -> RawValue {
        RawValue::Categorical(t.into())
    }

    #[test]
    fn load_cohort_parses_rows_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("c.csv");
        std::fs::write(
            &csv_path,
            "subject_id,visit_month,diagnosis,age,sex,apoe4,mem1,cog1,marital\n\
             s1,0,CN,71.5,F,0,1.0,2.0,married\n\
             s1,12,MCI,71.5,F,0,1.5,,widowed\n\
             s2,0,AD,80.25,M,2,3.0,4.0,married\n",
        )
        .unwrap();
        let cohort = load_cohort(&csv_path, &schema3()).unwrap();
        assert_eq!(cohort.n_records(), 3);
        assert_eq!(cohort.records[0].subject_id, "s1");
        assert_eq!(cohort.records[2].diagnosis, Diagnosis::Dementia);
        // empty numeric cell becomes a missing marker, never zero
        assert!(cohort.records[1].features[1].is_missing());
        assert_eq!(cohort.records[1].features[0], num(1.5));
    }

    #[test]
    fn load_cohort_rejects_duplicates_and_bad_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("c.csv");
        std::fs::write(
            &csv_path,
            "subject_id,visit_month,diagnosis,age,sex,apoe4,mem1,cog1,marital\n\
             s1,0,CN,71.5,F,0,1.0,2.0,married\n\
             s1,0,CN,71.5,F,0,1.0,2.0,married\n",
        )
        .unwrap();
        let err = load_cohort(&csv_path, &schema3()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");

        std::fs::write(
            &csv_path,
            "subject_id,visit_month,diagnosis,age,sex,apoe4,mem1,cog1,marital\n\
             s1,0,DEMENTED,71.5,F,0,1.0,2.0,married\n",
        )
        .unwrap();
        let err = load_cohort(&csv_path, &schema3()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");

        std::fs::write(
            &csv_path,
            "subject_id,visit_month,diagnosis,age,sex,apoe4,mem1,cog1,marital\n\
             s1,0,CN,71.5,F,0,1.0,2.0\n",
        )
        .unwrap();
        let err = load_cohort(&csv_path, &schema3()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn impute_fills_median_and_mode() {
        let schema = schema3();
        let cohort = Cohort::new(
            schema,
            vec![
                record("a", 0, Diagnosis::Control, vec![num(1.0), num(5.0), cat("x")]),
                record("b", 0, Diagnosis::Control, vec![RawValue::Missing, num(7.0), cat("x")]),
                record("c", 0, Diagnosis::Control, vec![num(3.0), num(9.0), RawValue::Missing]),
                record("d", 0, Diagnosis::Control, vec![num(4.0), num(11.0), cat("y")]),
            ],
        )
        .unwrap();
        let imputed = impute(&cohort, ImputePolicy::MedianMode).unwrap();
        // median of {1, 3, 4} = 3
        assert_eq!(imputed.records[1].features[0], num(3.0));
        // mode of {x, x, y} = x
        assert_eq!(imputed.records[2].features[2], cat("x"));
        assert!(imputed.records.iter().all(|r| r.features.iter().all(|f| !f.is_missing())));
    }

    #[test]
    fn impute_median_of_even_count_averages() {
        let schema = vec![ColumnDescriptor {
            name: "v".into(),
            kind: ColumnKind::Numeric,
            group: FeatureGroup::Other,
        }];
        let cohort = Cohort::new(
            schema,
            vec![
                record("a", 0, Diagnosis::Control, vec![num(1.0)]),
                record("b", 0, Diagnosis::Control, vec![RawValue::Missing]),
                record("c", 0, Diagnosis::Control, vec![num(3.0)]),
            ],
        )
        .unwrap();
        let imputed = impute(&cohort, ImputePolicy::MedianMode).unwrap();
        assert_eq!(imputed.records[1].features[0], num(2.0));
    }

    #[test]
    fn impute_mode_tie_breaks_by_token_order() {
        let schema = vec![ColumnDescriptor {
            name: "t".into(),
            kind: ColumnKind::Categorical,
            group: FeatureGroup::Other,
        }];
        let cohort = Cohort::new(
            schema,
            vec![
                record("a", 0, Diagnosis::Control, vec![cat("beta")]),
                record("b", 0, Diagnosis::Control, vec![cat("alpha")]),
                record("c", 0, Diagnosis::Control, vec![RawValue::Missing]),
            ],
        )
        .unwrap();
        let imputed = impute(&cohort, ImputePolicy::MedianMode).unwrap();
        assert_eq!(imputed.records[2].features[0], cat("alpha"));
    }

    #[test]
    fn impute_rejects_fully_missing_column() {
        let schema = schema3();
        let cohort = Cohort::new(
            schema,
            vec![
                record("a", 0, Diagnosis::Control, vec![num(1.0), RawValue::Missing, cat("x")]),
                record("b", 0, Diagnosis::Control, vec![num(2.0), RawValue::Missing, cat("y")]),
            ],
        )
        .unwrap();
        match impute(&cohort, ImputePolicy::MedianMode).unwrap_err() {
            Error::EmptyColumn(name) => assert_eq!(name, "cog1"),
            other => panic!("expected EmptyColumn, got {other}"),
        }
    }

    #[test]
    fn one_hot_encoding_matches_token_order() {
        let schema = schema3();
        let cohort = Cohort::new(
            schema,
            vec![
                record("a", 0, Diagnosis::Control, vec![num(1.0), num(2.0), cat("b")]),
                record("b", 0, Diagnosis::Control, vec![num(2.0), num(3.0), cat("a")]),
                record("c", 0, Diagnosis::Control, vec![num(3.0), num(4.0), cat("c")]),
            ],
        )
        .unwrap();
        let (encoded, map) = one_hot_encode(&cohort).unwrap();
        assert_eq!(map.tokens[2].as_deref(), Some(&["a".to_string(), "b".into(), "c".into()][..]));
        assert_eq!(encoded.schema.len(), 5);
        assert_eq!(encoded.schema[2].name, "marital=a");
        // value `b` -> indicators (0, 1, 0)
        assert_eq!(
            &encoded.records[0].features[2..],
            &[num(0.0), num(1.0), num(0.0)]
        );
    }

    #[test]
    fn one_hot_single_token_column_is_all_ones() {
        let schema = vec![ColumnDescriptor {
            name: "t".into(),
            kind: ColumnKind::Categorical,
            group: FeatureGroup::Other,
        }];
        let cohort = Cohort::new(
            schema,
            vec![
                record("a", 0, Diagnosis::Control, vec![cat("only")]),
                record("b", 0, Diagnosis::Control, vec![cat("only")]),
            ],
        )
        .unwrap();
        let (encoded, _) = one_hot_encode(&cohort).unwrap();
        assert_eq!(encoded.schema.len(), 1);
        assert!(encoded.records.iter().all(|r| r.features[0] == num(1.0)));
    }

    #[test]
    fn one_hot_growth_counted_by_enumeration() {
        // Two categorical columns with 2 and 3 observed tokens: the encoded
        // schema must have (2 + 3) indicator columns replacing the 2 sources.
        let schema = vec![
            ColumnDescriptor { name: "p".into(), kind: ColumnKind::Categorical, group: FeatureGroup::Other },
            ColumnDescriptor { name: "q".into(), kind: ColumnKind::Categorical, group: FeatureGroup::Other },
        ];
        let rows = vec![
            vec![cat("u"), cat("x")],
            vec![cat("v"), cat("y")],
            vec![cat("u"), cat("z")],
        ];
        let cohort = Cohort::new(
            schema.clone(),
            rows.into_iter()
                .enumerate()
                .map(|(i, f)| record(&format!("s{i}"), 0, Diagnosis::Control, f))
                .collect(),
        )
        .unwrap();
        let (encoded, map) = one_hot_encode(&cohort).unwrap();
        let expected: usize = map
            .tokens
            .iter()
            .map(|t| t.as_ref().map(|l| l.len()).unwrap_or(1))
            .sum();
        assert_eq!(expected, 5);
        assert_eq!(encoded.schema.len(), expected);
    }

    #[test]
    fn min_max_normalizes_and_zeroes_constant_columns() {
        let m = ndarray::arr2(&[[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]);
        let (norm, stats) = min_max_normalize(&m).unwrap();
        assert_eq!(norm.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(norm.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(stats[0], ColumnStats { min: 2.0, max: 6.0 });
    }

    #[test]
    fn min_max_heldout_transform_clamps() {
        let train = ndarray::arr2(&[[2.0], [6.0]]);
        let (_, stats) = min_max_normalize(&train).unwrap();
        let new = ndarray::arr2(&[[8.0], [0.0], [4.0]]);
        let out = apply_min_max(&new, &stats).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn min_max_rejects_non_finite_with_coordinates() {
        let m = ndarray::arr2(&[[1.0, 2.0], [f64::NAN, 3.0]]);
        match min_max_normalize(&m).unwrap_err() {
            Error::NonFinite { row, col } => {
                assert_eq!((row, col), (1, 0));
            }
            other => panic!("expected NonFinite, got {other}"),
        }
    }

    fn numeric_schema(names: &[&str]) -> Vec<ColumnDescriptor> {
        names
            .iter()
            .map(|n| ColumnDescriptor { name: (*n).into(), kind: ColumnKind::Numeric, group: FeatureGroup::Memory })
            .collect()
    }

    #[test]
    fn assemble_design_concatenates_input_visits() {
        let schema = numeric_schema(&["f1", "f2"]);
        let cohort = Cohort::new(
            schema,
            vec![
                record("s1", 0, Diagnosis::Mci, vec![num(0.0), num(1.0)]),
                record("s1", 12, Diagnosis::Mci, vec![num(2.0), num(3.0)]),
                record("s1", 24, Diagnosis::Dementia, vec![num(4.0), num(5.0)]),
                // s2 lacks month 12: excluded
                record("s2", 0, Diagnosis::Mci, vec![num(9.0), num(9.0)]),
                record("s2", 24, Diagnosis::Mci, vec![num(9.0), num(9.0)]),
            ],
        )
        .unwrap();
        let design = assemble_design(&cohort, [0, 12], 24).unwrap();
        assert_eq!(design.n_samples(), 1);
        assert_eq!(design.n_features(), 4);
        assert_eq!(design.row_meta[0].diagnosis, Some(Diagnosis::Dementia));
        assert_eq!(design.col_meta[0].name, "f1_m0");
        assert_eq!(design.col_meta[2].name, "f1_m12");
    }

    #[test]
    fn assemble_design_errors_when_nobody_eligible() {
        let schema = numeric_schema(&["f1"]);
        let cohort = Cohort::new(
            schema,
            vec![record("s1", 0, Diagnosis::Mci, vec![num(1.0)])],
        )
        .unwrap();
        assert!(matches!(
            assemble_design(&cohort, [0, 12], 24).unwrap_err(),
            Error::EmptyDesign(_)
        ));
    }

    #[test]
    fn shuffling_records_permutes_rows_but_not_content() {
        let schema = numeric_schema(&["f1"]);
        let mut records = Vec::new();
        for (i, id) in ["s1", "s2", "s3"].iter().enumerate() {
            for m in [0u32, 12, 24] {
                records.push(record(id, m, Diagnosis::Mci, vec![num(i as f64 + m as f64)]));
            }
        }
        let cohort = Cohort::new(schema.clone(), records.clone()).unwrap();
        let design = assemble_design(&cohort, [0, 12], 24).unwrap();

        records.reverse();
        let shuffled = Cohort::new(schema, records).unwrap();
        let design2 = assemble_design(&shuffled, [0, 12], 24).unwrap();

        for meta in &design.row_meta {
            let i = design.row_meta.iter().position(|m| m.subject_id == meta.subject_id).unwrap();
            let j = design2.row_meta.iter().position(|m| m.subject_id == meta.subject_id).unwrap();
            // identical raw content implies identical normalized content:
            // normalization statistics are order-free
            assert_eq!(design.values.row(i).to_vec(), design2.values.row(j).to_vec());
        }
    }

    #[test]
    fn impute_is_idempotent() {
        let schema = schema3();
        let cohort = Cohort::new(
            schema,
            vec![
                record("a", 0, Diagnosis::Control, vec![num(1.0), RawValue::Missing, cat("x")]),
                record("b", 0, Diagnosis::Control, vec![num(2.0), num(4.0), RawValue::Missing]),
                record("c", 0, Diagnosis::Control, vec![num(3.0), num(6.0), cat("y")]),
            ],
        )
        .unwrap();
        let once = impute(&cohort, ImputePolicy::MedianMode).unwrap();
        let twice = impute(&once, ImputePolicy::MedianMode).unwrap();
        for (a, b) in once.records.iter().zip(&twice.records) {
            assert_eq!(a.features, b.features);
        }
    }

    #[test]
    fn preprocessor_transform_reproduces_training_design() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("c.csv");
        std::fs::write(
            &csv_path,
            "subject_id,visit_month,diagnosis,age,sex,apoe4,mem1,cog1,marital\n\
             s1,0,MCI,70,F,0,1.0,2.0,married\n\
             s1,12,MCI,70,F,0,1.5,2.5,married\n\
             s1,24,AD,70,F,0,2.0,,married\n\
             s2,0,MCI,75,M,1,2.0,1.0,widowed\n\
             s2,12,AD,75,M,1,2.5,1.5,\n\
             s2,24,AD,75,M,1,3.0,2.0,widowed\n",
        )
        .unwrap();
        let cohort = load_cohort(&csv_path, &schema3()).unwrap();
        let (pre, train) = Preprocessor::fit(&cohort, [0, 12], 24).unwrap();
        let again = pre.transform(&cohort).unwrap();
        assert_eq!(train.values, again.values);
        assert_eq!(again.row_meta[0].diagnosis, Some(Diagnosis::Dementia));
    }

    #[test]
    fn preprocessor_rejects_schema_mismatch() {
        let schema = schema3();
        let cohort = Cohort::new(
            schema.clone(),
            vec![
                record("a", 0, Diagnosis::Mci, vec![num(1.0), num(2.0), cat("x")]),
                record("a", 12, Diagnosis::Mci, vec![num(1.0), num(2.0), cat("x")]),
                record("a", 24, Diagnosis::Mci, vec![num(1.0), num(2.0), cat("x")]),
                record("b", 0, Diagnosis::Mci, vec![num(2.0), num(3.0), cat("y")]),
                record("b", 12, Diagnosis::Mci, vec![num(2.0), num(3.0), cat("y")]),
                record("b", 24, Diagnosis::Mci, vec![num(2.0), num(3.0), cat("y")]),
            ],
        )
        .unwrap();
        let (pre, _) = Preprocessor::fit(&cohort, [0, 12], 24).unwrap();

        let mut extended = schema;
        extended.push(ColumnDescriptor {
            name: "extra".into(),
            kind: ColumnKind::Numeric,
            group: FeatureGroup::Other,
        });
        let other = Cohort::new(
            extended,
            vec![record("z", 0, Diagnosis::Mci, vec![num(1.0), num(2.0), cat("x"), num(0.0)])],
        )
        .unwrap();
        assert!(matches!(pre.transform(&other).unwrap_err(), Error::Schema(_)));
    }

    proptest! {
        // Indicator groups of an encoded categorical column sum to exactly 1
        // per row, and the design stays inside [0, 1].
        #[test]
        fn encoding_indicator_groups_sum_to_one(tokens in proptest::collection::vec(0usize..4, 2..40)) {
            let schema = vec![
                ColumnDescriptor { name: "n".into(), kind: ColumnKind::Numeric, group: FeatureGroup::Memory },
                ColumnDescriptor { name: "c".into(), kind: ColumnKind::Categorical, group: FeatureGroup::Other },
            ];
            let names = ["a", "b", "c", "d"];
            let records: Vec<ClinicalRecord> = tokens
                .iter()
                .enumerate()
                .map(|(i, &t)| record(&format!("s{i}"), 0, Diagnosis::Control, vec![num(i as f64), cat(names[t])]))
                .collect();
            let cohort = Cohort::new(schema, records).unwrap();
            let (encoded, map) = one_hot_encode(&cohort).unwrap();
            let width = map.tokens[1].as_ref().unwrap().len();
            for rec in &encoded.records {
                let sum: f64 = rec.features[1..1 + width]
                    .iter()
                    .map(|v| match v { RawValue::Numeric(x) => *x, _ => f64::NAN })
                    .sum();
                prop_assert_eq!(sum, 1.0);
            }
        }

        #[test]
        fn normalized_entries_stay_in_unit_interval(
            rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 2..20)
        ) {
            let n = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let m = Array2::from_shape_vec((n, 3), flat).unwrap();
            let (norm, _) = min_max_normalize(&m).unwrap();
            for v in norm.iter() {
                prop_assert!(v.is_finite());
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
