//! Tabular datasets with a binary label and a binary protected attribute.
//!
//! Labels are always stored so that `1` is the favorable outcome and the
//! protected column so that `1` is the privileged group, whatever the raw
//! encoding in the source file was.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const PRIVILEGED: u8 = 1;
pub const UNPRIVILEGED: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    /// Indicator column; columns sharing `group` encode one categorical variable.
    Categorical { group: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Full,
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone)]
pub struct TabularDataset {
    features: Matrix,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    labels: Vec<u8>,
    protected: Vec<u8>,
    weights: Vec<f64>,
    row_ids: Vec<usize>,
    favorable_raw: String,
    source: String,
    split: SplitTag,
}

impl TabularDataset {
    /// Builds a dataset with unit weights, validating shapes and label/group encodings.
    pub fn new(
        features: Matrix,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        labels: Vec<u8>,
        protected: Vec<u8>,
    ) -> Result<Self> {
        let n = labels.len();
        let ds = Self {
            weights: vec![1.0; n],
            row_ids: (0..n).collect(),
            features,
            feature_names,
            feature_kinds,
            labels,
            protected,
            favorable_raw: "1".to_string(),
            source: "memory".to_string(),
            split: SplitTag::Full,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.features.nrows() != n || self.protected.len() != n || self.weights.len() != n {
            return Err(Error::Data(format!(
                "row count mismatch: features {}, labels {}, protected {}, weights {}",
                self.features.nrows(),
                n,
                self.protected.len(),
                self.weights.len()
            )));
        }
        if self.feature_names.len() != self.features.ncols()
            || self.feature_kinds.len() != self.features.ncols()
        {
            return Err(Error::Data("feature names/kinds do not match column count".into()));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        if self.protected.iter().any(|&g| g > 1) {
            return Err(Error::Data("protected attribute must be 0 or 1".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Data(format!("instance weights must be positive, found {w}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn protected(&self) -> &[u8] {
        &self.protected
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn favorable_raw(&self) -> &str {
        &self.favorable_raw
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn with_favorable_raw(mut self, raw: impl Into<String>) -> Self {
        self.favorable_raw = raw.into();
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = weights;
        self.validate()?;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        self.labels = labels;
        self.validate()?;
        Ok(self)
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.ncols() != self.features.ncols() {
            return Err(Error::Data(format!(
                "replacement features have {} columns, expected {}",
                features.ncols(),
                self.features.ncols()
            )));
        }
        self.features = features;
        self.validate()?;
        Ok(self)
    }

    /// Appends the protected attribute as a categorical indicator feature.
    pub fn with_protected_feature(mut self, name: impl Into<String>) -> Self {
        let col: Vec<f64> = self.protected.iter().map(|&g| f64::from(g)).collect();
        let group = self.next_group_id();
        self.features = self.features.with_column(&col);
        self.feature_names.push(name.into());
        self.feature_kinds.push(FeatureKind::Categorical { group });
        self
    }

    fn next_group_id(&self) -> usize {
        self.feature_kinds
            .iter()
            .filter_map(|k| match k {
                FeatureKind::Categorical { group } => Some(group + 1),
                FeatureKind::Continuous => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn subset(&self, idx: &[usize], split: SplitTag) -> Self {
        Self {
            features: self.features.select_rows(idx),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            protected: idx.iter().map(|&i| self.protected[i]).collect(),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            favorable_raw: self.favorable_raw.clone(),
            source: self.source.clone(),
            split,
        }
    }

    /// Unweighted counts indexed as `[group][label]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut c = [[0usize; 2]; 2];
        for (&g, &y) in self.protected.iter().zip(&self.labels) {
            c[g as usize][y as usize] += 1;
        }
        c
    }

    pub fn group_sizes(&self) -> [usize; 2] {
        let c = self.cell_counts();
        [c[0][0] + c[0][1], c[1][0] + c[1][1]]
    }
}

fn cell_name(group: usize, label: usize) -> String {
    format!(
        "({}, {})",
        if group == PRIVILEGED as usize { "privileged" } else { "unprivileged" },
        if label == 1 { "favorable" } else { "unfavorable" }
    )
}

/// Rule mapping a raw protected value to the privileged group.
#[derive(Debug, Clone, PartialEq)]
enum GroupRule {
    Equals(String),
    AtLeast(f64),
    Above(f64),
    AtMost(f64),
    Below(f64),
}

impl GroupRule {
    fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        let num = |rest: &str| {
            rest.trim()
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("cannot parse privileged threshold `{spec}`")))
        };
        Ok(if let Some(r) = s.strip_prefix(">=") {
            GroupRule::AtLeast(num(r)?)
        } else if let Some(r) = s.strip_prefix("<=") {
            GroupRule::AtMost(num(r)?)
        } else if let Some(r) = s.strip_prefix('>') {
            GroupRule::Above(num(r)?)
        } else if let Some(r) = s.strip_prefix('<') {
            GroupRule::Below(num(r)?)
        } else {
            GroupRule::Equals(s.to_string())
        })
    }

    fn is_privileged(&self, raw: &str, row: usize) -> Result<bool> {
        let value = || {
            raw.parse::<f64>().map_err(|_| {
                Error::Data(format!("row {row}: protected value `{raw}` is not numeric"))
            })
        };
        Ok(match self {
            GroupRule::Equals(s) => raw == s,
            GroupRule::AtLeast(t) => value()? >= *t,
            GroupRule::Above(t) => value()? > *t,
            GroupRule::AtMost(t) => value()? <= *t,
            GroupRule::Below(t) => value()? < *t,
        })
    }
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label: String,
    /// Raw label value that denotes the favorable outcome.
    pub favorable: String,
    pub protected: String,
    /// Raw privileged value, or a numeric comparison such as `>=25`.
    pub privileged: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Feature columns to keep; all non-label, non-protected columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
}

fn is_missing(v: &str) -> bool {
    matches!(v, "" | "?" | "NA" | "N/A" | "nan" | "NaN" | "null")
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TabularDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in {}", path.display())))
    };
    let label_col = col(&schema.label)?;
    let protected_col = col(&schema.protected)?;
    let rule = GroupRule::parse(&schema.privileged)?;

    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| col(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&i| i != label_col && i != protected_col).collect(),
    };
    if feature_cols.iter().any(|&c| c == label_col || c == protected_col) {
        return Err(Error::Schema("label/protected columns cannot be listed as features".into()));
    }
    for c in &schema.categorical {
        let i = col(c)?;
        if !feature_cols.contains(&i) {
            return Err(Error::Schema(format!("categorical column `{c}` is not a feature column")));
        }
    }

    let mut records: Vec<Vec<String>> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!("row {row}: expected {} fields", header.len())));
        }
        let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
        if let Some(i) = fields.iter().position(|f| is_missing(f)) {
            return Err(Error::Data(format!("row {row}: missing value in column `{}`", header[i])));
        }
        records.push(fields);
    }
    if records.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }

    let label_values: BTreeSet<&str> = records.iter().map(|r| r[label_col].as_str()).collect();
    if !label_values.contains(schema.favorable.as_str()) {
        return Err(Error::Data(format!(
            "favorable value `{}` does not occur in column `{}`",
            schema.favorable, schema.label
        )));
    }
    if label_values.len() != 2 {
        return Err(Error::Data(format!(
            "label column `{}` must have exactly two values, found {}",
            schema.label,
            label_values.len()
        )));
    }
    let labels: Vec<u8> = records.iter().map(|r| u8::from(r[label_col] == schema.favorable)).collect();
    let protected: Vec<u8> = records
        .iter()
        .enumerate()
        .map(|(i, r)| rule.is_privileged(&r[protected_col], i).map(u8::from))
        .collect::<Result<_>>()?;

    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut group = 0;
    for &c in &feature_cols {
        if schema.categorical.iter().any(|n| n == &header[c]) {
            let levels: BTreeSet<&str> = records.iter().map(|r| r[c].as_str()).collect();
            for level in levels {
                names.push(format!("{}={}", header[c], level));
                kinds.push(FeatureKind::Categorical { group });
                columns.push(records.iter().map(|r| f64::from(u8::from(r[c] == level))).collect());
            }
            group += 1;
        } else {
            let values = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r[c].parse::<f64>().map_err(|_| {
                        Error::Data(format!("row {i}: column `{}` value `{}` is not numeric", header[c], r[c]))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            names.push(header[c].clone());
            kinds.push(FeatureKind::Continuous);
            columns.push(values);
        }
    }

    let n = records.len();
    let mut features = Matrix::zeros(n, columns.len());
    for (j, colv) in columns.iter().enumerate() {
        for (i, v) in colv.iter().enumerate() {
            features.set(i, j, *v);
        }
    }
    let ds = TabularDataset::new(features, names, kinds, labels, protected)?
        .with_favorable_raw(schema.favorable.clone())
        .with_source(path.display().to_string());
    let sizes = ds.group_sizes();
    if sizes[0] == 0 || sizes[1] == 0 {
        return Err(Error::Data(format!(
            "protected column `{}` leaves the {} group empty",
            schema.protected,
            if sizes[1] == 0 { "privileged" } else { "unprivileged" }
        )));
    }
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.6, valid: 0.2, test: 0.2, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("valid", self.valid), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Parameter(format!("split fraction `{name}` = {f} not in (0,1)")));
            }
        }
        let sum = self.train + self.valid + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// (train, valid, test) sizes: floor allocation for valid/test, remainder to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let valid = floor(self.valid);
        let test = floor(self.test);
        (n - valid - test, valid, test)
    }
}

pub struct Splits {
    pub train: TabularDataset,
    pub valid: TabularDataset,
    pub test: TabularDataset,
}

pub fn split(ds: &TabularDataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let n = ds.len();
    let (n_train, n_valid, _) = spec.sizes(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut parts = [
        idx[..n_train].to_vec(),
        idx[n_train..n_train + n_valid].to_vec(),
        idx[n_train + n_valid..].to_vec(),
    ];
    for p in &mut parts {
        p.sort_unstable();
    }
    let [tr, va, te] = parts;
    let out = Splits {
        train: ds.subset(&tr, SplitTag::Train),
        valid: ds.subset(&va, SplitTag::Valid),
        test: ds.subset(&te, SplitTag::Test),
    };
    for (name, part) in [("train", &out.train), ("valid", &out.valid), ("test", &out.test)] {
        let c = part.cell_counts();
        for (g, row) in c.iter().enumerate() {
            for (y, &count) in row.iter().enumerate() {
                if count < 2 {
                    return Err(Error::Split(format!(
                        "{name} split has {count} instance(s) in cell {}, need at least 2",
                        cell_name(g, y)
                    )));
                }
            }
        }
    }
    Ok(out)
}

/// Per-column affine transform fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: &TabularDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("cannot standardize an empty training set".into()));
        }
        let n = train.len() as f64;
        let x = train.features();
        let mut means = vec![0.0; x.ncols()];
        let mut scales = vec![1.0; x.ncols()];
        for (j, kind) in train.feature_kinds().iter().enumerate() {
            if *kind != FeatureKind::Continuous {
                continue;
            }
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            if var > 0.0 {
                scales[j] = var.sqrt();
            }
        }
        Ok(Self { means, scales })
    }

    pub fn transform(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        let mut x = ds.features().clone();
        for i in 0..x.nrows() {
            for (j, v) in x.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.scales[j];
            }
        }
        ds.clone().with_features(x)
    }
}

/// Standardizes continuous columns of `train` and applies the same transform to `others`.
pub fn standardize(
    train: &TabularDataset,
    others: &[&TabularDataset],
) -> Result<(TabularDataset, Vec<TabularDataset>, Scaler)> {
    let scaler = Scaler::fit(train)?;
    let t = scaler.transform(train)?;
    let rest = others.iter().map(|d| scaler.transform(d)).collect::<Result<_>>()?;
    Ok((t, rest, scaler))
}

/// Parameters of the synthetic biased-data generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    #[serde(default = "SynthSpec::default_d")]
    pub d: usize,
    pub gap: f64,
    #[serde(default = "SynthSpec::default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    fn default_d() -> usize {
        5
    }

    fn default_noise() -> f64 {
        1.0
    }
}

/// Generates a half-privileged population whose favorable-label rate differs
/// between groups by `label_gap` (unprivileged minus privileged).
///
/// Feature 0 carries the label signal, feature 1 is a proxy for the group,
/// feature 2 (if present) is a weaker label signal, the rest are pure noise.
pub fn synth_biased(n: usize, d: usize, label_gap: f64, score_noise: f64, seed: u64) -> Result<TabularDataset> {
    if n < 100 {
        return Err(Error::Parameter(format!("synthetic n = {n} must be at least 100")));
    }
    if d < 2 {
        return Err(Error::Parameter(format!("synthetic d = {d} must be at least 2")));
    }
    if !label_gap.is_finite() || label_gap.abs() > 1.0 {
        return Err(Error::Parameter(format!(
            "label gap {label_gap} would push a favorable rate outside [0,1]"
        )));
    }
    if !(score_noise >= 0.0 && score_noise.is_finite()) {
        return Err(Error::Parameter(format!("score noise {score_noise} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_priv = n / 2;
    let mut protected: Vec<u8> = (0..n).map(|i| u8::from(i < n_priv)).collect();
    protected.shuffle(&mut rng);

    let rate = |g: u8| if g == PRIVILEGED { 0.5 - label_gap / 2.0 } else { 0.5 + label_gap / 2.0 };
    let mut labels = vec![0u8; n];
    for g in [UNPRIVILEGED, PRIVILEGED] {
        let mut members: Vec<usize> = (0..n).filter(|&i| protected[i] == g).collect();
        members.shuffle(&mut rng);
        let k = (rate(g) * members.len() as f64).round() as usize;
        for &i in members.iter().take(k) {
            labels[i] = 1;
        }
    }

    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        let ys = 2.0 * f64::from(labels[i]) - 1.0;
        let gs = 2.0 * f64::from(protected[i]) - 1.0;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = match j {
                0 => ys + score_noise * z,
                1 => 0.8 * gs + z,
                2 => 0.5 * ys + score_noise * z,
                _ => z,
            };
            x.set(i, j, v);
        }
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    Ok(TabularDataset::new(x, names, vec![FeatureKind::Continuous; d], labels, protected)?
        .with_source(format!("synth(n={n},d={d},gap={label_gap},noise={score_noise},seed={seed})")))
}

/// Favorable-rate difference of the stored labels (unprivileged minus privileged),
/// optionally weighted by the instance weights.
pub fn label_spd(ds: &TabularDataset, weighted: bool) -> f64 {
    let mut fav = [0.0; 2];
    let mut tot = [0.0; 2];
    for i in 0..ds.len() {
        let w = if weighted { ds.weights[i] } else { 1.0 };
        let g = ds.protected[i] as usize;
        tot[g] += w;
        fav[g] += w * f64::from(ds.labels[i]);
    }
    fav[0] / tot[0] - fav[1] / tot[1]
}

/// Schema matching the files written by [`write_synth_csv`].
pub fn synth_schema() -> CsvSchema {
    CsvSchema {
        label: "label".into(),
        favorable: "1".into(),
        protected: "group".into(),
        privileged: "privileged".into(),
        categorical: vec![],
        features: None,
    }
}

/// Writes features, a `group` column (`privileged`/`unprivileged`) and a `label` column (`1`/`0`).
pub fn write_synth_csv(ds: &TabularDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = ds.feature_names.clone();
    header.extend(["group".to_string(), "label".to_string()]);
    w.write_record(&header)?;
    for (i, row) in ds.features.rows_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(if ds.protected[i] == PRIVILEGED { "privileged" } else { "unprivileged" }.into());
        rec.push(ds.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
