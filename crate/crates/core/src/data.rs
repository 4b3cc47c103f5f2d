//! Discrete datasets: schema inference, value encoding, delimited-text I/O
//! and cross-validation folds.
//!
//! Every variable is identified by its index in the [`Schema`]; every value
//! by its index into that variable's sorted state list.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Placeholder state added to constant columns under `allow_constant`.
pub const UNSEEN_STATE: &str = "<unseen>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    /// State labels in value-index order.
    pub states: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, states: Vec<String>) -> Self {
        Variable {
            name: name.into(),
            states,
        }
    }

    /// A variable whose states are labelled `0..cardinality`.
    pub fn with_cardinality(name: impl Into<String>, cardinality: usize) -> Self {
        Variable::new(name, (0..cardinality).map(|v| v.to_string()).collect())
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    variables: Vec<Variable>,
}

impl Schema {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for var in &variables {
            if var.name.is_empty() || var.name.chars().any(char::is_whitespace) {
                return Err(Error::Schema(format!("bad variable name {:?}", var.name)));
            }
            if !seen.insert(var.name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable name {}", var.name)));
            }
            if var.cardinality() < 2 {
                return Err(Error::Schema(format!(
                    "variable {} has cardinality {} (need at least 2)",
                    var.name,
                    var.cardinality()
                )));
            }
            if var.cardinality() > u32::MAX as usize {
                return Err(Error::Schema(format!("variable {} has too many states", var.name)));
            }
            let distinct: BTreeSet<&str> = var.states.iter().map(String::as_str).collect();
            if distinct.len() != var.states.len() {
                return Err(Error::Schema(format!("variable {} repeats a state label", var.name)));
            }
        }
        Ok(Schema { variables })
    }

    /// Schema with `c0, c1, ...` names and integer state labels.
    pub fn from_cardinalities(cards: &[usize]) -> Result<Self> {
        Schema::new(
            cards
                .iter()
                .enumerate()
                .map(|(i, &c)| Variable::with_cardinality(format!("c{i}"), c))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: usize) -> &Variable {
        &self.variables[id]
    }

    pub fn cardinality(&self, id: usize) -> usize {
        self.variables[id].cardinality()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::cardinality).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Same variable names and cardinalities (state labels may differ).
    pub fn is_compatible(&self, other: &Schema) -> bool {
        self.len() == other.len()
            && self
                .variables
                .iter()
                .zip(&other.variables)
                .all(|(a, b)| a.name == b.name && a.cardinality() == b.cardinality())
    }
}

/// Fully observed records over a [`Schema`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    values: Vec<u32>,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<Vec<u32>>) -> Result<Self> {
        let n = schema.len();
        if let Some((m, row)) = records.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Record {
                record: m,
                message: format!("expected {} values, found {}", n, row.len()),
            });
        }
        Dataset::from_flat(schema, records.concat())
    }

    /// Builds from row-major values; `values.len()` must be a multiple of the schema width.
    pub fn from_flat(schema: Schema, values: Vec<u32>) -> Result<Self> {
        let n = schema.len();
        if n == 0 {
            return Err(Error::Schema("schema has no variables".into()));
        }
        if !values.len().is_multiple_of(n) {
            return Err(Error::Record {
                record: values.len() / n,
                message: "truncated record".into(),
            });
        }
        let cards = schema.cardinalities();
        for (m, row) in values.chunks_exact(n).enumerate() {
            for (i, (&v, &card)) in row.iter().zip(&cards).enumerate() {
                if v as usize >= card {
                    return Err(Error::Record {
                        record: m,
                        message: format!("value {v} of variable {i} out of range 0..{card}"),
                    });
                }
            }
        }
        Ok(Dataset { schema, values })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_vars(&self) -> usize {
        self.schema.len()
    }

    pub fn n_records(&self) -> usize {
        self.values.len() / self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn record(&self, m: usize) -> &[u32] {
        let n = self.n_vars();
        &self.values[m * n..(m + 1) * n]
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.values.chunks_exact(self.n_vars())
    }

    #[inline]
    pub fn value(&self, m: usize, var: usize) -> u32 {
        self.values[m * self.n_vars() + var]
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.n_vars());
        for &m in indices {
            values.extend_from_slice(self.record(m));
        }
        Dataset {
            schema: self.schema.clone(),
            values,
        }
    }

    /// Same records re-labelled under a compatible schema.
    pub fn with_schema(self, schema: Schema) -> Result<Dataset> {
        if !self.schema.is_compatible(&schema) {
            return Err(Error::Schema("schemas differ in names or cardinalities".into()));
        }
        Ok(Dataset {
            schema,
            values: self.values,
        })
    }

    pub fn encode_record(&self, symbols: &[&str]) -> Result<Vec<u32>> {
        encode_row(&self.schema, symbols, 0)
    }

    pub fn decode_record(&self, m: usize) -> Vec<&str> {
        self.record(m)
            .iter()
            .enumerate()
            .map(|(i, &v)| self.schema.variable(i).states[v as usize].as_str())
            .collect()
    }

    /// SHA-256 over the schema and encoded records, hex-encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for var in self.schema.variables() {
            hasher.update(var.name.as_bytes());
            hasher.update([0u8]);
            hasher.update((var.cardinality() as u64).to_le_bytes());
        }
        hasher.update((self.n_records() as u64).to_le_bytes());
        for v in &self.values {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: char,
    /// First non-empty line names the columns.
    pub header: bool,
    /// Give single-valued columns a second, never-observed state.
    pub allow_constant: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: '\t',
            header: true,
            allow_constant: false,
        }
    }
}

impl LoadOptions {
    pub fn headerless() -> Self {
        LoadOptions {
            header: false,
            ..LoadOptions::default()
        }
    }
}

struct RawTable<'a> {
    names: Vec<String>,
    /// (1-based line number, fields)
    rows: Vec<(usize, Vec<&'a str>)>,
}

fn split_rows<'a>(text: &'a str, opts: &LoadOptions) -> Result<RawTable<'a>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let split = |l: &'a str| -> Vec<&'a str> { l.split(opts.delimiter).map(str::trim).collect() };

    let mut names = None;
    if opts.header {
        match lines.next() {
            Some((_, l)) => names = Some(split(l).into_iter().map(str::to_owned).collect::<Vec<_>>()),
            None => return Err(Error::NoRecords),
        }
    }
    let rows: Vec<(usize, Vec<&str>)> = lines.map(|(no, l)| (no, split(l))).collect();
    if rows.is_empty() {
        return Err(Error::NoRecords);
    }
    let width = names.as_ref().map_or(rows[0].1.len(), Vec::len);
    for (no, fields) in &rows {
        if fields.len() != width {
            return Err(Error::parse(
                *no,
                format!("row {no} has {} fields, expected {width}", fields.len()),
            ));
        }
        if let Some(f) = fields.iter().position(|f| f.is_empty()) {
            return Err(Error::parse(*no, format!("row {no} has an empty field in column {f}")));
        }
    }
    let names = names.unwrap_or_else(|| (0..width).map(|i| format!("c{i}")).collect());
    Ok(RawTable { names, rows })
}

/// Sorted distinct symbols: numerically when every symbol is an integer,
/// lexicographically otherwise.
fn sorted_states(symbols: BTreeSet<&str>) -> Vec<String> {
    let numeric: Option<Vec<(i64, &str)>> = symbols
        .iter()
        .map(|s| s.parse::<i64>().ok().map(|v| (v, *s)))
        .collect();
    match numeric {
        Some(mut nums) => {
            nums.sort();
            nums.into_iter().map(|(_, s)| s.to_owned()).collect()
        }
        None => symbols.into_iter().map(str::to_owned).collect(),
    }
}

fn encode_row(schema: &Schema, fields: &[&str], line: usize) -> Result<Vec<u32>> {
    if fields.len() != schema.len() {
        return Err(Error::parse(
            line,
            format!("expected {} fields, found {}", schema.len(), fields.len()),
        ));
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, sym)| {
            let var = schema.variable(i);
            var.states
                .iter()
                .position(|s| s == sym)
                .map(|v| v as u32)
                .ok_or_else(|| Error::parse(line, format!("unknown state {sym:?} for variable {}", var.name)))
        })
        .collect()
}

/// Parses delimited text, inferring the schema from the observed symbols.
pub fn parse_dataset(text: &str, opts: &LoadOptions) -> Result<Dataset> {
    let table = split_rows(text, opts)?;
    let width = table.names.len();
    let mut variables = Vec::with_capacity(width);
    for (col, name) in table.names.iter().enumerate() {
        let symbols: BTreeSet<&str> = table.rows.iter().map(|(_, f)| f[col]).collect();
        let mut states = sorted_states(symbols);
        if states.len() == 1 {
            if !opts.allow_constant {
                return Err(Error::Schema(format!(
                    "column {name} has a single distinct value {:?}",
                    states[0]
                )));
            }
            states.push(UNSEEN_STATE.to_owned());
        }
        variables.push(Variable::new(name.clone(), states));
    }
    let schema = Schema::new(variables)?;

    let index: Vec<HashMap<&str, u32>> = schema
        .variables()
        .iter()
        .map(|v| v.states.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect())
        .collect();
    let mut values = Vec::with_capacity(table.rows.len() * width);
    for (_, fields) in &table.rows {
        for (col, sym) in fields.iter().enumerate() {
            values.push(index[col][sym]);
        }
    }
    Dataset::from_flat(schema, values)
}

/// Parses delimited text against a known schema. With a header, columns are
/// matched by name; without one, by position.
pub fn parse_dataset_with_schema(text: &str, schema: &Schema, opts: &LoadOptions) -> Result<Dataset> {
    let table = split_rows(text, opts)?;
    let column_of: Vec<usize> = if opts.header {
        schema
            .variables()
            .iter()
            .map(|v| {
                table
                    .names
                    .iter()
                    .position(|n| *n == v.name)
                    .ok_or_else(|| Error::Schema(format!("column {} missing from data", v.name)))
            })
            .collect::<Result<_>>()?
    } else {
        if table.names.len() != schema.len() {
            return Err(Error::Schema(format!(
                "data has {} columns, schema has {}",
                table.names.len(),
                schema.len()
            )));
        }
        (0..schema.len()).collect()
    };
    let mut values = Vec::with_capacity(table.rows.len() * schema.len());
    for (no, fields) in &table.rows {
        let ordered: Vec<&str> = column_of.iter().map(|&c| fields[c]).collect();
        values.extend(encode_row(schema, &ordered, *no)?);
    }
    Dataset::from_flat(schema.clone(), values)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    parse_dataset(&read(path.as_ref())?, opts)
}

pub fn load_dataset_with_schema(path: impl AsRef<Path>, schema: &Schema, opts: &LoadOptions) -> Result<Dataset> {
    parse_dataset_with_schema(&read(path.as_ref())?, schema, opts)
}

/// Tab-separated text with a header row of variable names.
pub fn format_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    let names: Vec<&str> = dataset.schema().variables().iter().map(|v| v.name.as_str()).collect();
    out.push_str(&names.join("\t"));
    out.push('\n');
    for m in 0..dataset.n_records() {
        let _ = writeln!(out, "{}", dataset.decode_record(m).join("\t"));
    }
    out
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_dataset(dataset)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Dataset,
    pub test: Dataset,
    /// Original record indices of the test partition, ascending.
    pub test_indices: Vec<usize>,
}

/// Seeded shuffle into `folds` partitions whose sizes differ by at most one.
pub fn split_folds(dataset: &Dataset, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    let m = dataset.n_records();
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > m {
        return Err(Error::Config(format!("{folds} folds requested for {m} records")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (base, extra) = (m / folds, m % folds);
    let mut parts = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut part = order[start..start + len].to_vec();
        part.sort_unstable();
        parts.push(part);
        start += len;
    }

    Ok(parts
        .iter()
        .enumerate()
        .map(|(f, test_idx)| {
            let train_idx: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            Fold {
                train: dataset.subset(&train_idx),
                test: dataset.subset(test_idx),
                test_indices: test_idx.clone(),
            }
        })
        .collect())
}
