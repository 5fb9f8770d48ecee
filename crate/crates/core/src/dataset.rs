//! Survey data ingestion and pre-estimation diagnostics.
//!
//! A [`SurveyDataset`] holds integer-coded categorical items (indicators,
//! distal outcomes, covariates) plus one positive weight per respondent.
//! Missing values are stored as an internal 0 sentinel; on disk they are
//! empty fields or a configurable refusal code (default 99).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MISSING_CODE: i64 = 99;

/// Internal sentinel for a missing value inside the code matrix.
pub const MISSING: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Indicator,
    Distal,
    Covariate,
    Weight,
}

/// Declares one CSV column: its id, category count R_j, role, and whether
/// raw codes must be flipped (r -> R_j + 1 - r) so that higher codes always
/// mean greater concern. `cardinality` is ignored for the weight column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemSchema {
    pub item_id: String,
    #[serde(default = "default_cardinality")]
    pub cardinality: u8,
    pub role: Role,
    #[serde(default)]
    pub reverse_coded: bool,
}

fn default_cardinality() -> u8 {
    2
}

impl ItemSchema {
    pub fn new(item_id: &str, cardinality: u8, role: Role) -> Self {
        ItemSchema {
            item_id: item_id.to_string(),
            cardinality,
            role,
            reverse_coded: false,
        }
    }

    pub fn reversed(mut self) -> Self {
        self.reverse_coded = true;
        self
    }
}

/// Validates a full schema list: unique ids, cardinalities >= 2 on
/// categorical roles, exactly one weight column.
pub fn validate_schema(schema: &[ItemSchema]) -> Result<()> {
    let mut seen = BTreeSet::new();
    let mut weights = 0usize;
    for item in schema {
        if !seen.insert(item.item_id.as_str()) {
            return Err(Error::Schema(format!("duplicate item id {:?}", item.item_id)));
        }
        match item.role {
            Role::Weight => weights += 1,
            _ => {
                if item.cardinality < 2 {
                    return Err(Error::Schema(format!(
                        "item {:?}: cardinality must be >= 2",
                        item.item_id
                    )));
                }
            }
        }
    }
    if weights != 1 {
        return Err(Error::Schema(format!(
            "schema must declare exactly one weight column, found {weights}"
        )));
    }
    Ok(())
}

/// Respondents x items matrix of category codes plus weights. Immutable
/// after construction; all analysis routines take `&SurveyDataset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyDataset {
    pub ids: Vec<String>,
    /// Categorical items only; the weight column lives in `weights`.
    pub items: Vec<ItemSchema>,
    /// Row-major n x J codes; `MISSING` (0) marks a missing value.
    values: Vec<u8>,
    pub weights: Vec<f64>,
}

impl SurveyDataset {
    /// Builds a dataset from parts, enforcing the code-range and weight
    /// invariants. `ids` may be empty, in which case 1-based row numbers
    /// are used.
    pub fn new(
        ids: Vec<String>,
        items: Vec<ItemSchema>,
        values: Vec<u8>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = weights.len();
        let j = items.len();
        if n == 0 {
            return Err(Error::Invalid("dataset must have n > 0 rows".into()));
        }
        if values.len() != n * j {
            return Err(Error::Invalid(format!(
                "value matrix has {} entries, expected {}",
                values.len(),
                n * j
            )));
        }
        if items.iter().any(|it| it.role == Role::Weight) {
            return Err(Error::Invalid("weight column must not appear among items".into()));
        }
        let ids = if ids.is_empty() {
            (1..=n).map(|i| i.to_string()).collect()
        } else if ids.len() == n {
            ids
        } else {
            return Err(Error::Invalid("ids length differs from weights length".into()));
        };
        for (row, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::BadWeight { row: row + 1 });
            }
        }
        for (col, item) in items.iter().enumerate() {
            for row in 0..n {
                let v = values[row * j + col];
                if v != MISSING && !(1..=item.cardinality).contains(&v) {
                    return Err(Error::OutOfRange {
                        row: row + 1,
                        item: item.item_id.clone(),
                        code: v as i64,
                        cardinality: item.cardinality,
                    });
                }
            }
        }
        Ok(SurveyDataset { ids, items, values, weights })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn value(&self, row: usize, col: usize) -> Option<u8> {
        match self.values[row * self.items.len() + col] {
            MISSING => None,
            v => Some(v),
        }
    }

    pub fn raw_row(&self, row: usize) -> &[u8] {
        let j = self.items.len();
        &self.values[row * j..(row + 1) * j]
    }

    pub fn item_index(&self, item_id: &str) -> Result<usize> {
        self.items
            .iter()
            .position(|it| it.item_id == item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))
    }

    pub fn item(&self, col: usize) -> &ItemSchema {
        &self.items[col]
    }

    pub fn items_with_role(&self, role: Role) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn indicator_ids(&self) -> Vec<String> {
        self.items_with_role(Role::Indicator)
            .into_iter()
            .map(|i| self.items[i].item_id.clone())
            .collect()
    }

    /// Row subset preserving order; used by listwise deletion, bootstrap
    /// resampling, and subgroup splits.
    pub fn subset_rows(&self, rows: &[usize]) -> SurveyDataset {
        let j = self.items.len();
        let mut values = Vec::with_capacity(rows.len() * j);
        for &r in rows {
            values.extend_from_slice(&self.values[r * j..(r + 1) * j]);
        }
        SurveyDataset {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            items: self.items.clone(),
            values,
            weights: rows.iter().map(|&r| self.weights[r]).collect(),
        }
    }

    /// Column subset preserving order; used by leave-one-out refits.
    pub fn subset_items(&self, cols: &[usize]) -> SurveyDataset {
        let j = self.items.len();
        let n = self.n();
        let mut values = Vec::with_capacity(n * cols.len());
        for r in 0..n {
            for &c in cols {
                values.push(self.values[r * j + c]);
            }
        }
        SurveyDataset {
            ids: self.ids.clone(),
            items: cols.iter().map(|&c| self.items[c].clone()).collect(),
            values,
            weights: self.weights.clone(),
        }
    }

    /// Complete-row codes for the given columns, or None if any is missing.
    pub fn complete_codes(&self, row: usize, cols: &[usize]) -> Option<Vec<u8>> {
        let j = self.items.len();
        let mut out = Vec::with_capacity(cols.len());
        for &c in cols {
            match self.values[row * j + c] {
                MISSING => return None,
                v => out.push(v),
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeletionReport {
    pub n_before: usize,
    pub n_after: usize,
    pub retention_rate: f64,
    pub per_item_missing: BTreeMap<String, usize>,
}

/// Drops every row with a missing value on any of the listed items.
pub fn listwise_delete(
    dataset: &SurveyDataset,
    item_ids: &[String],
) -> Result<(SurveyDataset, DeletionReport)> {
    let cols: Vec<usize> = item_ids
        .iter()
        .map(|id| dataset.item_index(id))
        .collect::<Result<_>>()?;
    let mut per_item_missing: BTreeMap<String, usize> =
        item_ids.iter().map(|id| (id.clone(), 0)).collect();
    let mut keep = Vec::with_capacity(dataset.n());
    for row in 0..dataset.n() {
        let mut complete = true;
        for (&c, id) in cols.iter().zip(item_ids) {
            if dataset.value(row, c).is_none() {
                *per_item_missing.get_mut(id).unwrap() += 1;
                complete = false;
            }
        }
        if complete {
            keep.push(row);
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyAfterDeletion);
    }
    let n_before = dataset.n();
    let n_after = keep.len();
    Ok((
        dataset.subset_rows(&keep),
        DeletionReport {
            n_before,
            n_after,
            retention_rate: n_after as f64 / n_before as f64,
            per_item_missing,
        },
    ))
}

/// Kish effective sample size and design effect:
/// n_eff = (Σw)² / Σw², deff = n / n_eff.
pub fn kish_effective_n(weights: &[f64]) -> Result<(f64, f64)> {
    if weights.is_empty() {
        return Err(Error::Invalid("empty weight list".into()));
    }
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    let n_eff = sum * sum / sum_sq;
    Ok((n_eff, weights.len() as f64 / n_eff))
}

/// Pairwise bias-corrected weighted Cramér's V with design-corrected
/// p-values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CramersVTable {
    pub items: Vec<String>,
    /// Symmetric matrix of V; diagonal is 1 by definition.
    pub v: Vec<Vec<f64>>,
    /// First-order design-corrected chi-square p-values (diagonal 0).
    pub p: Vec<Vec<f64>>,
}

/// Computes the matrix of pairwise bias-corrected weighted Cramér's V.
///
/// Per pair, rows complete on both items enter a weighted contingency
/// table (weights scaled to mean 1). The bias correction subtracts
/// (r-1)(c-1)/(ñ-1) under the square root, truncated at 0, with ñ the
/// Kish effective n of the pair's weights, and shrinks the row/column
/// counts the same way. The p-value divides the weighted X² by the
/// pair's design effect before the chi-square reference (first-order
/// design correction).
pub fn cramers_v_matrix(dataset: &SurveyDataset, item_ids: &[String]) -> Result<CramersVTable> {
    if item_ids.len() < 2 {
        return Err(Error::Invalid("need at least 2 items".into()));
    }
    let cols: Vec<usize> = item_ids
        .iter()
        .map(|id| dataset.item_index(id))
        .collect::<Result<_>>()?;
    // Every listed item must show at least 2 categories somewhere.
    for (&c, id) in cols.iter().zip(item_ids) {
        let mut seen = BTreeSet::new();
        for row in 0..dataset.n() {
            if let Some(v) = dataset.value(row, c) {
                seen.insert(v);
            }
        }
        if seen.len() < 2 {
            return Err(Error::DegenerateItem(id.clone()));
        }
    }
    let m = cols.len();
    let mut v = vec![vec![1.0f64; m]; m];
    let mut p = vec![vec![0.0f64; m]; m];
    for a in 0..m {
        for b in (a + 1)..m {
            let (vab, pab) = pair_cramers_v(dataset, cols[a], cols[b])
                .map_err(|e| match e {
                    Error::DegenerateItem(_) => Error::DegenerateItem(format!(
                        "{} x {} (pairwise-complete subset)",
                        item_ids[a], item_ids[b]
                    )),
                    other => other,
                })?;
            v[a][b] = vab;
            v[b][a] = vab;
            p[a][b] = pab;
            p[b][a] = pab;
        }
    }
    Ok(CramersVTable { items: item_ids.to_vec(), v, p })
}

fn pair_cramers_v(dataset: &SurveyDataset, ca: usize, cb: usize) -> Result<(f64, f64)> {
    let ra = dataset.item(ca).cardinality as usize;
    let rb = dataset.item(cb).cardinality as usize;
    let mut table = vec![0.0f64; ra * rb];
    let mut raw_weights = Vec::new();
    for row in 0..dataset.n() {
        if let (Some(va), Some(vb)) = (dataset.value(row, ca), dataset.value(row, cb)) {
            raw_weights.push((row, va as usize - 1, vb as usize - 1));
        }
    }
    let n_pair = raw_weights.len();
    if n_pair == 0 {
        return Err(Error::Invalid("no pairwise-complete rows".into()));
    }
    let w_sum: f64 = raw_weights.iter().map(|&(r, _, _)| dataset.weights[r]).sum();
    let scale = n_pair as f64 / w_sum;
    let mut w_sq = 0.0;
    for &(r, ia, ib) in &raw_weights {
        let w = dataset.weights[r] * scale;
        table[ia * rb + ib] += w;
        w_sq += w * w;
    }
    let n = n_pair as f64;
    let n_eff = n * n / w_sq;
    let deff = n / n_eff;

    let row_m: Vec<f64> = (0..ra).map(|i| table[i * rb..(i + 1) * rb].iter().sum()).collect();
    let col_m: Vec<f64> = (0..rb).map(|j| (0..ra).map(|i| table[i * rb + j]).sum()).collect();
    let obs_rows = row_m.iter().filter(|&&x| x > 0.0).count();
    let obs_cols = col_m.iter().filter(|&&x| x > 0.0).count();
    if obs_rows < 2 || obs_cols < 2 {
        return Err(Error::DegenerateItem(String::new()));
    }

    let mut x2 = 0.0;
    for i in 0..ra {
        for j in 0..rb {
            let e = row_m[i] * col_m[j] / n;
            if e > 0.0 {
                let d = table[i * rb + j] - e;
                x2 += d * d / e;
            }
        }
    }
    let phi2 = x2 / n;
    let r = obs_rows as f64;
    let c = obs_cols as f64;
    let bias = (r - 1.0) * (c - 1.0) / (n_eff - 1.0);
    let phi2_corr = (phi2 - bias).max(0.0);
    let r_corr = r - (r - 1.0) * (r - 1.0) / (n_eff - 1.0);
    let c_corr = c - (c - 1.0) * (c - 1.0) / (n_eff - 1.0);
    let denom = (r_corr - 1.0).min(c_corr - 1.0);
    let v = if denom > 0.0 { (phi2_corr / denom).sqrt() } else { 0.0 };

    let df = (obs_rows - 1) as f64 * (obs_cols - 1) as f64;
    let p = chi_sq_sf(x2 / deff, df);
    Ok((v, p))
}

pub(crate) fn chi_sq_sf(x: f64, df: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("df > 0");
    (1.0 - dist.cdf(x)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsenessReport {
    pub theoretical_cells: u64,
    pub observed_patterns: u64,
    pub sparseness_ratio: f64,
}

/// Counts distinct complete response vectors on the listed items against
/// the Π_j R_j theoretical cross-classification cells.
pub fn sparseness_report(dataset: &SurveyDataset, item_ids: &[String]) -> Result<SparsenessReport> {
    if item_ids.is_empty() {
        return Err(Error::Invalid("need at least 1 item".into()));
    }
    let cols: Vec<usize> = item_ids
        .iter()
        .map(|id| dataset.item_index(id))
        .collect::<Result<_>>()?;
    let mut cells: u64 = 1;
    for &c in &cols {
        cells = cells
            .checked_mul(dataset.item(c).cardinality as u64)
            .ok_or_else(|| Error::Invalid("theoretical cell count overflows u64".into()))?;
    }
    let mut patterns: BTreeSet<Vec<u8>> = BTreeSet::new();
    for row in 0..dataset.n() {
        if let Some(codes) = dataset.complete_codes(row, &cols) {
            patterns.insert(codes);
        }
    }
    let observed = patterns.len() as u64;
    Ok(SparsenessReport {
        theoretical_cells: cells,
        observed_patterns: observed,
        sparseness_ratio: 1.0 - observed as f64 / cells as f64,
    })
}

/// Reads a CSV export against the schema using the default missing code.
pub fn load_dataset(path: &Path, schema: &[ItemSchema]) -> Result<SurveyDataset> {
    load_dataset_with(path, schema, Some(DEFAULT_MISSING_CODE))
}

/// Reads a CSV export. The file needs a header row, an `id` column, one
/// column per schema item, and decimal values in the weight column.
/// Empty fields and `missing_code` both mark missing values.
/// Reverse-coded items are flipped on load (r -> R_j + 1 - r).
pub fn load_dataset_with(
    path: &Path,
    schema: &[ItemSchema],
    missing_code: Option<i64>,
) -> Result<SurveyDataset> {
    validate_schema(schema)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Config(format!("cannot read header: {e}")))?
        .clone();
    let col_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name:?} not found in {}", path.display())))
    };
    let id_col = col_of("id")?;
    let weight_item = schema
        .iter()
        .find(|it| it.role == Role::Weight)
        .expect("validated: one weight item");
    let weight_col = col_of(&weight_item.item_id)?;
    let items: Vec<ItemSchema> = schema
        .iter()
        .filter(|it| it.role != Role::Weight)
        .cloned()
        .collect();
    let item_cols: Vec<usize> = items
        .iter()
        .map(|it| col_of(&it.item_id))
        .collect::<Result<_>>()?;

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut weights = Vec::new();
    let mut seen_ids: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let get = |col: usize, name: &str| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::MalformedRow {
                row,
                column: name.to_string(),
                message: "missing field".into(),
            })
        };
        let id = get(id_col, "id")?.to_string();
        if id.is_empty() {
            return Err(Error::MalformedRow {
                row,
                column: "id".into(),
                message: "empty id".into(),
            });
        }
        if let Some(first) = seen_ids.insert(id.clone(), row) {
            return Err(Error::DuplicateId { id, first, second: row });
        }
        let w_str = get(weight_col, &weight_item.item_id)?;
        let w: f64 = w_str.parse().map_err(|_| Error::BadWeight { row })?;
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::BadWeight { row });
        }
        for (item, &col) in items.iter().zip(&item_cols) {
            let raw = get(col, &item.item_id)?;
            let code = if raw.is_empty() {
                MISSING
            } else {
                let parsed: i64 = raw.parse().map_err(|_| Error::MalformedRow {
                    row,
                    column: item.item_id.clone(),
                    message: format!("not an integer code: {raw:?}"),
                })?;
                if Some(parsed) == missing_code {
                    MISSING
                } else {
                    if parsed < 1 || parsed > item.cardinality as i64 {
                        return Err(Error::OutOfRange {
                            row,
                            item: item.item_id.clone(),
                            code: parsed,
                            cardinality: item.cardinality,
                        });
                    }
                    let c = parsed as u8;
                    if item.reverse_coded {
                        item.cardinality + 1 - c
                    } else {
                        c
                    }
                }
            };
            values.push(code);
        }
        ids.push(id);
        weights.push(w);
    }
    SurveyDataset::new(ids, items, values, weights)
}

/// Writes a dataset back to the CSV contract (used by `simulate` and by
/// tests); missing values become empty fields.
pub fn write_dataset_csv(
    dataset: &SurveyDataset,
    path: &Path,
    true_class: Option<&[usize]>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| {
        Error::Config(format!("cannot create {}: {e}", path.display()))
    })?;
    let mut header: Vec<String> = vec!["id".into()];
    header.extend(dataset.items.iter().map(|it| it.item_id.clone()));
    header.push("weight".into());
    if true_class.is_some() {
        header.push("true_class".into());
    }
    writer
        .write_record(&header)
        .map_err(|e| Error::Config(e.to_string()))?;
    for row in 0..dataset.n() {
        let mut record: Vec<String> = vec![dataset.ids[row].clone()];
        for col in 0..dataset.n_items() {
            record.push(match dataset.value(row, col) {
                Some(v) => v.to_string(),
                None => String::new(),
            });
        }
        record.push(format!("{}", dataset.weights[row]));
        if let Some(tc) = true_class {
            record.push((tc[row] + 1).to_string());
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::Config(e.to_string()))?;
    Ok(())
}
