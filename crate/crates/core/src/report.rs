//! Artifact serialization: banner-stamped CSVs, JSON envelopes, and the
//! Markdown summary.
//!
//! Every artifact is a pure function of (config, seed, data), so repeated
//! runs must produce byte-identical files. All floats are formatted with
//! fixed precision, all maps are ordered, and the first line of every CSV
//! records the config hash and seed that produced it.

use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::CramersVTable;
use crate::distal::DistalResult;
use crate::error::{Error, Result};
use crate::lca::{BvrTable, LcaModel, PrevalenceCi};
use crate::regress::OrRow;
use crate::robustness::RobustnessReport;
use crate::selection::EnumerationTable;

/// Provenance stamp carried by every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn banner(&self) -> String {
        format!("# config_hash={}, seed={}", self.config_hash, self.seed)
    }
}

/// Fixed-precision float for CSV cells; deterministic across runs.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes a CSV with the provenance banner as its first line.
pub fn write_csv(
    path: &Path,
    meta: &Meta,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", meta.banner()).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(|e| Error::Config(format!("csv write: {e}")))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::Config(format!("csv write: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    meta: Meta,
    data: T,
}

/// Writes `{ "meta": ..., "data": ... }` pretty-printed with a trailing
/// newline.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, data: &T) -> Result<()> {
    let mut out = create(path)?;
    let envelope = Envelope { meta: meta.clone(), data };
    serde_json::to_writer_pretty(&mut out, &envelope)
        .map_err(|e| Error::Config(format!("json write {}: {e}", path.display())))?;
    writeln!(out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a JSON artifact back; a missing file is reported with the hint
/// naming the stage that produces it.
pub fn read_json<T: DeserializeOwned>(path: &Path, produced_by: &str) -> Result<(Meta, T)> {
    let file = File::open(path).map_err(|_| Error::MissingArtifact {
        path: path.display().to_string(),
        hint: format!("run the {produced_by} stage first"),
    })?;
    let envelope: Envelope<T> = serde_json::from_reader(file)
        .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
    Ok((envelope.meta, envelope.data))
}

// ---------------------------------------------------------------------
// CSV table builders
// ---------------------------------------------------------------------

pub fn enumeration_rows(table: &EnumerationTable) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "k", "loglik", "n_params", "bic", "sabic", "aic", "entropy", "min_share", "blrt_p",
        "vlmr_p", "converged",
    ];
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                num(r.loglik),
                r.n_params.to_string(),
                num(r.bic),
                num(r.sabic),
                num(r.aic),
                // Entropy is undefined at K = 1; shown as 1.000 by the
                // usual table convention.
                r.entropy.map_or("1.000000".to_string(), num),
                num(r.min_share),
                r.blrt_p.map_or(String::new(), num),
                r.vlmr_p.map_or(String::new(), num),
                r.converged.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

pub fn profile_rows(model: &LcaModel) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["item", "category", "class", "probability"];
    let mut rows = Vec::new();
    for (j, id) in model.item_ids.iter().enumerate() {
        for r in 0..model.cardinalities[j] as usize {
            for k in 0..model.k {
                rows.push(vec![
                    id.clone(),
                    (r + 1).to_string(),
                    (k + 1).to_string(),
                    num(model.item_probs[j][r][k]),
                ]);
            }
        }
    }
    (header, rows)
}

pub fn prevalence_rows(
    model: &LcaModel,
    ci: Option<&PrevalenceCi>,
) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["class", "prevalence", "ci_lower", "ci_upper"];
    let rows = (0..model.k)
        .map(|k| {
            vec![
                (k + 1).to_string(),
                num(model.prevalences[k]),
                ci.map_or(String::new(), |c| num(c.lower[k])),
                ci.map_or(String::new(), |c| num(c.upper[k])),
            ]
        })
        .collect();
    (header, rows)
}

pub fn bvr_rows(table: &BvrTable) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["item_a", "item_b", "df", "bvr", "flagged"];
    let rows = table
        .pairs
        .iter()
        .map(|p| {
            vec![
                p.item_a.clone(),
                p.item_b.clone(),
                p.df.to_string(),
                num(p.bvr),
                p.flagged.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

pub fn cramers_rows(table: &CramersVTable) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["item_a", "item_b", "v", "p"];
    let mut rows = Vec::new();
    for a in 0..table.items.len() {
        for b in (a + 1)..table.items.len() {
            rows.push(vec![
                table.items[a].clone(),
                table.items[b].clone(),
                num(table.v[a][b]),
                num(table.p[a][b]),
            ]);
        }
    }
    (header, rows)
}

pub fn distal_mean_rows(
    results: &[DistalResult],
    naive: &[(String, Vec<f64>)],
    ml3: &[(String, Vec<f64>)],
) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["outcome", "class", "bch_mean", "bch_se", "naive_mean", "ml3_mean"];
    let mut rows = Vec::new();
    for (i, res) in results.iter().enumerate() {
        for k in 0..res.class_means.len() {
            rows.push(vec![
                res.outcome_id.clone(),
                (k + 1).to_string(),
                num(res.class_means[k]),
                num(res.std_errors[k]),
                num(naive[i].1[k]),
                num(ml3[i].1[k]),
            ]);
        }
    }
    (header, rows)
}

pub fn distal_test_rows(results: &[DistalResult]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "outcome", "wald_chi2", "df", "p", "pair_a", "pair_b", "diff", "se", "z", "raw_p",
        "reject",
    ];
    let mut rows = Vec::new();
    for res in results {
        let (chi2, df, p) = match &res.wald {
            Some(w) => (num(w.chi2), w.df.to_string(), num(w.p)),
            None => (String::new(), String::new(), String::new()),
        };
        let mut wald_row = vec![res.outcome_id.clone(), chi2, df, p];
        wald_row.resize(header.len(), String::new());
        rows.push(wald_row);
        for pair in &res.pairwise {
            rows.push(vec![
                res.outcome_id.clone(),
                String::new(),
                String::new(),
                String::new(),
                (pair.class_a + 1).to_string(),
                (pair.class_b + 1).to_string(),
                num(pair.estimate),
                num(pair.se),
                num(pair.z),
                num(pair.raw_p),
                pair.reject.to_string(),
            ]);
        }
    }
    (header, rows)
}

pub fn odds_ratio_rows(rows_in: &[OrRow]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["class", "term", "beta", "se", "odds_ratio", "ci_lower", "ci_upper", "p"];
    let rows = rows_in
        .iter()
        .map(|r| {
            vec![
                (r.class + 1).to_string(),
                r.term.clone(),
                num(r.beta),
                num(r.se),
                num(r.odds_ratio),
                num(r.lower),
                num(r.upper),
                num(r.p),
            ]
        })
        .collect();
    (header, rows)
}

pub fn robustness_rows(report: &RobustnessReport) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["check", "pass", "detail"];
    let rows = report
        .verdicts
        .iter()
        .map(|v| vec![v.check.clone(), v.pass.to_string(), v.detail.clone()])
        .collect();
    (header, rows)
}

// ---------------------------------------------------------------------
// Markdown rendering
// ---------------------------------------------------------------------

fn md_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    s.push('|');
    for h in header {
        s.push_str(&format!(" {h} |"));
    }
    s.push('\n');
    s.push('|');
    for _ in header {
        s.push_str(" --- |");
    }
    s.push('\n');
    for row in rows {
        s.push('|');
        for cell in row {
            s.push_str(&format!(" {} |", if cell.is_empty() { "" } else { cell }));
        }
        s.push('\n');
    }
    s
}

fn short(x: f64) -> String {
    format!("{x:.3}")
}

pub fn md_enumeration(table: &EnumerationTable) -> String {
    let mut s = String::from("## Class enumeration\n\n");
    let header = vec![
        "K", "log-lik", "params", "BIC", "SABIC", "entropy", "min share", "BLRT p", "VLMR p",
    ];
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                format!("{:.1}", r.loglik),
                r.n_params.to_string(),
                format!("{:.1}", r.bic),
                format!("{:.1}", r.sabic),
                r.entropy.map_or("1.000".into(), short),
                short(r.min_share),
                r.blrt_p.map_or("—".into(), short),
                r.vlmr_p.map_or("—".into(), short),
            ]
        })
        .collect();
    s.push_str(&md_table(&header, &rows));
    s.push_str("\nEntropy is undefined for K = 1 and shown as 1.000 by convention.\n\n");
    match table.recommended_k {
        Some(k) => s.push_str(&format!("**Recommended class count: {k}.**\n\n")),
        None => s.push_str("**No class count met every criterion; inspect the table.**\n\n"),
    }
    for line in &table.rationale {
        s.push_str(&format!("- {line}\n"));
    }
    s.push('\n');
    s
}

pub fn md_model(model: &LcaModel, entropy: Option<f64>, ci: Option<&PrevalenceCi>) -> String {
    let mut s = format!(
        "## Fitted {}-class model\n\nWeighted log-likelihood {:.1} with {} parameters; \
         classification entropy {}.\n\n",
        model.k,
        model.loglik,
        model.n_params,
        entropy.map_or("n/a".into(), short),
    );
    let header = vec!["class", "prevalence", "95% CI"];
    let rows: Vec<Vec<String>> = (0..model.k)
        .map(|k| {
            vec![
                (k + 1).to_string(),
                short(model.prevalences[k]),
                ci.map_or("—".into(), |c| format!("[{}, {}]", short(c.lower[k]), short(c.upper[k]))),
            ]
        })
        .collect();
    s.push_str(&md_table(&header, &rows));
    if !model.warnings.is_empty() {
        s.push_str("\nWarnings:\n");
        for w in &model.warnings {
            s.push_str(&format!("- {w}\n"));
        }
    }
    s.push('\n');
    s
}

pub fn md_distal(
    results: &[DistalResult],
    naive: &[(String, Vec<f64>)],
    ml3: &[(String, Vec<f64>)],
) -> String {
    let mut s = String::from("## Distal outcomes (BCH-corrected)\n\n");
    for (i, res) in results.iter().enumerate() {
        s.push_str(&format!("### {}\n\n", res.outcome_id));
        let header = vec!["class", "BCH mean (SE)", "naive", "ML3"];
        let rows: Vec<Vec<String>> = (0..res.class_means.len())
            .map(|k| {
                vec![
                    (k + 1).to_string(),
                    format!("{} ({})", short(res.class_means[k]), short(res.std_errors[k])),
                    short(naive[i].1[k]),
                    short(ml3[i].1[k]),
                ]
            })
            .collect();
        s.push_str(&md_table(&header, &rows));
        if let Some(w) = &res.wald {
            s.push_str(&format!(
                "\nEquality Wald test: chi-square {:.2} on {} df, p = {}.\n",
                w.chi2,
                w.df,
                short(w.p)
            ));
        }
        let rejected: Vec<String> = res
            .pairwise
            .iter()
            .filter(|p| p.reject)
            .map(|p| format!("{}-{}", p.class_a + 1, p.class_b + 1))
            .collect();
        if rejected.is_empty() {
            s.push_str("No pairwise difference survives the step-down correction.\n\n");
        } else {
            s.push_str(&format!(
                "Pairwise differences surviving the step-down correction: {}.\n\n",
                rejected.join(", ")
            ));
        }
    }
    s
}

pub fn md_regression(
    or_rows: &[OrRow],
    r2: f64,
    iia: &[(usize, f64, usize, f64)],
    vif: &[(String, f64)],
    reference: usize,
) -> String {
    let mut s = format!(
        "## Covariate model (multinomial logit, reference class {})\n\nMcFadden pseudo-R² = {:.3}.\n\n",
        reference + 1,
        r2
    );
    let header = vec!["class", "term", "OR", "95% CI", "p"];
    let rows: Vec<Vec<String>> = or_rows
        .iter()
        .filter(|r| r.term != "intercept")
        .map(|r| {
            vec![
                (r.class + 1).to_string(),
                r.term.clone(),
                format!("{:.2}", r.odds_ratio),
                format!("[{:.2}, {:.2}]", r.lower, r.upper),
                short(r.p),
            ]
        })
        .collect();
    s.push_str(&md_table(&header, &rows));
    s.push_str("\nIIA checks (Hausman–McFadden, omitting each class):\n");
    for &(class, stat, df, p) in iia {
        s.push_str(&format!(
            "- omit class {}: statistic {:.2} on {} df, p = {}\n",
            class + 1,
            stat,
            df,
            short(p)
        ));
    }
    let max_vif = vif.iter().map(|v| v.1).fold(0.0f64, f64::max);
    s.push_str(&format!("\nLargest variance inflation factor: {max_vif:.2}.\n\n"));
    s
}

pub fn md_robustness(report: &RobustnessReport) -> String {
    let mut s = String::from("## Robustness\n\n");
    let header = vec!["check", "pass", "detail"];
    let rows: Vec<Vec<String>> = report
        .verdicts
        .iter()
        .map(|v| vec![v.check.clone(), v.pass.to_string(), v.detail.clone()])
        .collect();
    s.push_str(&md_table(&header, &rows));
    s.push('\n');
    s
}
