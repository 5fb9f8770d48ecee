//! Bivariate residual diagnostics for local independence.

use serde::{Deserialize, Serialize};

use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};
use crate::lca::LcaModel;

pub const DEFAULT_BVR_THRESHOLD: f64 = 3.84;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BvrPair {
    pub item_a: String,
    pub item_b: String,
    pub df: usize,
    /// Pearson X² of the observed vs model-expected weighted bivariate
    /// table, divided by df.
    pub bvr: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BvrTable {
    pub pairs: Vec<BvrPair>,
    /// Pairs whose expected table had a cell below 1e-12, reported rather
    /// than silently skipped.
    pub errors: Vec<String>,
    pub n_flagged: usize,
}

/// Computes the bivariate residual for every indicator pair under the
/// fitted model: expected cell (ra, rb) mass is
/// Σw · Σ_k π_k ρ[a][ra][k] ρ[b][rb][k].
pub fn bivariate_residuals(
    model: &LcaModel,
    dataset: &SurveyDataset,
    flag_threshold: f64,
) -> Result<BvrTable> {
    let cols: Vec<usize> = model
        .item_ids
        .iter()
        .map(|id| dataset.item_index(id))
        .collect::<Result<_>>()?;
    let j = cols.len();
    if j < 2 {
        return Err(Error::Invalid("need at least 2 indicators".into()));
    }
    let mut pairs = Vec::with_capacity(j * (j - 1) / 2);
    let mut errors = Vec::new();
    for a in 0..j {
        for b in (a + 1)..j {
            let ra = model.cardinalities[a] as usize;
            let rb = model.cardinalities[b] as usize;
            let mut observed = vec![0.0f64; ra * rb];
            let mut total_w = 0.0;
            for row in 0..dataset.n() {
                let (va, vb) = match (dataset.value(row, cols[a]), dataset.value(row, cols[b])) {
                    (Some(va), Some(vb)) => (va as usize - 1, vb as usize - 1),
                    _ => {
                        return Err(Error::Invalid(format!(
                            "row {} has a missing indicator value",
                            row + 1
                        )))
                    }
                };
                observed[va * rb + vb] += dataset.weights[row];
                total_w += dataset.weights[row];
            }
            let mut x2 = 0.0;
            let mut degenerate = false;
            for va in 0..ra {
                for vb in 0..rb {
                    let mut cell = 0.0;
                    for k in 0..model.k {
                        cell += model.prevalences[k]
                            * model.item_probs[a][va][k]
                            * model.item_probs[b][vb][k];
                    }
                    let e = total_w * cell;
                    if e < 1e-12 {
                        degenerate = true;
                        break;
                    }
                    let d = observed[va * rb + vb] - e;
                    x2 += d * d / e;
                }
                if degenerate {
                    break;
                }
            }
            if degenerate {
                errors.push(format!(
                    "{} x {}: expected cell mass below 1e-12",
                    model.item_ids[a], model.item_ids[b]
                ));
                continue;
            }
            let df = (ra - 1) * (rb - 1);
            let bvr = x2 / df as f64;
            pairs.push(BvrPair {
                item_a: model.item_ids[a].clone(),
                item_b: model.item_ids[b].clone(),
                df,
                bvr,
                flagged: bvr > flag_threshold,
            });
        }
    }
    let n_flagged = pairs.iter().filter(|p| p.flagged).count();
    Ok(BvrTable { pairs, errors, n_flagged })
}
