//! Configuration, stage orchestration, and artifact layout.
//!
//! A [`PipelineConfig`] (JSON) plus a seed and an output directory fully
//! determine every artifact; rerunning a stage overwrites its files with
//! identical bytes. Stages are isolated through the filesystem: the
//! distal, regression, and robustness stages read `model.json` rather
//! than refitting, and report a missing-artifact error when it is absent.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    self, cramers_v_matrix, kish_effective_n, listwise_delete, sparseness_report, CramersVTable,
    DeletionReport, ItemSchema, Role, SparsenessReport, SurveyDataset,
};
use crate::distal::{
    bch_class_means, bch_weights, error_matrix, ml_three_step_means, naive_means, pairwise_holm,
    wald_equality_test, ClassificationErrorMatrix, DistalResult, DEFAULT_CONDITION_LIMIT,
};
use crate::error::{Error, Result};
use crate::lca::{
    bivariate_residuals, bootstrap_prevalence_ci, entropy, fit_lca, posteriors, BvrTable,
    EmConfig, LcaModel, PrevalenceCi, DEFAULT_BVR_THRESHOLD,
};
use crate::regress::{
    build_design, fit_mnl, hausman_mcfadden_iia, mcfadden_r2, odds_ratios, vif, Coding,
    CovariateSpec, IiaRow, MnlConfig, MnlFit, OrRow,
};
use crate::report::{self, Meta};
use crate::robustness::{
    estimator_check_with, leave_one_out, start_stability, subgroup_invariance, RobustnessReport,
    DEFAULT_PHI_THRESHOLD,
};
use crate::selection::{self, EnumerationOptions, EnumerationTable};
use crate::simulate::{four_class_benchmark, generate, GeneratorSpec, Simulated};
use crate::rng;

// Stage-specific seed streams derived from the config seed.
const SALT_SIMULATE: u64 = 1;
const SALT_ENUMERATE: u64 = 2;
const SALT_FIT: u64 = 3;
const SALT_PREVALENCE_CI: u64 = 4;
const SALT_LOO: u64 = 5;
const SALT_STABILITY: u64 = 6;
const SALT_INVARIANCE: u64 = 7;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    /// CSV path, resolved relative to the process working directory.
    pub csv: String,
    pub schema: Vec<ItemSchema>,
    #[serde(default = "default_missing_code")]
    pub missing_code: i64,
}

fn default_missing_code() -> i64 {
    dataset::DEFAULT_MISSING_CODE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    /// None uses the built-in four-class benchmark generator.
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupConfig {
    pub item_id: String,
    pub level_a: u8,
    pub level_b: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustnessConfig {
    pub leave_one_out: bool,
    pub start_grid: Vec<usize>,
    pub subgroup: Option<SubgroupConfig>,
    pub estimator_comparison: bool,
    pub phi_threshold: f64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            leave_one_out: true,
            start_grid: vec![100, 500, 1000],
            subgroup: None,
            estimator_comparison: true,
            phi_threshold: DEFAULT_PHI_THRESHOLD,
        }
    }
}

/// Everything a full run needs. Exactly one of `data` / `simulate`
/// supplies the dataset (with both present, the CSV wins and the
/// generator is only used by the simulate stage).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub data: Option<DataConfig>,
    pub simulate: Option<SimulateConfig>,
    pub em: EmConfig,
    pub enumeration: EnumerationOptions,
    /// Class count for the fit stage; None falls back to the persisted
    /// enumeration recommendation.
    pub k: Option<usize>,
    /// 1-based reference class for the covariate model; None picks the
    /// largest class.
    pub reference_class: Option<usize>,
    /// Bootstrap replicates for prevalence intervals; None skips them.
    pub prevalence_bootstrap: Option<usize>,
    pub alpha: f64,
    /// Covariate coding for the regression stage; None dummy-codes every
    /// covariate-role item against its first level.
    pub covariates: Option<Vec<CovariateSpec>>,
    /// Distal outcomes for the BCH stage; None takes every
    /// distal-role item.
    pub distal_outcomes: Option<Vec<String>>,
    pub robustness: RobustnessConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: None,
            simulate: None,
            em: EmConfig::default(),
            enumeration: EnumerationOptions::default(),
            k: None,
            reference_class: None,
            prevalence_bootstrap: None,
            alpha: selection::DEFAULT_ALPHA,
            covariates: None,
            distal_outcomes: None,
            robustness: RobustnessConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn normalized(mut self) -> Self {
        if self.alpha <= 0.0 || self.alpha >= 1.0 {
            self.alpha = selection::DEFAULT_ALPHA;
        }
        self
    }
}

/// Parses a config file, defaulting absent fields.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
    Ok(config.normalized())
}

/// First 16 hex digits of the SHA-256 of the canonical config JSON.
pub fn config_hash(config: &PipelineConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(16);
    for b in &digest[..8] {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Maps error groups to process exit codes: 2 config/input, 3 estimation,
/// 4 tripped diagnostic guard.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::Config(_)
        | Error::MalformedRow { .. }
        | Error::OutOfRange { .. }
        | Error::BadWeight { .. }
        | Error::DuplicateId { .. }
        | Error::UnknownItem(_)
        | Error::Schema(_)
        | Error::MissingArtifact { .. }
        | Error::KTooLarge { .. }
        | Error::Invalid(_) => 2,
        Error::EmptyAfterDeletion
        | Error::Estimation(_)
        | Error::NonConvergence { .. }
        | Error::BootstrapFailures { .. }
        | Error::LikelihoodOrder { .. }
        | Error::EntropyUndefined => 3,
        Error::DegenerateItem(_)
        | Error::IllConditioned(_)
        | Error::EmptyClass { .. }
        | Error::Guard(_)
        | Error::BruteForceGuard(_) => 4,
    }
}

// ---------------------------------------------------------------------
// Artifact payloads
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseArtifact {
    pub n_loaded: usize,
    pub deletion: DeletionReport,
    pub kish_n_eff: f64,
    pub design_effect: f64,
    pub sparseness: SparsenessReport,
    pub cramers_v: CramersVTable,
    pub max_offdiag_v: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub model: LcaModel,
    pub entropy: Option<f64>,
    pub prevalence_ci: Option<PrevalenceCi>,
    pub bvr: BvrTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistalArtifact {
    pub error_matrix: ClassificationErrorMatrix,
    pub condition_number: f64,
    pub average_diagonal: f64,
    pub results: Vec<DistalResult>,
    pub naive: Vec<(String, Vec<f64>)>,
    pub ml_three_step: Vec<(String, Vec<f64>)>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressArtifact {
    pub fit: MnlFit,
    pub odds_ratios: Vec<OrRow>,
    pub mcfadden_r2: f64,
    pub iia: Vec<IiaRow>,
    pub vif: Vec<(String, f64)>,
}

// ---------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------

pub struct Pipeline {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub meta: Meta,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: &Path) -> Result<Pipeline> {
        if config.data.is_none() && config.simulate.is_none() {
            return Err(Error::Config(
                "config must provide either a data source or a simulation block".into(),
            ));
        }
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let meta = Meta {
            config_hash: config_hash(&config),
            seed: config.seed,
        };
        Ok(Pipeline { config, out: out.to_path_buf(), meta })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// The raw dataset before listwise deletion: the configured CSV, or
    /// the deterministic regeneration of the simulated data.
    fn raw_dataset(&self) -> Result<SurveyDataset> {
        if let Some(data) = &self.config.data {
            return dataset::load_dataset_with(
                Path::new(&data.csv),
                &data.schema,
                Some(data.missing_code),
            );
        }
        Ok(self.simulated()?.dataset)
    }

    fn simulated(&self) -> Result<Simulated> {
        let sim = self
            .config
            .simulate
            .as_ref()
            .ok_or_else(|| Error::Config("config has no simulation block".into()))?;
        let spec = sim.generator.clone().unwrap_or_else(four_class_benchmark);
        generate(&spec, sim.n, rng::derive(self.config.seed, SALT_SIMULATE))
    }

    fn indicator_ids(&self, data: &SurveyDataset) -> Result<Vec<String>> {
        let ids = data.indicator_ids();
        if ids.is_empty() {
            return Err(Error::Config("schema declares no indicator items".into()));
        }
        Ok(ids)
    }

    /// The analyzed dataset: listwise-complete on the indicators.
    fn analysis_dataset(&self) -> Result<(SurveyDataset, DeletionReport)> {
        let raw = self.raw_dataset()?;
        let ids = self.indicator_ids(&raw)?;
        listwise_delete(&raw, &ids)
    }

    fn distal_ids(&self, data: &SurveyDataset) -> Vec<String> {
        match &self.config.distal_outcomes {
            Some(ids) => ids.clone(),
            None => data
                .items_with_role(Role::Distal)
                .into_iter()
                .map(|c| data.item(c).item_id.clone())
                .collect(),
        }
    }

    fn covariate_specs(&self, data: &SurveyDataset) -> Vec<CovariateSpec> {
        match &self.config.covariates {
            Some(specs) => specs.clone(),
            None => data
                .items_with_role(Role::Covariate)
                .into_iter()
                .map(|c| CovariateSpec {
                    item_id: data.item(c).item_id.clone(),
                    coding: Coding::Dummy { reference: 1 },
                })
                .collect(),
        }
    }

    fn read_model(&self) -> Result<FitArtifact> {
        let (_, artifact) =
            report::read_json::<FitArtifact>(&self.path("model.json"), "fit")?;
        Ok(artifact)
    }

    // -----------------------------------------------------------------
    // Stages
    // -----------------------------------------------------------------

    /// Generates the synthetic dataset and writes `simulated.csv` (with
    /// the true class as the last column) plus `generator.json`.
    pub fn stage_simulate(&self) -> Result<Simulated> {
        let sim = self.simulated()?;
        let spec = self
            .config
            .simulate
            .as_ref()
            .and_then(|s| s.generator.clone())
            .unwrap_or_else(four_class_benchmark);
        report::write_json(&self.path("generator.json"), &self.meta, &spec)?;
        dataset::write_dataset_csv(
            &sim.dataset,
            &self.path("simulated.csv"),
            Some(&sim.true_class),
        )?;
        Ok(sim)
    }

    /// Data health: deletion accounting, Kish effective n, sparseness,
    /// and the pairwise association matrix — all on the analyzed sample.
    pub fn stage_diagnose(&self) -> Result<DiagnoseArtifact> {
        let raw = self.raw_dataset()?;
        let (analyzed, deletion) = self.analysis_dataset()?;
        let ids = self.indicator_ids(&analyzed)?;
        let (kish_n_eff, design_effect) = kish_effective_n(&analyzed.weights)?;
        let sparseness = sparseness_report(&analyzed, &ids)?;
        let cramers = cramers_v_matrix(&analyzed, &ids)?;
        let mut max_offdiag_v = 0.0f64;
        for a in 0..ids.len() {
            for b in (a + 1)..ids.len() {
                max_offdiag_v = max_offdiag_v.max(cramers.v[a][b]);
            }
        }
        let artifact = DiagnoseArtifact {
            n_loaded: raw.n(),
            deletion,
            kish_n_eff,
            design_effect,
            sparseness,
            cramers_v: cramers,
            max_offdiag_v,
        };
        report::write_json(&self.path("diagnostics.json"), &self.meta, &artifact)?;
        let (header, rows) = report::cramers_rows(&artifact.cramers_v);
        report::write_csv(&self.path("cramers_v.csv"), &self.meta, &header, &rows)?;
        Ok(artifact)
    }

    pub fn stage_enumerate(&self) -> Result<EnumerationTable> {
        let (analyzed, _) = self.analysis_dataset()?;
        let table = selection::enumerate(
            &analyzed,
            &self.config.enumeration,
            &self.config.em,
            rng::derive(self.config.seed, SALT_ENUMERATE),
        )?;
        report::write_json(&self.path("enumeration.json"), &self.meta, &table)?;
        let (header, rows) = report::enumeration_rows(&table);
        report::write_csv(&self.path("enumeration.csv"), &self.meta, &header, &rows)?;
        Ok(table)
    }

    fn chosen_k(&self) -> Result<usize> {
        if let Some(k) = self.config.k {
            return Ok(k);
        }
        let (_, table) = report::read_json::<EnumerationTable>(
            &self.path("enumeration.json"),
            "enumerate",
        )
        .map_err(|e| match e {
            Error::MissingArtifact { path, .. } => Error::MissingArtifact {
                path,
                hint: "set k in the config or run the enumerate stage first".into(),
            },
            other => other,
        })?;
        table.recommended_k.ok_or_else(|| {
            Error::Config(
                "the enumeration made no recommendation; set k in the config".into(),
            )
        })
    }

    /// Fits the chosen class count and writes the model artifact the
    /// downstream stages consume.
    pub fn stage_fit(&self) -> Result<FitArtifact> {
        let (analyzed, _) = self.analysis_dataset()?;
        let k = self.chosen_k()?;
        let model = fit_lca(
            &analyzed,
            k,
            &self.config.em,
            rng::derive(self.config.seed, SALT_FIT),
        )?;
        let ent = if k >= 2 {
            Some(entropy(&posteriors(&model, &analyzed)?, k)?)
        } else {
            None
        };
        let prevalence_ci = match self.config.prevalence_bootstrap {
            Some(b) => Some(bootstrap_prevalence_ci(
                &analyzed,
                &model,
                &self.config.em,
                b,
                rng::derive(self.config.seed, SALT_PREVALENCE_CI),
            )?),
            None => None,
        };
        let bvr = bivariate_residuals(&model, &analyzed, DEFAULT_BVR_THRESHOLD)?;
        let artifact = FitArtifact { model, entropy: ent, prevalence_ci, bvr };
        report::write_json(&self.path("model.json"), &self.meta, &artifact)?;
        let (header, rows) = report::profile_rows(&artifact.model);
        report::write_csv(&self.path("profiles.csv"), &self.meta, &header, &rows)?;
        let (header, rows) =
            report::prevalence_rows(&artifact.model, artifact.prevalence_ci.as_ref());
        report::write_csv(&self.path("prevalences.csv"), &self.meta, &header, &rows)?;
        let (header, rows) = report::bvr_rows(&artifact.bvr);
        report::write_csv(&self.path("bvr.csv"), &self.meta, &header, &rows)?;
        Ok(artifact)
    }

    /// Classification-error-corrected outcome means for every configured
    /// distal outcome, with omnibus and pairwise tests.
    pub fn stage_bch(&self) -> Result<DistalArtifact> {
        let (analyzed, _) = self.analysis_dataset()?;
        let fit = self.read_model()?;
        let outcomes = self.distal_ids(&analyzed);
        if outcomes.is_empty() {
            return Err(Error::Config(
                "no distal outcomes configured and none have the distal role".into(),
            ));
        }
        let post = posteriors(&fit.model, &analyzed)?;
        let d = error_matrix(&post, &analyzed.weights)?;
        let w = bch_weights(&d, DEFAULT_CONDITION_LIMIT)?;
        let mut results = Vec::new();
        let mut naive = Vec::new();
        let mut ml3 = Vec::new();
        for id in &outcomes {
            let mut res = bch_class_means(&analyzed, id, &post, &w)?;
            res.wald = Some(wald_equality_test(&res)?);
            res.pairwise = pairwise_holm(&res, self.config.alpha)?;
            naive.push((id.clone(), naive_means(&analyzed, id, &post.modal, post.k)?));
            ml3.push((id.clone(), ml_three_step_means(&analyzed, id, &post, &d)?));
            results.push(res);
        }
        let artifact = DistalArtifact {
            average_diagonal: d.average_diagonal(),
            condition_number: w.condition_number,
            error_matrix: d,
            results,
            naive,
            ml_three_step: ml3,
            alpha: self.config.alpha,
        };
        report::write_json(&self.path("distal.json"), &self.meta, &artifact)?;
        let (header, rows) =
            report::distal_mean_rows(&artifact.results, &artifact.naive, &artifact.ml_three_step);
        report::write_csv(&self.path("distal_means.csv"), &self.meta, &header, &rows)?;
        let (header, rows) = report::distal_test_rows(&artifact.results);
        report::write_csv(&self.path("distal_tests.csv"), &self.meta, &header, &rows)?;
        Ok(artifact)
    }

    /// Multinomial logit of modal class membership on the covariates.
    pub fn stage_regress(&self) -> Result<RegressArtifact> {
        let (analyzed, _) = self.analysis_dataset()?;
        let fit = self.read_model()?;
        let covs = self.covariate_specs(&analyzed);
        if covs.is_empty() {
            return Err(Error::Config(
                "no covariates configured and none have the covariate role".into(),
            ));
        }
        let post = posteriors(&fit.model, &analyzed)?;
        let design = build_design(&analyzed, &covs)?;
        let classes: Vec<usize> = design.rows.iter().map(|&r| post.modal[r]).collect();
        let reference = match self.config.reference_class {
            Some(r) => {
                if r == 0 || r > fit.model.k {
                    return Err(Error::Config(format!(
                        "reference_class {} outside 1..={}",
                        r, fit.model.k
                    )));
                }
                r - 1
            }
            None => {
                let mut best = 0usize;
                for k in 1..fit.model.k {
                    if fit.model.prevalences[k] > fit.model.prevalences[best] {
                        best = k;
                    }
                }
                best
            }
        };
        let mnl = fit_mnl(&design, &classes, fit.model.k, reference, &MnlConfig::default())?;
        let ors = odds_ratios(&mnl);
        let r2 = mcfadden_r2(&mnl);
        let iia = hausman_mcfadden_iia(&design, &classes, &mnl, &MnlConfig::default())?;
        // Collinearity is undefined with a single non-intercept column;
        // skip the diagnostic rather than fail the stage.
        let vifs = if design.p() >= 3 { vif(&design)? } else { Vec::new() };
        let artifact = RegressArtifact {
            odds_ratios: ors,
            mcfadden_r2: r2,
            iia,
            vif: vifs,
            fit: mnl,
        };
        report::write_json(&self.path("regression.json"), &self.meta, &artifact)?;
        let (header, rows) = report::odds_ratio_rows(&artifact.odds_ratios);
        report::write_csv(&self.path("odds_ratios.csv"), &self.meta, &header, &rows)?;
        Ok(artifact)
    }

    /// The stability checks around the persisted solution.
    pub fn stage_robustness(&self) -> Result<RobustnessReport> {
        let (analyzed, _) = self.analysis_dataset()?;
        let fit = self.read_model()?;
        let k = fit.model.k;
        let seed = self.config.seed;
        let rc = &self.config.robustness;
        let mut rep = RobustnessReport::default();
        if rc.leave_one_out {
            rep.leave_one_out = Some(leave_one_out(
                &analyzed,
                k,
                &self.config.em,
                rng::derive(seed, SALT_LOO),
            )?);
        }
        if !rc.start_grid.is_empty() {
            rep.stability = Some(start_stability(
                &analyzed,
                k,
                &rc.start_grid,
                &self.config.em,
                rng::derive(seed, SALT_STABILITY),
            )?);
        }
        if let Some(sub) = &rc.subgroup {
            rep.invariance.push(subgroup_invariance(
                &analyzed,
                &sub.item_id,
                sub.level_a,
                sub.level_b,
                k,
                &self.config.em,
                rng::derive(seed, SALT_INVARIANCE),
                rc.phi_threshold,
            )?);
        }
        if rc.estimator_comparison {
            let outcomes = self.distal_ids(&analyzed);
            if !outcomes.is_empty() {
                let post = posteriors(&fit.model, &analyzed)?;
                rep.estimator = Some(estimator_check_with(&analyzed, &post, &outcomes)?);
            }
        }
        rep.summarize();
        report::write_json(&self.path("robustness.json"), &self.meta, &rep)?;
        let (header, rows) = report::robustness_rows(&rep);
        report::write_csv(&self.path("robustness.csv"), &self.meta, &header, &rows)?;
        Ok(rep)
    }

    fn try_read<T: DeserializeOwned>(&self, name: &str, stage: &str) -> Result<Option<T>> {
        match report::read_json::<T>(&self.path(name), stage) {
            Ok((_, data)) => Ok(Some(data)),
            Err(Error::MissingArtifact { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Assembles `report.md` from whichever artifacts exist; the fitted
    /// model is the only required one.
    pub fn stage_report(&self) -> Result<PathBuf> {
        let diagnose: Option<DiagnoseArtifact> =
            self.try_read("diagnostics.json", "diagnose")?;
        let enumeration: Option<EnumerationTable> =
            self.try_read("enumeration.json", "enumerate")?;
        let fit: FitArtifact = self.read_model()?;
        let distal: Option<DistalArtifact> = self.try_read("distal.json", "bch")?;
        let regress: Option<RegressArtifact> = self.try_read("regression.json", "regress")?;
        let robust: Option<RobustnessReport> = self.try_read("robustness.json", "robustness")?;

        let mut md = String::from("# Latent class analysis report\n\n");
        md.push_str(&format!(
            "Config hash `{}`, seed {}.\n\n",
            self.meta.config_hash, self.meta.seed
        ));
        if let Some(d) = &diagnose {
            md.push_str(&format!(
                "## Data\n\n{} rows loaded; {} analyzed after listwise deletion on the \
                 indicators ({:.1}% retained). Kish effective n = {:.0} \
                 (design effect {:.2}). The indicators span {} theoretical response \
                 patterns, of which {} are observed (sparseness {:.3}). Largest \
                 pairwise association V = {:.3}.\n\n",
                d.n_loaded,
                d.deletion.n_after,
                100.0 * d.deletion.retention_rate,
                d.kish_n_eff,
                d.design_effect,
                d.sparseness.theoretical_cells,
                d.sparseness.observed_patterns,
                d.sparseness.sparseness_ratio,
                d.max_offdiag_v,
            ));
        }
        if let Some(table) = &enumeration {
            md.push_str(&report::md_enumeration(table));
        }
        md.push_str(&report::md_model(
            &fit.model,
            fit.entropy,
            fit.prevalence_ci.as_ref(),
        ));
        if let Some(d) = &distal {
            md.push_str(&format!(
                "Average classification accuracy (diagonal of D): {:.3}; condition \
                 number of D: {:.1}.\n\n",
                d.average_diagonal, d.condition_number
            ));
            md.push_str(&report::md_distal(&d.results, &d.naive, &d.ml_three_step));
        }
        if let Some(r) = &regress {
            let iia: Vec<(usize, f64, usize, f64)> = r
                .iia
                .iter()
                .map(|row| (row.omitted_class, row.statistic, row.df, row.p))
                .collect();
            md.push_str(&report::md_regression(
                &r.odds_ratios,
                r.mcfadden_r2,
                &iia,
                &r.vif,
                r.fit.reference,
            ));
        }
        if let Some(rb) = &robust {
            md.push_str(&report::md_robustness(rb));
        }
        let path = self.path("report.md");
        fs::write(&path, md).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Runs every stage in dependency order, skipping the distal and
    /// regression stages when the data carry no such items. Returns one
    /// status line per stage.
    pub fn run_all(&self) -> Result<Vec<String>> {
        let mut log = Vec::new();
        if self.config.data.is_none() {
            self.stage_simulate()?;
            log.push("simulate: wrote simulated.csv, generator.json".into());
        }
        self.stage_diagnose()?;
        log.push("diagnose: wrote diagnostics.json, cramers_v.csv".into());
        let table = self.stage_enumerate()?;
        log.push(format!(
            "enumerate: wrote enumeration.json, enumeration.csv (recommended K: {})",
            table
                .recommended_k
                .map_or("none".to_string(), |k| k.to_string())
        ));
        self.stage_fit()?;
        log.push("fit: wrote model.json, profiles.csv, prevalences.csv, bvr.csv".into());
        let (analyzed, _) = self.analysis_dataset()?;
        if !self.distal_ids(&analyzed).is_empty() {
            self.stage_bch()?;
            log.push("bch: wrote distal.json, distal_means.csv, distal_tests.csv".into());
        } else {
            log.push("bch: skipped (no distal outcomes)".into());
        }
        if !self.covariate_specs(&analyzed).is_empty() {
            self.stage_regress()?;
            log.push("regress: wrote regression.json, odds_ratios.csv".into());
        } else {
            log.push("regress: skipped (no covariates)".into());
        }
        self.stage_robustness()?;
        log.push("robustness: wrote robustness.json, robustness.csv".into());
        self.stage_report()?;
        log.push("report: wrote report.md".into());
        Ok(log)
    }
}
