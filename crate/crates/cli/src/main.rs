//! `svylca`: staged latent class analysis driver.
//!
//! Every subcommand reads the same JSON config, writes its artifacts into
//! `--out`, and exits 0 on success, 2 on config/input errors, 3 on
//! estimation failures, and 4 on tripped diagnostic guards. Stages touch
//! each other only through artifacts in the output directory, so a failed
//! stage can be rerun in place.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svylca::pipeline::{self, Pipeline, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "svylca",
    version,
    about = "Survey-weighted latent class analysis",
    propagate_version = true
)]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Caps the rayon worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides the largest class count the enumeration considers.
    #[arg(long, global = true)]
    kmax: Option<usize>,

    /// Overrides the bootstrap LRT replicate count (0 disables the test).
    #[arg(long, global = true, value_name = "B")]
    blrt_reps: Option<usize>,

    /// Overrides the number of random EM starts.
    #[arg(long, global = true)]
    starts: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Data health checks: deletion, effective n, associations.
    Diagnose,
    /// Fit K = 1..k_max and recommend a class count.
    Enumerate,
    /// Fit the chosen model and write model.json.
    Fit,
    /// Classification-error-corrected distal outcome means.
    Bch,
    /// Multinomial logit of class membership on covariates.
    Regress,
    /// Stability checks around the fitted solution.
    Robustness,
    /// Generate a synthetic dataset from the configured generator.
    Simulate,
    /// Assemble report.md from the existing artifacts.
    Report,
    /// Run every stage in order.
    All,
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig, svylca::Error> {
    let mut config = match &cli.config {
        Some(path) => pipeline::load_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(kmax) = cli.kmax {
        config.enumeration.k_max = kmax;
    }
    if let Some(b) = cli.blrt_reps {
        config.enumeration.blrt_replicates = if b == 0 { None } else { Some(b) };
    }
    if let Some(starts) = cli.starts {
        config.em.n_starts = starts;
        config.em.n_best = config.em.n_best.min(starts);
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<Vec<String>, svylca::Error> {
    let config = effective_config(cli)?;
    let pipeline = Pipeline::new(config, &cli.out)?;
    match cli.command {
        Command::Diagnose => {
            let d = pipeline.stage_diagnose()?;
            Ok(vec![
                format!(
                    "analyzed {} of {} rows; effective n {:.0} (deff {:.2}); wrote diagnostics.json, cramers_v.csv",
                    d.deletion.n_after, d.n_loaded, d.kish_n_eff, d.design_effect
                ),
            ])
        }
        Command::Enumerate => {
            let table = pipeline.stage_enumerate()?;
            let mut lines = vec![format!(
                "enumerated K = 1..{}; wrote enumeration.json, enumeration.csv",
                table.rows.len()
            )];
            match table.recommended_k {
                Some(k) => lines.push(format!("recommended class count: {k}")),
                None => lines.push("no class count met every criterion".into()),
            }
            Ok(lines)
        }
        Command::Fit => {
            let fit = pipeline.stage_fit()?;
            Ok(vec![format!(
                "fitted {} classes (log-likelihood {:.2}); wrote model.json, profiles.csv, prevalences.csv, bvr.csv",
                fit.model.k, fit.model.loglik
            )])
        }
        Command::Bch => {
            let d = pipeline.stage_bch()?;
            Ok(vec![format!(
                "corrected means for {} outcome(s) (avg classification accuracy {:.3}); wrote distal.json, distal_means.csv, distal_tests.csv",
                d.results.len(),
                d.average_diagonal
            )])
        }
        Command::Regress => {
            let r = pipeline.stage_regress()?;
            Ok(vec![format!(
                "multinomial logit on {} rows (McFadden R2 {:.3}); wrote regression.json, odds_ratios.csv",
                r.fit.n, r.mcfadden_r2
            )])
        }
        Command::Robustness => {
            let rep = pipeline.stage_robustness()?;
            let mut lines = Vec::new();
            for v in &rep.verdicts {
                lines.push(format!(
                    "{}: {} ({})",
                    v.check,
                    if v.pass { "pass" } else { "FAIL" },
                    v.detail
                ));
            }
            lines.push("wrote robustness.json, robustness.csv".into());
            Ok(lines)
        }
        Command::Simulate => {
            let sim = pipeline.stage_simulate()?;
            Ok(vec![format!(
                "generated {} rows x {} items; wrote simulated.csv, generator.json",
                sim.dataset.n(),
                sim.dataset.n_items()
            )])
        }
        Command::Report => {
            let path = pipeline.stage_report()?;
            Ok(vec![format!("wrote {}", path.display())])
        }
        Command::All => pipeline.run_all(),
    }
}

/// Best-effort failure record so batch runs can collect machine-readable
/// errors next to the artifacts.
fn write_error(out: &std::path::Path, err: &svylca::Error, code: i32) {
    if std::fs::create_dir_all(out).is_err() {
        return;
    }
    let body = serde_json::json!({
        "error": err.to_string(),
        "exit_code": code,
    });
    let _ = std::fs::write(
        out.join("error.json"),
        format!("{:#}\n", body),
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        svylca::set_thread_count(threads);
    }
    match run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let code = pipeline::exit_code(&err);
            eprintln!("error: {err}");
            write_error(&cli.out, &err, code);
            ExitCode::from(code as u8)
        }
    }
}
