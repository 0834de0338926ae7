//! `beamtwin`: dataset generation, training and the experiment studies.
//!
//! Every command writes CSV (and SVG where a plot applies) into `--out` and
//! prints a one-line JSON summary on stdout. Failures print
//! `{"error": kind, "message": text}` on stderr and exit with status 1
//! (2 for usage errors).

use anyhow::{Context, Result};
use beamtwin::channel::Twin;
use beamtwin::codebook::{beam_subset, Codebook};
use beamtwin::exec::Exec;
use beamtwin::harness::{self, ExperimentConfig, SeedModels};
use beamtwin::localizer::gen_dataset;
use beamtwin::measurement::GroundTruth;
use beamtwin::optimizer::{pao_loop, write_trace_csv, OptimizerConfig};
use beamtwin::scene::{Positions, Scene};
use clap::{Parser, Subcommand};
use serde_json::json;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "beamtwin", version, about = "Digital-twin assisted relay beam selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON). Defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scene JSON replacing the built-in reference office.
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    /// Comma-separated sweep sizes, e.g. `3,11,63`.
    #[arg(long, global = true, value_delimiter = ',')]
    s: Option<Vec<usize>>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate twin sweep datasets for each S.
    GenDataset,
    /// Train one localizer per S and seed; report RMSE versus S.
    Train,
    /// Fine-tune a pre-trained localizer on perturbed-twin location data.
    Finetune,
    /// Leave-one-location-out fine-tuning evaluation.
    LooEval,
    /// Run the predict-then-optimize loop once.
    Optimize,
    /// PAO versus the interpolation baseline over S.
    BenchInterp,
    /// SINR versus real-measurement budget for PAO and direct optimisation.
    BenchBudget,
    /// Per-beam received power at true and predicted positions.
    Heatmap,
    /// Position error versus SINR mismatch.
    SinrMismatch,
}

fn exec() -> Exec {
    Exec::Parallel
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(scene) = &cli.scene {
        cfg.scene = Some(scene.clone());
    }
    if let Some(s) = &cli.s {
        cfg.s_list = s.clone();
        if let Some(&first) = s.first() {
            cfg.s = first;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Models for `seed` at `s_list`, reusing `model_dir` files when present.
fn models(cfg: &ExperimentConfig, scene: &Scene, seed: u64, s_list: &[usize]) -> Result<SeedModels> {
    Ok(harness::train_models(cfg, scene, seed, s_list, exec())?)
}

fn bank(cfg: &ExperimentConfig, scene: &Scene) -> Result<Vec<SeedModels>> {
    cfg.seeds.iter().map(|&seed| models(cfg, scene, seed, &cfg.s_list)).collect()
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = build_config(cli)?;
    let scene = cfg.scene()?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let seed = cfg.seeds[0];

    let summary = match cli.command {
        Command::GenDataset => {
            let n = cfg.train_samples + cfg.test_samples;
            let mut files = Vec::new();
            for &seed in &cfg.seeds {
                for &s in &cfg.s_list {
                    let d = gen_dataset(&scene, n, s, harness::sub_seed(seed, 1), exec())?;
                    let name = format!("dataset_s{s}_seed{seed}.csv");
                    d.save(out.join(&name))?;
                    files.push(name);
                }
            }
            json!({ "command": "gen-dataset", "samples": n, "files": files })
        }
        Command::Train => {
            let bank = bank(&cfg, &scene)?;
            for sm in &bank {
                for (s, m) in &sm.models {
                    m.save(out.join(harness::model_file(*s, sm.seed)))?;
                }
            }
            let r = harness::run_rmse_vs_s(&bank, &cfg.s_list)?;
            r.write(&out)?;
            json!({ "command": "train", "mean_rmse_m": r.mean, "non_increasing_5pct": r.non_increasing(0.05) })
        }
        Command::Finetune => {
            let sm = models(&cfg, &scene, seed, &[cfg.s])?;
            let pre = sm.model(cfg.s)?;
            let (tuned, trace) = harness::run_fine_tune(&cfg, &scene, pre, seed, exec())?;
            tuned.save(out.join(format!("model_s{}_seed{seed}_finetuned.json", cfg.s)))?;
            let mut w = String::from("epoch,loss\n");
            for (i, l) in trace.iter().enumerate() {
                w.push_str(&format!("{i},{l:.9}\n"));
            }
            std::fs::write(out.join("finetune_loss.csv"), w)?;
            let frozen = harness::frozen_identical(pre, &tuned, cfg.frozen_layers);
            json!({ "command": "finetune", "s": cfg.s, "seed": seed, "frozen_layers_identical": frozen })
        }
        Command::LooEval => {
            let sm = models(&cfg, &scene, seed, &[cfg.s])?;
            let report = harness::run_loo(&cfg, &scene, sm.model(cfg.s)?, seed, exec())?;
            harness::write_loo(&report, &out)?;
            json!({ "command": "loo-eval", "folds": report.folds.len(), "improved_fraction": report.improved_fraction(), "mean_rmse_m": report.mean_rmse })
        }
        Command::Optimize => {
            let sm = models(&cfg, &scene, seed, &[cfg.s])?;
            let placement = harness::eval_placements(&scene, seed, 1).remove(0);
            let (truth_scene, noise) = cfg.truth_scene(&scene);
            let truth = GroundTruth::at(&truth_scene, &placement, noise)?;
            let mut rng = harness::measurement_rng(seed, 0, 7);
            let sweep = truth.sweep(&beam_subset(&Codebook::standard(), cfg.s)?, &mut rng);
            let oc = OptimizerConfig { seed: harness::sub_seed(seed, 8), ..cfg.optimizer(cfg.pao_optimizer) };
            let r = pao_loop(&sweep, sm.model(cfg.s)?, &Twin::new(scene.clone())?, &oc, exec())?;
            write_trace_csv(&r.sinr_trace, create(&out.join("optimize_trace.csv"))?)?;
            json!({
                "command": "optimize",
                "az_deg": r.theta_hat.az_deg(),
                "el_deg": r.theta_hat.el_deg(),
                "predicted_sinr_db": r.predicted_db,
                "true_sinr_db": truth.score_db(r.theta_hat),
                "evaluations": r.evaluations,
                "real_measurements": truth.charges(),
                "positions_used": r.positions_used,
                "positions_true": placement.to_vec(),
            })
        }
        Command::BenchInterp => {
            let bank = bank(&cfg, &scene)?;
            let r = harness::run_interpolation_benchmark(&cfg, &scene, &bank, exec())?;
            r.write(&out)?;
            json!({ "command": "bench-interp", "mean": r.mean })
        }
        Command::BenchBudget => {
            let bank = bank(&cfg, &scene)?;
            let r = harness::run_budget_curves(&cfg, &scene, &bank, 0.5, exec())?;
            r.write(&out)?;
            json!({ "command": "bench-budget", "ratio_ga": r.ratio("ga"), "ratio_gbo": r.ratio("gbo") })
        }
        Command::Heatmap => {
            let sm = models(&cfg, &scene, seed, &[cfg.s])?;
            let layout = cfg.layout.positions(&scene)?;
            // First position of the second row.
            let truth_pos = layout[cfg.layout.per_row.min(layout.len() - 1)].clone();
            let (truth_scene, noise) = cfg.truth_scene(&scene);
            let truth = GroundTruth::at(&truth_scene, &truth_pos, noise)?;
            let mut rng = harness::measurement_rng(seed, 0, 9);
            let sweep = truth.sweep(&beam_subset(&Codebook::standard(), cfg.s)?, &mut rng);
            let predicted = Positions::from_slice(&sm.model(cfg.s)?.forward(&sweep.sinr_db)?)?;
            let cb = Codebook::standard();
            let h = harness::render_heatmap(&Twin::new(scene.clone())?, &truth_pos, &predicted, &cb)?;
            h.write(&out, &cb, &format!("s={} seed={seed}", cfg.s))?;
            json!({ "command": "heatmap", "pearson": h.pearson, "positions_true": truth_pos.to_vec(), "positions_predicted": predicted.to_vec() })
        }
        Command::SinrMismatch => {
            let bank = bank(&cfg, &scene)?;
            let r = harness::run_sinr_mismatch(&scene, &bank, &cfg.s_list, exec())?;
            r.write(&out, 5)?;
            json!({ "command": "sinr-mismatch", "points": r.points.len(), "binned": r.binned(5), "non_decreasing": r.trend_non_decreasing(5) })
        }
    };
    Ok(summary)
}

fn error_json(kind: &str, message: &str) -> String {
    json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", error_json("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = e.downcast_ref::<beamtwin::Error>().map_or("runtime", beamtwin::Error::kind);
            eprintln!("{}", error_json(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
