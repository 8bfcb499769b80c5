//! Multi-run experiments: training the same configuration under several
//! loss-component arms and seeds, then scoring each run on held-out target
//! subjects. This is the machinery behind the ablation table.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{CoreError, Result};
use crate::report::{evaluate_run, EvalSplit, MetricsReport};
use crate::train::{run_training, AblationArm};

/// One trained-and-scored run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub checkpoint: String,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub source_val_dice: f64,
    /// Mean foreground Dice on the held-out target split.
    pub target_dice: f64,
    #[serde(with = "crate::jsonf::nan_as_null")]
    pub target_hd: f64,
}

/// One arm of the grid, aggregated over seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmResult {
    pub label: String,
    pub runs: Vec<SeedResult>,
    pub target_dice_mean: f64,
    pub target_dice_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub arms: Vec<ArmResult>,
    pub seeds: Vec<u64>,
    pub config: String,
    pub seconds: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Trains one arm under one seed and evaluates it on the target test split.
pub fn run_arm_seed(
    base: &TrainConfig,
    arm: &AblationArm,
    seed: u64,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<SeedResult> {
    let mut cfg = base.clone();
    arm.apply(&mut cfg);
    cfg.seed = seed;
    let run_dir = out_dir.join(arm.label()).join(format!("seed{seed}"));
    let outcome = run_training(&cfg, data_dir, &run_dir, None)?;
    let report: MetricsReport = evaluate_run(
        &outcome.checkpoint,
        data_dir,
        &run_dir.join("eval"),
        "target",
        EvalSplit::Test,
    )?;
    Ok(SeedResult {
        seed,
        checkpoint: outcome.checkpoint.display().to_string(),
        epochs_run: outcome.epochs_run,
        stopped_early: outcome.stopped_early,
        source_val_dice: outcome.best_val_dice,
        target_dice: report.average_dice,
        target_hd: report.average_hd,
    })
}

/// Runs `arms x seeds` independent trainings (in parallel when asked),
/// writes `ablation.json` and a plain-text table, and returns the outcome.
pub fn run_ablation(
    base: &TrainConfig,
    arms: &[AblationArm],
    seeds: &[u64],
    data_dir: &Path,
    out_dir: &Path,
    parallel: bool,
) -> Result<AblationOutcome> {
    if arms.is_empty() || seeds.is_empty() {
        return Err(CoreError::InvalidArg("need at least one arm and one seed".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let started = std::time::Instant::now();
    let jobs: Vec<(usize, u64)> = (0..arms.len())
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let run = |&(a, s): &(usize, u64)| run_arm_seed(base, &arms[a], s, data_dir, out_dir);
    let results: Vec<SeedResult> = if parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };
    let mut arm_results = Vec::with_capacity(arms.len());
    for (a, arm) in arms.iter().enumerate() {
        let runs: Vec<SeedResult> = jobs
            .iter()
            .zip(&results)
            .filter(|((ja, _), _)| *ja == a)
            .map(|(_, r)| r.clone())
            .collect();
        let dices: Vec<f64> = runs.iter().map(|r| r.target_dice).collect();
        let (mean, std) = mean_std(&dices);
        arm_results.push(ArmResult {
            label: arm.label(),
            runs,
            target_dice_mean: mean,
            target_dice_std: std,
        });
    }
    let outcome = AblationOutcome {
        arms: arm_results,
        seeds: seeds.to_vec(),
        config: base.to_text(),
        seconds: started.elapsed().as_secs_f64(),
    };
    std::fs::write(out_dir.join("ablation.json"), serde_json::to_string_pretty(&outcome)?)?;
    std::fs::write(out_dir.join("ablation.txt"), render_ablation_table(&outcome))?;
    Ok(outcome)
}

/// Fixed-width table, one row per arm.
pub fn render_ablation_table(outcome: &AblationOutcome) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<16} {:>7} {:>18} {:>14}\n",
        "arm", "seeds", "target dice", "source val dice"
    ));
    for arm in &outcome.arms {
        let val_mean = arm.runs.iter().map(|r| r.source_val_dice).sum::<f64>()
            / arm.runs.len().max(1) as f64;
        s.push_str(&format!(
            "{:<16} {:>7} {:>8.4} ± {:<7.4} {:>14.4}\n",
            arm.label,
            arm.runs.len(),
            arm.target_dice_mean,
            arm.target_dice_std,
            val_mean
        ));
    }
    s.push_str(&format!("total wall time: {:.1} s\n", outcome.seconds));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Recipe;
    use crate::dataset::{generate_dataset, GenConfig, SplitCounts};
    use crate::synth::{DomainShiftConfig, PhantomParams};
    use crate::train::parse_grid;

    #[test]
    fn two_arm_micro_ablation_runs_and_orders_rows() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let phantom = PhantomParams { image_size: 40, n_slices: 3, seed: 3, ..Default::default() };
        let gen = GenConfig {
            phantom,
            shift: DomainShiftConfig::default(),
            source: SplitCounts { train: 2, val: 1, test: 0 },
            target: SplitCounts { train: 2, val: 0, test: 1 },
        };
        generate_dataset(&data, &gen).unwrap();

        let mut cfg = TrainConfig::from_recipe(Recipe::Toy);
        cfg.epochs = 1;
        cfg.batch_size = 2;
        cfg.image_size = 32;
        cfg.base_width = 2;
        cfg.n_points = 12;
        cfg.pointnet_width = 4;
        cfg.d_width_div = 32;
        cfg.checkpoint_every = 1;

        let arms = parse_grid("baseline,d2").unwrap();
        let out = dir.path().join("runs");
        let outcome = run_ablation(&cfg, &arms, &[1], &data, &out, false).unwrap();
        assert_eq!(outcome.arms.len(), 2);
        assert_eq!(outcome.arms[0].label, "baseline");
        assert_eq!(outcome.arms[1].label, "d2");
        for arm in &outcome.arms {
            assert_eq!(arm.runs.len(), 1);
            assert!(arm.target_dice_mean.is_finite());
            assert!((0.0..=1.0).contains(&arm.target_dice_mean));
        }
        assert!(out.join("ablation.json").is_file());
        let table = std::fs::read_to_string(out.join("ablation.txt")).unwrap();
        assert!(table.contains("baseline") && table.contains("d2"));
        assert!(out.join("baseline/seed1/eval/report.json").is_file());
        assert!(out.join("d2/seed1/checkpoint.safetensors").is_file());
    }
}
