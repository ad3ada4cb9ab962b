//! Command implementations shared by the command-line binary and the
//! integration tests: full training runs, the quadratic-divergence probe,
//! multi-configuration comparison, and the ratio scatter. Each command
//! writes its artifacts under an output directory and returns a summary the
//! caller can inspect, print, or assert against.
//!
//! Every artifact is deterministic given the configuration and seed, so
//! repeated runs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advantage::GroupRollout;
use crate::config::RunConfig;
use crate::divergence::{
    js_generator_check, probe_quadratic_approximation, DivergenceReport, GeneratorCheck,
};
use crate::env::rollout;
use crate::error::{Error, Result};
use crate::metrics::{format_significant, metrics_to_csv};
use crate::objective::{loss_gradient, ratio, LossKind, TokenBatch};
use crate::plot::{Plot, PlotStyle, Series};
use crate::trainer::{
    optimizer_step, run_training, Algorithm, Checkpoint, MetricsRow, OptimizerState,
};

pub const PROBE_CSV_HEADER: &str =
    "scale,js_exact,quadratic_estimate,residual,kl_forward,kl_reverse";
pub const SCATTER_CSV_HEADER: &str = "p_off,ratio";
pub const COMPARE_CSV_HEADER: &str = "label,iteration,cumulative_rollouts,mean_reward";

/// Sentinel written to the comparison table when a run never reaches the
/// reward threshold.
pub const NOT_REACHED: &str = "not reached";

/// Parse an all-numeric CSV produced by this module back into rows,
/// verifying the header matches exactly.
pub fn parse_numeric_csv(text: &str, expected_header: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != expected_header {
        return Err(Error::InvalidArgument(format!(
            "csv header mismatch: expected {expected_header:?}, got {header:?}"
        )));
    }
    let columns = expected_header.split(',').count();
    let mut rows = Vec::new();
    for (number, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::InvalidArgument(format!(
                "csv row {} has {} fields, expected {columns}",
                number + 2,
                fields.len()
            )));
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("unparseable csv field {f:?}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Artifacts of one training run.
#[derive(Debug)]
pub struct TrainArtifacts {
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub config_echo_path: PathBuf,
    pub metrics: Vec<MetricsRow>,
}

/// Run the configured training loop and persist its three artifacts:
/// per-iteration metrics, the final checkpoint, and the effective-config
/// echo that reproduces the run exactly.
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<TrainArtifacts> {
    fs::create_dir_all(out_dir)?;
    let train = config.train_config()?;
    let (task, params) = config.build_task()?;
    let outcome = run_training(&train, &task, params)?;

    let metrics_path = out_dir.join("metrics.csv");
    fs::write(&metrics_path, metrics_to_csv(&outcome.metrics))?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    fs::write(&checkpoint_path, outcome.checkpoint.to_json()?)?;
    let config_echo_path = out_dir.join("effective_config.cfg");
    fs::write(&config_echo_path, config.effective_text())?;

    Ok(TrainArtifacts {
        metrics_path,
        checkpoint_path,
        config_echo_path,
        metrics: outcome.metrics,
    })
}

/// Per-scale medians over the probe trials.
#[derive(Debug, Clone, Copy)]
pub struct ProbeScaleSummary {
    pub scale: f64,
    pub trials: usize,
    pub median_js: f64,
    pub median_quadratic: f64,
    pub median_abs_residual: f64,
}

/// Artifacts and in-memory results of the divergence probe.
#[derive(Debug)]
pub struct ProbeArtifacts {
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
    pub generator: GeneratorCheck,
    pub summaries: Vec<ProbeScaleSummary>,
    /// Every trial as `(scale, report)`, in emission order.
    pub rows: Vec<(f64, DivergenceReport)>,
}

/// Measure how closely the ratio-variance quadratic tracks the exact
/// Jensen–Shannon divergence. Each trial draws a fresh random behavior
/// distribution (support size 3..=12), perturbs it within the given ratio
/// band, and records exact and quadratic divergences; the CSV holds one row
/// per trial and the SVG overlays the per-scale medians.
pub fn cmd_probe(scales: &[f64], trials: usize, seed: u64, out_dir: &Path) -> Result<ProbeArtifacts> {
    if scales.is_empty() {
        return Err(Error::InvalidArgument(
            "probe needs at least one perturbation scale".to_string(),
        ));
    }
    if let Some(&bad) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0 && **s < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "perturbation scales must lie in (0, 1), got {bad}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument(
            "probe needs at least one trial per scale".to_string(),
        ));
    }
    fs::create_dir_all(out_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(scales.len() * trials);
    let mut summaries = Vec::with_capacity(scales.len());
    for &scale in scales {
        let start = rows.len();
        for _ in 0..trials {
            let support = rng.gen_range(3..=12);
            let p_off = random_distribution(support, &mut rng);
            let report = probe_quadratic_approximation(&p_off, scale, 1, &mut rng)?[0];
            rows.push((scale, report));
        }
        let scale_rows = &rows[start..];
        summaries.push(ProbeScaleSummary {
            scale,
            trials,
            median_js: median(scale_rows.iter().map(|(_, r)| r.js_exact)),
            median_quadratic: median(scale_rows.iter().map(|(_, r)| r.quadratic_estimate)),
            median_abs_residual: median(scale_rows.iter().map(|(_, r)| r.residual.abs())),
        });
    }

    let mut csv = String::from(PROBE_CSV_HEADER);
    csv.push('\n');
    for (scale, report) in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_significant(*scale),
            format_significant(report.js_exact),
            format_significant(report.quadratic_estimate),
            format_significant(report.residual),
            format_significant(report.kl_forward),
            format_significant(report.kl_reverse),
        ));
    }
    let csv_path = out_dir.join("probe.csv");
    fs::write(&csv_path, &csv)?;

    let plot = Plot::new(
        "exact divergence vs quadratic estimate (per-scale medians)",
        "perturbation scale",
        "divergence",
        PlotStyle::Lines,
    )
    .with_series(Series::new(
        "exact js (median)",
        summaries.iter().map(|s| (s.scale, s.median_js)).collect(),
    ))
    .with_series(Series::new(
        "quadratic estimate (median)",
        summaries
            .iter()
            .map(|s| (s.scale, s.median_quadratic))
            .collect(),
    ))
    .with_series(Series::new(
        "|residual| (median)",
        summaries
            .iter()
            .map(|s| (s.scale, s.median_abs_residual))
            .collect(),
    ));
    let svg_path = out_dir.join("probe.svg");
    fs::write(&svg_path, plot.render())?;

    Ok(ProbeArtifacts {
        csv_path,
        svg_path,
        generator: js_generator_check(),
        summaries,
        rows,
    })
}

/// One labeled run in a comparison.
#[derive(Debug)]
pub struct CompareRun {
    pub label: String,
    pub metrics: Vec<MetricsRow>,
    /// First `cumulative_rollouts` at which `mean_reward` reached the
    /// threshold, or `None` if it never did.
    pub rollouts_to_threshold: Option<u64>,
}

/// Artifacts of a multi-configuration comparison.
#[derive(Debug)]
pub struct CompareArtifacts {
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
    pub table_path: PathBuf,
    pub threshold: f64,
    pub runs: Vec<CompareRun>,
}

/// Run every labeled configuration on the shared task and seed, then emit a
/// joint long-form CSV, a reward-versus-rollouts SVG, and a
/// rollouts-to-threshold table. Configurations must agree on everything
/// except the algorithm family and its hyperparameters.
pub fn cmd_compare(labeled: &[(String, RunConfig)], out_dir: &Path) -> Result<CompareArtifacts> {
    if labeled.len() < 2 {
        return Err(Error::Config(format!(
            "comparison needs at least 2 configurations, got {}",
            labeled.len()
        )));
    }
    for (label, _) in labeled {
        if label.contains(',') || label.is_empty() {
            return Err(Error::Config(format!(
                "comparison label {label:?} must be nonempty and comma-free"
            )));
        }
    }
    for window in labeled.windows(2) {
        if window[1..].iter().any(|(l, _)| l == &window[0].0) {
            return Err(Error::Config(format!(
                "duplicate comparison label {:?}",
                window[0].0
            )));
        }
    }
    let (first_label, first) = &labeled[0];
    for (label, config) in &labeled[1..] {
        if !first.comparable_basis(config) {
            return Err(Error::Config(format!(
                "configurations {first_label:?} and {label:?} disagree on task or seed and \
                 cannot be compared"
            )));
        }
        if config.reward_threshold != first.reward_threshold {
            return Err(Error::Config(format!(
                "configurations {first_label:?} and {label:?} disagree on reward_threshold"
            )));
        }
    }
    fs::create_dir_all(out_dir)?;

    let threshold = first.reward_threshold;
    let mut runs = Vec::with_capacity(labeled.len());
    for (label, config) in labeled {
        let train = config.train_config()?;
        let (task, params) = config.build_task()?;
        let outcome = run_training(&train, &task, params)?;
        let rollouts_to_threshold = outcome
            .metrics
            .iter()
            .find(|row| row.mean_reward >= threshold)
            .map(|row| row.cumulative_rollouts);
        runs.push(CompareRun {
            label: label.clone(),
            metrics: outcome.metrics,
            rollouts_to_threshold,
        });
    }

    let mut csv = String::from(COMPARE_CSV_HEADER);
    csv.push('\n');
    for run in &runs {
        for row in &run.metrics {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                run.label,
                row.iteration,
                row.cumulative_rollouts,
                format_significant(row.mean_reward),
            ));
        }
    }
    let csv_path = out_dir.join("compare.csv");
    fs::write(&csv_path, &csv)?;

    let mut plot = Plot::new(
        "mean reward vs cumulative rollouts",
        "cumulative rollouts",
        "mean reward",
        PlotStyle::Lines,
    )
    .with_reference_line(threshold, "threshold");
    for run in &runs {
        plot = plot.with_series(Series::new(
            run.label.clone(),
            run.metrics
                .iter()
                .map(|row| (row.cumulative_rollouts as f64, row.mean_reward))
                .collect(),
        ));
    }
    let svg_path = out_dir.join("compare.svg");
    fs::write(&svg_path, plot.render())?;

    let mut table = String::from("label,rollouts_to_threshold\n");
    for run in &runs {
        let cell = match run.rollouts_to_threshold {
            Some(rollouts) => rollouts.to_string(),
            None => NOT_REACHED.to_string(),
        };
        table.push_str(&format!("{},{}\n", run.label, cell));
    }
    let table_path = out_dir.join("threshold_table.csv");
    fs::write(&table_path, &table)?;

    Ok(CompareArtifacts {
        csv_path,
        svg_path,
        table_path,
        threshold,
        runs,
    })
}

/// Artifacts of the ratio scatter.
#[derive(Debug)]
pub struct ScatterArtifacts {
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
    /// One `(p_off, ratio)` point per token, in batch order.
    pub points: Vec<(f64, f64)>,
    /// Population variance of the ratio within the lowest-`p_off` decile.
    pub low_decile_ratio_variance: f64,
    /// Population variance of the ratio within the highest-`p_off` decile.
    pub high_decile_ratio_variance: f64,
}

/// Freeze the checkpoint's policy as the behavior policy, roll out one
/// batch, take `gradient_steps` optimization steps on that same batch, and
/// scatter each token's behavior probability against its post-update density
/// ratio. Zero steps leaves every ratio at exactly 1.
pub fn cmd_ratio_scatter(
    checkpoint: &Checkpoint,
    gradient_steps: usize,
    out_dir: &Path,
) -> Result<ScatterArtifacts> {
    let config = &checkpoint.config;
    config.validate()?;
    fs::create_dir_all(out_dir)?;

    // Dedicated stream, disjoint from the training loop's rollout and
    // replay streams, so scatter draws never alias a resumed run's.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);

    let behavior = checkpoint.params.clone();
    let task = &checkpoint.task;
    let mut groups = Vec::with_capacity(config.prompts_per_iteration);
    for j in 0..config.prompts_per_iteration {
        let prompt_id = j % task.num_prompts();
        let episodes = (0..config.group_size)
            .map(|_| rollout(&behavior, task, prompt_id, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        groups.push(GroupRollout::from_episodes(episodes, config.stability_delta)?);
    }

    let mut params = behavior;
    let mut batch = TokenBatch::from_groups(&params, &groups)?;
    let mut optimizer = OptimizerState::new(config.optimizer, params.logits().len());
    let kind = match config.algorithm {
        Algorithm::Grpo | Algorithm::GrpoCh => LossKind::HardClip {
            eps_low: config.eps_low,
            eps_high: config.eps_high,
        },
        Algorithm::R2vpoOn | Algorithm::R2vpoOff => LossKind::RatioVariance {
            lambda: checkpoint.dual.lambda,
            trust_delta: checkpoint.dual.trust_delta,
        },
    };
    for _ in 0..gradient_steps {
        let gradient = loss_gradient(&batch, &params, kind, config.aggregation)?;
        optimizer_step(&mut params, &gradient, config.step_size, &mut optimizer)?;
        batch.refresh_logp_theta(&params)?;
    }

    let points: Vec<(f64, f64)> = batch
        .logp_off
        .iter()
        .zip(&batch.logp_theta)
        .map(|(&off, &theta)| (off.exp(), ratio(theta, off).0))
        .collect();

    let mut csv = String::from(SCATTER_CSV_HEADER);
    csv.push('\n');
    for (p_off, rho) in &points {
        csv.push_str(&format!(
            "{},{}\n",
            format_significant(*p_off),
            format_significant(*rho)
        ));
    }
    let csv_path = out_dir.join("ratio_scatter.csv");
    fs::write(&csv_path, &csv)?;

    let plot = Plot::new(
        "density ratio vs behavior probability",
        "behavior probability of the sampled token",
        "density ratio",
        PlotStyle::Points,
    )
    .with_series(Series::new("tokens", points.clone()))
    .with_reference_line(1.0 - config.eps_low, "lower clip")
    .with_reference_line(1.0 + config.eps_high, "upper clip");
    let svg_path = out_dir.join("ratio_scatter.svg");
    fs::write(&svg_path, plot.render())?;

    let (low, high) = decile_ratio_variances(&points);
    Ok(ScatterArtifacts {
        csv_path,
        svg_path,
        points,
        low_decile_ratio_variance: low,
        high_decile_ratio_variance: high,
    })
}

/// Softmax of uniform random logits in (-2, 2): a strictly positive random
/// distribution with bounded skew, suitable for ratio-band perturbation.
fn random_distribution<R: Rng + ?Sized>(support: usize, rng: &mut R) -> Vec<f64> {
    let logits: Vec<f64> = (0..support).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut sorted: Vec<f64> = values.collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median over finite values"));
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64
}

/// Variance of the ratio within the lowest and highest behavior-probability
/// deciles (at least one point each).
fn decile_ratio_variances(points: &[(f64, f64)]) -> (f64, f64) {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite probabilities"));
    let n = sorted.len();
    let decile = (n / 10).max(1);
    let low: Vec<f64> = sorted[..decile].iter().map(|p| p.1).collect();
    let high: Vec<f64> = sorted[n - decile..].iter().map(|p| p.1).collect();
    (population_variance(&low), population_variance(&high))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::parse_metrics_csv;
    use crate::trainer::Trainer;
    use tempfile::tempdir;

    fn tiny_config(algorithm: &str, extra: &str) -> RunConfig {
        let text = format!(
            "task = sequence_sum\nvocab_size = 6\nseq_len = 2\ntarget_low = 5\n\
             algorithm = {algorithm}\ngroup_size = 4\nprompts_per_iteration = 2\n\
             iterations = 6\nstep_size = 0.3\nseed = 11\n{extra}"
        );
        RunConfig::from_text(&text, &[]).unwrap()
    }

    #[test]
    fn train_writes_all_three_artifacts_and_csv_round_trips() {
        let dir = tempdir().unwrap();
        let config = tiny_config("grpo", "");
        let artifacts = cmd_train(&config, dir.path()).unwrap();
        assert_eq!(artifacts.metrics.len(), 6);

        let csv = fs::read_to_string(&artifacts.metrics_path).unwrap();
        let parsed = parse_metrics_csv(&csv).unwrap();
        assert_eq!(parsed.len(), 6);

        let checkpoint_text = fs::read_to_string(&artifacts.checkpoint_path).unwrap();
        let checkpoint = Checkpoint::from_json(&checkpoint_text).unwrap();
        assert_eq!(checkpoint.next_iteration, 6);

        let echo = fs::read_to_string(&artifacts.config_echo_path).unwrap();
        let reparsed = RunConfig::from_text(&echo, &[]).unwrap();
        assert_eq!(reparsed.effective_text(), echo);
    }

    #[test]
    fn train_is_byte_deterministic() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let config = tiny_config("r2vpo_off", "utd_ratio = 2\nbuffer_capacity = 3\n");
        let a = cmd_train(&config, dir_a.path()).unwrap();
        let b = cmd_train(&config, dir_b.path()).unwrap();
        assert_eq!(
            fs::read(&a.metrics_path).unwrap(),
            fs::read(&b.metrics_path).unwrap()
        );
        assert_eq!(
            fs::read(&a.checkpoint_path).unwrap(),
            fs::read(&b.checkpoint_path).unwrap()
        );
    }

    #[test]
    fn probe_medians_shrink_with_scale_and_csv_round_trips() {
        let dir = tempdir().unwrap();
        let artifacts = cmd_probe(&[0.1, 0.05, 0.025], 40, 7, dir.path()).unwrap();

        assert!(artifacts.summaries[0].median_abs_residual > artifacts.summaries[1].median_abs_residual);
        assert!(artifacts.summaries[1].median_abs_residual > artifacts.summaries[2].median_abs_residual);
        assert!((artifacts.generator.second_derivative - 0.25).abs() < 1e-6);

        let csv = fs::read_to_string(&artifacts.csv_path).unwrap();
        let rows = parse_numeric_csv(&csv, PROBE_CSV_HEADER).unwrap();
        assert_eq!(rows.len(), 120);
        assert_eq!(artifacts.rows.len(), 120);

        let svg = fs::read_to_string(&artifacts.svg_path).unwrap();
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn probe_is_deterministic_and_rejects_bad_scales() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let a = cmd_probe(&[0.05], 10, 3, dir_a.path()).unwrap();
        let b = cmd_probe(&[0.05], 10, 3, dir_b.path()).unwrap();
        assert_eq!(
            fs::read(&a.csv_path).unwrap(),
            fs::read(&b.csv_path).unwrap()
        );

        assert!(cmd_probe(&[], 10, 3, dir_a.path()).is_err());
        assert!(cmd_probe(&[0.0], 10, 3, dir_a.path()).is_err());
        assert!(cmd_probe(&[1.5], 10, 3, dir_a.path()).is_err());
        assert!(cmd_probe(&[0.05], 0, 3, dir_a.path()).is_err());
    }

    #[test]
    fn compare_emits_joint_outputs_and_threshold_table() {
        let dir = tempdir().unwrap();
        let labeled = vec![
            ("grpo".to_string(), tiny_config("grpo", "reward_threshold = 2.0\n")),
            (
                "ratio_penalty".to_string(),
                tiny_config("r2vpo_off", "reward_threshold = 2.0\n"),
            ),
        ];
        let artifacts = cmd_compare(&labeled, dir.path()).unwrap();

        // Rewards live in [0, 1], so a threshold of 2 is unreachable.
        assert!(artifacts.runs.iter().all(|r| r.rollouts_to_threshold.is_none()));
        let table = fs::read_to_string(&artifacts.table_path).unwrap();
        assert_eq!(table.matches(NOT_REACHED).count(), 2);

        let csv = fs::read_to_string(&artifacts.csv_path).unwrap();
        assert!(csv.starts_with(COMPARE_CSV_HEADER));
        assert_eq!(csv.matches("\ngrpo,").count(), 6);
        assert_eq!(csv.matches("\nratio_penalty,").count(), 6);

        let svg = fs::read_to_string(&artifacts.svg_path).unwrap();
        assert!(svg.contains("threshold"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn compare_identical_configs_produce_identical_curves() {
        let dir = tempdir().unwrap();
        let labeled = vec![
            ("a".to_string(), tiny_config("grpo", "")),
            ("b".to_string(), tiny_config("grpo", "")),
        ];
        let artifacts = cmd_compare(&labeled, dir.path()).unwrap();
        let rewards = |run: &CompareRun| -> Vec<u64> {
            run.metrics.iter().map(|m| m.mean_reward.to_bits()).collect()
        };
        assert_eq!(rewards(&artifacts.runs[0]), rewards(&artifacts.runs[1]));
    }

    #[test]
    fn compare_rejects_mismatched_bases_and_degenerate_input() {
        let dir = tempdir().unwrap();
        let other_seed = RunConfig::from_text(
            "task = sequence_sum\nvocab_size = 6\nseq_len = 2\ntarget_low = 5\n\
             algorithm = grpo\ngroup_size = 4\nprompts_per_iteration = 2\n\
             iterations = 6\nstep_size = 0.3\nseed = 99\n",
            &[],
        )
        .unwrap();
        let mismatched = vec![
            ("a".to_string(), tiny_config("grpo", "")),
            ("b".to_string(), other_seed),
        ];
        let err = cmd_compare(&mismatched, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let single = vec![("a".to_string(), tiny_config("grpo", ""))];
        assert_eq!(cmd_compare(&single, dir.path()).unwrap_err().exit_code(), 2);

        let duplicate = vec![
            ("a".to_string(), tiny_config("grpo", "")),
            ("a".to_string(), tiny_config("r2vpo_off", "")),
        ];
        assert_eq!(cmd_compare(&duplicate, dir.path()).unwrap_err().exit_code(), 2);
    }

    fn trained_checkpoint() -> Checkpoint {
        let dir = tempdir().unwrap();
        let config = RunConfig::from_text(
            "task = sequence_sum\nvocab_size = 8\nseq_len = 2\ntarget_low = 7\n\
             algorithm = grpo\ngroup_size = 8\nprompts_per_iteration = 4\n\
             iterations = 40\nstep_size = 0.4\nseed = 5\n",
            &[],
        )
        .unwrap();
        let artifacts = cmd_train(&config, dir.path()).unwrap();
        let text = fs::read_to_string(&artifacts.checkpoint_path).unwrap();
        Checkpoint::from_json(&text).unwrap()
    }

    #[test]
    fn scatter_with_zero_steps_pins_every_ratio_at_one() {
        let dir = tempdir().unwrap();
        let checkpoint = trained_checkpoint();
        let artifacts = cmd_ratio_scatter(&checkpoint, 0, dir.path()).unwrap();
        assert!(!artifacts.points.is_empty());
        assert!(artifacts.points.iter().all(|&(_, rho)| rho == 1.0));
    }

    #[test]
    fn scatter_after_one_step_disperses_low_probability_tokens_most() {
        let dir = tempdir().unwrap();
        let config = RunConfig::from_text(
            "task = rare_token_bandit\nvocab_size = 16\nlogit_gap = 5\n\
             algorithm = grpo\ngroup_size = 8\nprompts_per_iteration = 16\n\
             iterations = 1\nstep_size = 0.5\nseed = 13\n",
            &[],
        )
        .unwrap();
        let (task, mut params) = config.build_task().unwrap();
        // Concentrate the policy on the rewarded token, as a long successful
        // run would: it holds ~23% of the mass and every other token ~5%.
        for row in params.logits_mut().chunks_mut(16) {
            row[15] = 1.5;
        }
        let trainer = Trainer::new(config.train_config().unwrap(), task, params).unwrap();
        let checkpoint = trainer.checkpoint();
        let artifacts = cmd_ratio_scatter(&checkpoint, 1, dir.path()).unwrap();

        assert_eq!(artifacts.points.len(), 128);
        assert!(artifacts.points.iter().any(|&(_, rho)| rho != 1.0));
        // The highest-probability decile is the rewarded token over and over
        // — one table cell, one ratio — while the rare tokens' ratios spread
        // out with their per-token sampling noise.
        assert!(
            artifacts.low_decile_ratio_variance > artifacts.high_decile_ratio_variance,
            "low-decile variance {} should exceed high-decile variance {}",
            artifacts.low_decile_ratio_variance,
            artifacts.high_decile_ratio_variance
        );
        assert!(artifacts.low_decile_ratio_variance > 0.0);

        let csv = fs::read_to_string(&artifacts.csv_path).unwrap();
        let rows = parse_numeric_csv(&csv, SCATTER_CSV_HEADER).unwrap();
        assert_eq!(rows.len(), artifacts.points.len());

        let svg = fs::read_to_string(&artifacts.svg_path).unwrap();
        assert!(svg.contains("lower clip"));
        assert!(svg.contains("upper clip"));
        assert!(svg.contains("<circle"));
    }
}
