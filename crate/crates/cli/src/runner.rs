//! Training and evaluation runs shared by the subcommands and the
//! acceptance suite.

use std::path::Path;
use std::time::Instant;

use c3dm_core::fddp::{
    run_fddp_per_subaction, train_from, unconstrained_frame, DenoiseTrace, Policy, TrainOutcome,
};
use c3dm_core::geometry::{ActionLayout, ActionVec};
use c3dm_core::scene::{action_errors, sample_scene, success, swap_distractors, Demo, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::metrics::MetricsRow;
use crate::visual::write_trace_images;

/// What produces actions during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Actor<'a> {
    Trained(&'a Policy),
    /// Reads the answer from the scene.
    Oracle,
    /// Uniform over the action bounds.
    Random,
}

impl Actor<'_> {
    pub fn label<'c>(&self, cfg: &'c ExperimentConfig) -> &'c str {
        match self {
            Actor::Trained(_) => cfg.infer.mode.as_str(),
            Actor::Oracle => "oracle",
            Actor::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalStats {
    pub episodes: usize,
    pub successes: usize,
    pub pick_err_sum: f64,
    pub place_err_sum: f64,
}

impl EvalStats {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }
}

pub fn make_demos(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Demo>, HarnessError> {
    cfg.demo_seeds(seed)
        .into_iter()
        .map(|s| Ok(Demo::from_scene(sample_scene(&cfg.task, s)?)))
        .collect()
}

/// Fresh evaluation scenes for run `seed`; `ood` swaps every distractor for
/// a held-out shape and color.
pub fn eval_scenes(
    cfg: &ExperimentConfig,
    seed: u64,
    ood: bool,
) -> Result<Vec<SceneSpec>, HarnessError> {
    cfg.eval_seeds(seed)
        .into_iter()
        .map(|s| {
            let scene = sample_scene(&cfg.task, s)?;
            Ok(if ood {
                swap_distractors(&scene, &cfg.task, s)
            } else {
                scene
            })
        })
        .collect()
}

/// Train from scratch (or continue `resume`) on `demos` with run seed `seed`.
pub fn train_run(
    cfg: &ExperimentConfig,
    seed: u64,
    demos: &[Demo],
    resume: Option<Policy>,
) -> Result<TrainOutcome, HarnessError> {
    let mut train = cfg.train.clone();
    train.seed = seed;
    train.pixel_noise = cfg.task.pixel_noise;
    let policy = match resume {
        Some(p) => p,
        None => Policy::init(cfg.policy_config(), seed)?,
    };
    Ok(train_from(policy, demos, &train)?)
}

fn random_action(
    cfg: &ExperimentConfig,
    scene: &SceneSpec,
    rng: &mut ChaCha8Rng,
) -> Result<ActionVec, HarnessError> {
    let frame = unconstrained_frame(&scene.camera(cfg.task.image_size, cfg.task.image_size));
    let values = cfg
        .infer
        .act_bounds
        .iter()
        .map(|b| rng.random_range(b[0]..b[1]))
        .collect();
    Ok(ActionVec::new(values, ActionLayout::desk(), frame)?.to_global())
}

/// Roll out `actor` on every scene. Trace images are written for the first
/// `trace_episodes` episodes when `trace_dir` is set.
pub fn evaluate(
    cfg: &ExperimentConfig,
    seed: u64,
    actor: Actor<'_>,
    scenes: &[SceneSpec],
    trace_dir: Option<&Path>,
    trace_episodes: usize,
) -> Result<EvalStats, HarnessError> {
    let mut stats = EvalStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (ep, scene) in scenes.iter().enumerate() {
        let (action, traces): (ActionVec, Vec<DenoiseTrace>) = match actor {
            Actor::Oracle => (c3dm_core::scene::oracle_action(scene), Vec::new()),
            Actor::Random => (random_action(cfg, scene, &mut rng)?, Vec::new()),
            Actor::Trained(policy) => {
                let mut infer = cfg.infer.clone();
                infer.seed = seed.wrapping_mul(1_000_003).wrapping_add(ep as u64);
                infer.pixel_noise = cfg.task.pixel_noise;
                run_fddp_per_subaction(policy, &policy.chains(), scene, &infer)?
            }
        };
        if let Some(dir) = trace_dir {
            if ep < trace_episodes && !traces.is_empty() {
                write_trace_images(dir, ep, scene, &traces, cfg.task.image_size)?;
            }
        }
        let err = action_errors(scene, &action)?;
        stats.episodes += 1;
        stats.pick_err_sum += err.pick_m;
        stats.place_err_sum += err.place_m;
        if success(
            scene,
            &action,
            cfg.task.tol_pos,
            cfg.task.tol_yaw,
            cfg.task.check_yaw,
        ) {
            stats.successes += 1;
        }
    }
    Ok(stats)
}

pub fn metrics_row(
    cfg: &ExperimentConfig,
    experiment: &str,
    seed: u64,
    mode: &str,
    stats: &EvalStats,
    wall_s: f64,
) -> MetricsRow {
    let n = stats.episodes.max(1) as f64;
    MetricsRow {
        experiment: experiment.to_string(),
        seed: Some(seed),
        mode: mode.to_string(),
        variant: cfg.infer.variant.as_str().to_string(),
        n_demos: cfg.n_demos,
        n_steps: cfg.infer.n_steps,
        success_rate: stats.success_rate(),
        pick_err_m: stats.pick_err_sum / n,
        place_err_m: stats.place_err_sum / n,
        wall_s,
    }
}

/// Seconds elapsed since `start`, rounded to milliseconds.
pub fn wall_since(start: Instant) -> f64 {
    (start.elapsed().as_secs_f64() * 1000.0).round() / 1000.0
}
