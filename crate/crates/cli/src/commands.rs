use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use c3dm_core::fddp::{Policy, PolicyMode, TrainOutcome};
use c3dm_core::scene::{read_dataset, write_dataset, Manifest};
use c3dm_core::NoiseVariant;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::metrics::{summarize, write_losses, write_metrics, MetricsRow};
use crate::runner::{eval_scenes, evaluate, make_demos, metrics_row, train_run, wall_since, Actor};

pub const WEIGHTS_FILE: &str = "weights.c3dm";
pub const LOSS_FILE: &str = "loss.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<Manifest, HarnessError> {
    Ok(write_dataset(
        &cfg.output_dir,
        &cfg.task,
        &cfg.demo_seeds(cfg.seed),
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub weights: PathBuf,
    pub losses: PathBuf,
    pub final_loss: f64,
    pub steps: u64,
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Train one policy for `cfg.seed` on the dataset in `data` (or demos
/// sampled from the task), optionally continuing from saved weights.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    data: Option<&Path>,
    resume: Option<&Path>,
) -> Result<TrainReport, HarnessError> {
    let demos = match data {
        Some(dir) => read_dataset(dir)?.1,
        None => make_demos(cfg, cfg.seed)?,
    };
    let start = match resume {
        Some(path) => Some(Policy::load(cfg.policy_config(), path)?),
        None => None,
    };
    let out = train_run(cfg, cfg.seed, &demos, start)?;
    let dir = &cfg.output_dir;
    let weights = dir.join(WEIGHTS_FILE);
    let losses = dir.join(LOSS_FILE);
    write_text(&dir.join(CONFIG_FILE), &cfg.to_json())?;
    out.policy.save(&weights)?;
    write_losses(&losses, &out.losses)?;
    Ok(TrainReport {
        weights,
        losses,
        final_loss: out.losses.last().copied().unwrap_or(f64::NAN),
        steps: out.policy.step,
    })
}

/// Where evaluation actions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSource {
    /// Weight file; `{seed}` in the path is replaced by each run seed.
    Weights(String),
    Oracle,
    Random,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOptions {
    pub ood: bool,
    /// Episodes per seed that get trace images.
    pub trace_episodes: usize,
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    source: &EvalSource,
    opts: &EvalOptions,
) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut rows = Vec::new();
    for seed in cfg.seeds() {
        let scenes = eval_scenes(cfg, seed, opts.ood)?;
        let policy = match source {
            EvalSource::Weights(template) => {
                let path = PathBuf::from(template.replace("{seed}", &seed.to_string()));
                if !path.exists() {
                    return Err(HarnessError::io(
                        &path,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "weights not found"),
                    ));
                }
                Some(Policy::load(cfg.policy_config(), &path)?)
            }
            EvalSource::Oracle | EvalSource::Random => None,
        };
        let actor = match (source, &policy) {
            (EvalSource::Oracle, _) => Actor::Oracle,
            (EvalSource::Random, _) => Actor::Random,
            (_, Some(p)) => Actor::Trained(p),
            (_, None) => unreachable!("weights are loaded above"),
        };
        let trace_dir = cfg.output_dir.join("traces").join(format!("seed{seed}"));
        let start = Instant::now();
        let stats = evaluate(
            cfg,
            seed,
            actor,
            &scenes,
            Some(&trace_dir),
            opts.trace_episodes,
        )?;
        rows.push(metrics_row(
            cfg,
            &cfg.experiment,
            seed,
            actor.label(cfg),
            &stats,
            wall_since(start),
        ));
    }
    write_metrics(&cfg.output_dir.join(METRICS_FILE), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Drift,
    Timesteps,
    Demos,
    Ood,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Drift => "drift",
            Ablation::Timesteps => "timesteps",
            Ablation::Demos => "demos",
            Ablation::Ood => "ood",
        }
    }
}

impl FromStr for Ablation {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drift" => Ok(Ablation::Drift),
            "timesteps" => Ok(Ablation::Timesteps),
            "demos" => Ok(Ablation::Demos),
            "ood" => Ok(Ablation::Ood),
            _ => Err(HarnessError::Config(format!(
                "unknown ablation `{s}` (drift, timesteps, demos, ood)"
            ))),
        }
    }
}

/// One evaluation of a trained cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSpec {
    pub name: String,
    pub n_steps: usize,
    pub ood: bool,
}

/// One training configuration and the evaluations run on its policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub cfg: ExperimentConfig,
    pub evals: Vec<EvalSpec>,
}

impl Cell {
    pub fn single(name: String, cfg: ExperimentConfig) -> Self {
        let evals = vec![EvalSpec {
            name: name.clone(),
            n_steps: cfg.infer.n_steps,
            ood: false,
        }];
        Cell { name, cfg, evals }
    }
}

pub const TIMESTEP_SWEEP: [usize; 4] = [1, 2, 5, 10];
pub const DEMO_SWEEP: [usize; 4] = [5, 10, 30, 100];

pub fn ablation_cells(base: &ExperimentConfig, which: Ablation) -> Vec<Cell> {
    match which {
        Ablation::Drift => {
            let mut cells = Vec::new();
            for mode in [PolicyMode::Mask, PolicyMode::Zoom] {
                for variant in [NoiseVariant::Drift, NoiseVariant::NoDrift] {
                    let mut cfg = base.clone();
                    cfg.set_mode(mode);
                    cfg.set_variant(variant);
                    cells.push(Cell::single(format!("drift/{mode}/{variant}"), cfg));
                }
            }
            cells
        }
        Ablation::Timesteps => vec![Cell {
            name: format!("timesteps/{}", base.infer.mode),
            cfg: base.clone(),
            evals: TIMESTEP_SWEEP
                .iter()
                .map(|&n| EvalSpec {
                    name: format!("timesteps/n{n}"),
                    n_steps: n,
                    ood: false,
                })
                .collect(),
        }],
        Ablation::Demos => DEMO_SWEEP
            .iter()
            .map(|&n| {
                let mut cfg = base.clone();
                cfg.n_demos = n;
                Cell::single(format!("demos/n{n}"), cfg)
            })
            .collect(),
        Ablation::Ood => [PolicyMode::Zoom, PolicyMode::Baseline]
            .iter()
            .map(|&mode| {
                let mut cfg = base.clone();
                cfg.set_mode(mode);
                let evals = [("seen", false), ("unseen", true)]
                    .iter()
                    .map(|&(tag, ood)| EvalSpec {
                        name: format!("ood/{mode}/{tag}"),
                        n_steps: cfg.infer.n_steps,
                        ood,
                    })
                    .collect();
                Cell {
                    name: format!("ood/{mode}"),
                    cfg,
                    evals,
                }
            })
            .collect(),
    }
}

/// Train `cell` for every seed, saving weights and loss curves under `out`,
/// and evaluate each policy. Rows are ordered by (eval, seed).
pub fn run_cell(
    cell: &Cell,
    out: &Path,
    progress: impl FnMut(&str),
) -> Result<Vec<MetricsRow>, HarnessError> {
    run_cell_observed(cell, out, progress, |_, _| {})
}

/// [`run_cell`], also handing every trained outcome to `trained_hook`.
pub fn run_cell_observed(
    cell: &Cell,
    out: &Path,
    mut progress: impl FnMut(&str),
    mut trained_hook: impl FnMut(u64, &TrainOutcome),
) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut by_eval: Vec<Vec<MetricsRow>> = vec![Vec::new(); cell.evals.len()];
    for seed in cell.cfg.seeds() {
        let dir = out
            .join(cell.name.replace('/', "_"))
            .join(format!("seed{seed}"));
        let demos = make_demos(&cell.cfg, seed)?;
        let start = Instant::now();
        let trained = train_run(&cell.cfg, seed, &demos, None)?;
        let train_s = wall_since(start);
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        trained.policy.save(&dir.join(WEIGHTS_FILE))?;
        write_losses(&dir.join(LOSS_FILE), &trained.losses)?;
        trained_hook(seed, &trained);
        for (i, spec) in cell.evals.iter().enumerate() {
            let mut cfg = cell.cfg.clone();
            cfg.infer.n_steps = spec.n_steps;
            let scenes = eval_scenes(&cfg, seed, spec.ood)?;
            let start = Instant::now();
            let stats = evaluate(
                &cfg,
                seed,
                Actor::Trained(&trained.policy),
                &scenes,
                None,
                0,
            )?;
            let wall = train_s + wall_since(start);
            let row = metrics_row(
                &cfg,
                &spec.name,
                seed,
                cfg.infer.mode.as_str(),
                &stats,
                wall,
            );
            progress(&format!(
                "{} seed {seed}: success {:.2} (train {train_s:.0}s, final loss {:.4})",
                spec.name,
                row.success_rate,
                trained.losses.last().copied().unwrap_or(f64::NAN)
            ));
            by_eval[i].push(row);
        }
    }
    Ok(by_eval.into_iter().flatten().collect())
}

/// All per-seed rows followed by one median row per evaluation.
pub fn with_summaries(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.experiment.as_str()) {
            names.push(&r.experiment);
        }
    }
    let mut out = rows.to_vec();
    for name in names {
        let cell: Vec<MetricsRow> = rows
            .iter()
            .filter(|r| r.experiment == name)
            .cloned()
            .collect();
        out.extend(summarize(&cell));
    }
    out
}

pub fn cmd_ablate(
    cfg: &ExperimentConfig,
    which: Ablation,
    mut progress: impl FnMut(&str),
) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut rows = Vec::new();
    for cell in ablation_cells(cfg, which) {
        rows.extend(run_cell(&cell, &cfg.output_dir, &mut progress)?);
    }
    let rows = with_summaries(&rows);
    write_metrics(
        &cfg.output_dir
            .join(format!("ablation_{}.csv", which.as_str())),
        &rows,
    )?;
    Ok(rows)
}
