use std::fs;
use std::path::Path;
use std::process::Command;

use c3dm_cli::{
    ablation_cells, cmd_eval, cmd_gen_data, cmd_train, read_losses, read_metrics, trace_file_name,
    with_summaries, write_metrics, Ablation, EvalOptions, EvalSource, ExperimentConfig, MetricsRow,
    Overrides, LOSS_HEADER, METRICS_HEADER,
};
use c3dm_core::fddp::{Policy, PolicyMode};
use c3dm_core::nn::ModelConfig;
use c3dm_core::scene::{oracle_action, read_dataset, success, SceneSpec};
use c3dm_core::NoiseVariant;

fn small(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        n_demos: 3,
        n_eval_episodes: 2,
        n_seeds: 1,
        output_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.task.image_size = 16;
    cfg.policy.model = ModelConfig {
        conv_channels: vec![4, 4],
        enc_hidden: 16,
        embed_dim: 8,
        time_embed_dim: 8,
        hidden: 16,
        ..ModelConfig::default()
    };
    cfg.train.epochs = 2;
    cfg.train.batch_size = 2;
    cfg.infer.n_steps = 3;
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_c3dm"))
}

#[test]
fn gen_data_writes_episodes_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("a"));
    cfg.n_demos = 5;
    cmd_gen_data(&cfg).unwrap();
    let mut names: Vec<String> = fs::read_dir(&cfg.output_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    assert!(names.contains(&"manifest.json".to_string()));

    let first = fs::read(cfg.output_dir.join("manifest.json")).unwrap();
    cmd_gen_data(&cfg).unwrap();
    assert_eq!(
        first,
        fs::read(cfg.output_dir.join("manifest.json")).unwrap()
    );
    let other = ExperimentConfig {
        output_dir: dir.path().join("b"),
        ..cfg.clone()
    };
    cmd_gen_data(&other).unwrap();
    for name in &names {
        assert_eq!(
            fs::read(cfg.output_dir.join(name)).unwrap(),
            fs::read(other.output_dir.join(name)).unwrap(),
            "{name}"
        );
    }

    let (_, demos) = read_dataset(&cfg.output_dir).unwrap();
    assert_eq!(demos.len(), 5);
    for d in &demos {
        assert!(success(
            &d.scene,
            &d.action,
            cfg.task.tol_pos,
            cfg.task.tol_yaw,
            true
        ));
    }
}

#[test]
fn metrics_csv_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let rows = vec![
        MetricsRow {
            experiment: "drift/zoom/no_drift".into(),
            seed: Some(2),
            mode: "zoom".into(),
            variant: "no_drift".into(),
            n_demos: 30,
            n_steps: 10,
            success_rate: 0.74,
            pick_err_m: 0.1 + 0.2,
            place_err_m: 1.0 / 3.0,
            wall_s: 12.345,
        },
        MetricsRow {
            experiment: "x".into(),
            seed: Some(0),
            mode: "mask".into(),
            variant: "drift".into(),
            n_demos: 5,
            n_steps: 1,
            success_rate: 0.0,
            pick_err_m: 1e-17,
            place_err_m: 5e300,
            wall_s: 0.0,
        },
    ];
    let all = with_summaries(&rows);
    assert_eq!(all.len(), 4);
    assert_eq!(all[2].seed, None);
    write_metrics(&path, &all).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
    assert_eq!(read_metrics(&path).unwrap(), all);
}

#[test]
fn metrics_reader_rejects_foreign_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(read_metrics(&path).is_err());
}

#[test]
fn train_writes_weights_and_losses_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("run"));
    let first = cmd_train(&cfg, None, None).unwrap();
    // 3 demos in batches of 2 for 2 epochs.
    assert_eq!(first.steps, 4);
    let text = fs::read_to_string(&first.losses).unwrap();
    assert_eq!(text.lines().next().unwrap(), LOSS_HEADER);
    let losses = read_losses(&first.losses).unwrap();
    assert_eq!(losses.len(), cfg.train.epochs);
    assert_eq!(losses[1].epoch, 1);
    assert!(cfg.output_dir.join("config.json").exists());
    let policy = Policy::load(cfg.policy_config(), &first.weights).unwrap();
    assert_eq!(policy.step, 4);

    let saved = dir.path().join("first.c3dm");
    fs::copy(&first.weights, &saved).unwrap();
    let second = cmd_train(&cfg, None, Some(&saved)).unwrap();
    assert_eq!(second.steps, 8);
}

#[test]
fn train_reads_a_generated_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = small(&dir.path().join("data"));
    cmd_gen_data(&data).unwrap();
    let run = small(&dir.path().join("run"));
    let a = cmd_train(&run, Some(&data.output_dir), None).unwrap();
    let b = cmd_train(&small(&dir.path().join("run2")), None, None).unwrap();
    // Same seeds, same demos, same result.
    assert_eq!(fs::read(a.weights).unwrap(), fs::read(b.weights).unwrap());
}

#[test]
fn oracle_eval_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.n_eval_episodes = 40;
    cfg.n_seeds = 2;
    let rows = cmd_eval(&cfg, &EvalSource::Oracle, &EvalOptions::default()).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.success_rate, 1.0);
        assert_eq!(r.mode, "oracle");
        assert_eq!(r.pick_err_m, 0.0);
    }
    assert_eq!(read_metrics(&dir.path().join("metrics.csv")).unwrap(), rows);
}

/// Area of the disk of radius `r` at `c` inside the square `[-h, h]²`, by
/// midpoint quadrature over strips.
fn clipped_disk_area(c: [f64; 2], r: f64, h: f64) -> f64 {
    let n = 4000;
    let (lo, hi) = ((c[0] - r).max(-h), (c[0] + r).min(h));
    let dx = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * dx;
            let half = (r * r - (x - c[0]).powi(2)).max(0.0).sqrt();
            ((c[1] + half).min(h) - (c[1] - half).max(-h)).max(0.0) * dx
        })
        .sum()
}

fn random_hit_probability(scene: &SceneSpec, tol: f64, h: f64) -> f64 {
    let area = 4.0 * h * h;
    clipped_disk_area(scene.target().position, tol, h) / area
        * clipped_disk_area(scene.goal().position, tol, h)
        / area
}

#[test]
fn clipped_disk_area_matches_closed_forms() {
    let r: f64 = 0.1;
    let full = std::f64::consts::PI * r * r;
    assert!((clipped_disk_area([0.0, 0.0], r, 0.5) - full).abs() < 1e-6);
    assert!((clipped_disk_area([0.5, 0.0], r, 0.5) - full / 2.0).abs() < 1e-6);
    assert!((clipped_disk_area([0.5, 0.5], r, 0.5) - full / 4.0).abs() < 1e-6);
}

#[test]
fn random_eval_matches_analytic_hit_probability() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.n_eval_episodes = 3000;
    // Wide enough that hits are common; the real tolerance gives p ≈ 3e-5.
    cfg.task.tol_pos = 0.25;
    let rows = cmd_eval(&cfg, &EvalSource::Random, &EvalOptions::default()).unwrap();
    let scenes = c3dm_cli::eval_scenes(&cfg, cfg.seed, false).unwrap();
    let ps: Vec<f64> = scenes
        .iter()
        .map(|s| random_hit_probability(s, cfg.task.tol_pos, cfg.task.table_half))
        .collect();
    let expected: f64 = ps.iter().sum();
    let sd = ps.iter().map(|p| p * (1.0 - p)).sum::<f64>().sqrt();
    let hits = rows[0].success_rate * cfg.n_eval_episodes as f64;
    assert!(expected > 30.0, "expected {expected}");
    assert!(
        (hits - expected).abs() <= 3.0 * sd,
        "{hits} hits vs {expected:.1} ± {sd:.1}"
    );
}

#[test]
fn trace_images_cover_every_step_of_every_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("run"));
    let report = cmd_train(&cfg, None, None).unwrap();
    let rows = cmd_eval(
        &cfg,
        &EvalSource::Weights(report.weights.to_string_lossy().into_owned()),
        &EvalOptions {
            ood: false,
            trace_episodes: 1,
        },
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    let traces = cfg.output_dir.join("traces").join("seed0");
    let count = fs::read_dir(&traces).unwrap().count();
    assert_eq!(count, 2 * cfg.infer.n_steps);
    for sub in 0..2 {
        for step in 0..cfg.infer.n_steps {
            let path = traces.join(trace_file_name(0, sub, step));
            let img = c3dm_core::Image::read_ppm(fs::File::open(&path).unwrap()).unwrap();
            assert_eq!(img.width, 4 * cfg.task.image_size);
        }
    }
    let s = c3dm_cli::eval_scenes(&cfg, 0, false).unwrap();
    assert!(success(
        &s[0],
        &oracle_action(&s[0]),
        cfg.task.tol_pos,
        cfg.task.tol_yaw,
        true
    ));
}

#[test]
fn eval_substitutes_seed_into_weight_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("run"));
    let report = cmd_train(&cfg, None, None).unwrap();
    fs::copy(&report.weights, dir.path().join("w0.c3dm")).unwrap();
    let template = dir
        .path()
        .join("w{seed}.c3dm")
        .to_string_lossy()
        .into_owned();
    let rows = cmd_eval(
        &cfg,
        &EvalSource::Weights(template.clone()),
        &EvalOptions::default(),
    )
    .unwrap();
    assert_eq!(rows[0].seed, Some(0));
    cfg.n_seeds = 2;
    let err = cmd_eval(
        &cfg,
        &EvalSource::Weights(template),
        &EvalOptions::default(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn ablation_matrices_have_the_documented_shape() {
    let base = ExperimentConfig::default();
    let drift = ablation_cells(&base, Ablation::Drift);
    assert_eq!(drift.len(), 4);
    let mut seen = Vec::new();
    for c in &drift {
        assert_eq!(c.cfg.train.mode, c.cfg.infer.mode);
        assert_eq!(c.cfg.train.variant, c.cfg.infer.variant);
        c.cfg.validate().unwrap();
        seen.push((c.cfg.infer.mode, c.cfg.infer.variant));
    }
    for mode in [PolicyMode::Mask, PolicyMode::Zoom] {
        for variant in [NoiseVariant::Drift, NoiseVariant::NoDrift] {
            assert!(seen.contains(&(mode, variant)));
        }
    }

    let steps = ablation_cells(&base, Ablation::Timesteps);
    assert_eq!(steps.len(), 1);
    let ns: Vec<usize> = steps[0].evals.iter().map(|e| e.n_steps).collect();
    assert_eq!(ns, vec![1, 2, 5, 10]);

    let demos: Vec<usize> = ablation_cells(&base, Ablation::Demos)
        .iter()
        .map(|c| c.cfg.n_demos)
        .collect();
    assert_eq!(demos, vec![5, 10, 30, 100]);

    let ood = ablation_cells(&base, Ablation::Ood);
    assert_eq!(ood.len(), 2);
    for c in &ood {
        let flags: Vec<bool> = c.evals.iter().map(|e| e.ood).collect();
        assert_eq!(flags, vec![false, true]);
    }
    assert!("nope".parse::<Ablation>().is_err());
}

#[test]
fn ablate_writes_per_seed_and_summary_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.n_seeds = 2;
    cfg.train.epochs = 1;
    let rows = c3dm_cli::cmd_ablate(&cfg, Ablation::Timesteps, |_| {}).unwrap();
    // 4 evaluations × 2 seeds plus 4 medians.
    assert_eq!(rows.len(), 12);
    assert_eq!(rows.iter().filter(|r| r.seed.is_none()).count(), 4);
    assert_eq!(
        read_metrics(&dir.path().join("ablation_timesteps.csv")).unwrap(),
        rows
    );
    assert!(dir
        .path()
        .join("timesteps_zoom/seed1/weights.c3dm")
        .exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(
        &path,
        r#"{"seed": 4, "n_demos": 7, "infer": {"n_steps": 3}}"#,
    )
    .unwrap();
    let file_only = ExperimentConfig::resolve(Some(&path), &Overrides::default()).unwrap();
    assert_eq!(
        (file_only.seed, file_only.n_demos, file_only.infer.n_steps),
        (4, 7, 3)
    );
    assert_eq!(file_only.n_eval_episodes, 50);

    let o = Overrides {
        seed: Some(9),
        mode: Some(PolicyMode::Mask),
        n_steps: Some(5),
        n_demos: Some(11),
        out: Some(dir.path().join("o")),
    };
    let cfg = ExperimentConfig::resolve(Some(&path), &o).unwrap();
    assert_eq!((cfg.seed, cfg.n_demos, cfg.infer.n_steps), (9, 11, 5));
    assert_eq!(
        (cfg.train.mode, cfg.infer.mode),
        (PolicyMode::Mask, PolicyMode::Mask)
    );
    assert_eq!(cfg.output_dir, dir.path().join("o"));

    let echoed: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"n_seeds": 0}"#).unwrap();
    assert!(ExperimentConfig::resolve(Some(&path), &Overrides::default()).is_err());
    fs::write(&path, r#"{"bogus": 1}"#).unwrap();
    assert!(ExperimentConfig::resolve(Some(&path), &Overrides::default()).is_err());
    fs::write(&path, r#"{"train": {"variant": "drift"}}"#).unwrap();
    assert!(ExperimentConfig::resolve(Some(&path), &Overrides::default()).is_err());
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();

    let ok = bin()
        .args(["eval", "--oracle", "--out", &out])
        .output()
        .unwrap();
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(dir.path().join("metrics.csv").exists());

    let bad_mode = bin()
        .args(["eval", "--oracle", "--mode", "nope"])
        .output()
        .unwrap();
    assert_eq!(bad_mode.status.code(), Some(2));

    let cfg = dir.path().join("c.json");
    fs::write(&cfg, "{ not json").unwrap();
    let bad_file = bin()
        .args(["eval", "--oracle", "--config", &cfg.to_string_lossy()])
        .output()
        .unwrap();
    assert_eq!(bad_file.status.code(), Some(2));

    let missing = dir.path().join("none.c3dm");
    let no_weights = bin()
        .args([
            "eval",
            "--weights",
            &missing.to_string_lossy(),
            "--out",
            &out,
        ])
        .output()
        .unwrap();
    assert_eq!(no_weights.status.code(), Some(4));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let unwritable = bin()
        .args([
            "gen-data",
            "--n-demos",
            "1",
            "--out",
            &blocker.join("sub").to_string_lossy(),
        ])
        .output()
        .unwrap();
    assert_eq!(unwritable.status.code(), Some(4));
}

#[test]
fn divergence_maps_to_its_own_exit_code() {
    let err = c3dm_cli::HarnessError::from(c3dm_core::Error::Divergence {
        step: 3,
        value: f64::NAN,
    });
    assert_eq!(err.exit_code(), 3);
}
