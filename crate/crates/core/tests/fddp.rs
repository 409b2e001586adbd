use std::collections::HashSet;

use c3dm_core::fddp::{
    infer, make_training_example, run_fddp_per_subaction, to_unconstrained, train, train_from,
    ChainMode, IdealDenoiser, InferConfig, Policy, PolicyConfig, PolicyMode, TrainConfig,
};
use c3dm_core::geometry::{renormalize_action, Frame, Window};
use c3dm_core::nn::ModelConfig;
use c3dm_core::scene::{sample_scene, Demo, SceneSpec, TaskConfig};
use c3dm_core::schedules::{denoise_point_estimate, NoiseVariant, ScheduleSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn scene(seed: u64) -> SceneSpec {
    sample_scene(&TaskConfig::default(), seed).unwrap()
}

fn ideal(scene: &SceneSpec, chains: ChainMode, variant: NoiseVariant) -> IdealDenoiser {
    IdealDenoiser {
        target: Demo::from_scene(scene.clone()).action,
        chains: chains.chains(),
        schedule: ScheduleSpec::linear(),
        variant,
        image_h: 64,
        image_w: 64,
    }
}

fn small_policy() -> PolicyConfig {
    PolicyConfig {
        model: ModelConfig {
            image_h: 16,
            image_w: 16,
            conv_channels: vec![4, 4],
            enc_hidden: 16,
            embed_dim: 8,
            time_embed_dim: 8,
            hidden: 16,
            ..ModelConfig::default()
        },
        ..PolicyConfig::default()
    }
}

#[test]
fn ideal_denoiser_recovers_target_exactly() {
    for seed in 0..3 {
        let s = scene(seed);
        let target = Demo::from_scene(s.clone()).action;
        for chains in [ChainMode::PerSubAction, ChainMode::Joint] {
            for variant in [NoiseVariant::NoDrift, NoiseVariant::Drift] {
                let den = ideal(&s, chains, variant);
                for mode in PolicyMode::ALL {
                    for n_steps in [1, 5, 10] {
                        let cfg = InferConfig {
                            n_steps,
                            mode,
                            variant,
                            seed: seed * 31 + n_steps as u64,
                            ..InferConfig::default()
                        };
                        let (a, traces) =
                            run_fddp_per_subaction(&den, &chains.chains(), &s, &cfg).unwrap();
                        for (x, y) in a.values.iter().zip(&target.values) {
                            assert!(
                                (x - y).abs() < 1e-6,
                                "{mode} {variant:?} n={n_steps}: {x} vs {y}"
                            );
                        }
                        assert!(traces.iter().all(|t| t.steps.len() == n_steps));
                    }
                }
            }
        }
    }
}

#[test]
fn single_step_is_one_denoise_of_a_uniform_draw() {
    let s = scene(4);
    let den = ideal(&s, ChainMode::PerSubAction, NoiseVariant::NoDrift);
    let chains = ChainMode::PerSubAction.chains();
    let cfg = InferConfig {
        n_steps: 1,
        mode: PolicyMode::Baseline,
        ..InferConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (_, trace) = infer(&den, 0, &chains[0], &s, &cfg, &mut rng).unwrap();
    assert_eq!(trace.steps.len(), 1);
    let st = &trace.steps[0];
    assert_eq!(st.t, 1.0);
    for (v, b) in st.a_t.values.iter().zip(&cfg.act_bounds[..3]) {
        assert!(*v >= b[0] && *v < b[1]);
    }
    let manual =
        denoise_point_estimate(&st.a_t.values, &st.eps_hat, 1.0, &cfg.schedule, cfg.variant)
            .unwrap();
    for (x, y) in manual.iter().zip(&st.a0.values) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn traces_keep_frames_and_shrink_windows() {
    let s = scene(5);
    let policy = Policy::init(small_policy(), 3).unwrap();
    let chains = policy.chains();
    for mode in PolicyMode::ALL {
        let cfg = InferConfig {
            mode,
            ..InferConfig::default()
        };
        let (_, traces) = run_fddp_per_subaction(&policy, &chains, &s, &cfg).unwrap();
        assert_eq!(traces.len(), 2);
        for tr in &traces {
            assert_eq!(tr.steps.len(), 10);
            for pair in tr.steps.windows(2) {
                assert!(pair[1].window.area() <= pair[0].window.area() + 1e-9);
            }
            for st in &tr.steps {
                let full = Window::full(st.window.parent);
                assert_eq!(st.a_t.frame, Frame::Window(full));
                assert_eq!(st.a0.frame, Frame::Window(full));
                match mode {
                    PolicyMode::Zoom => {
                        assert_eq!(st.a_input.frame, Frame::Window(st.window));
                        let back = renormalize_action(&st.a_input, &full);
                        for (x, y) in back.values.iter().zip(&st.a_t.values) {
                            assert!((x - y).abs() < 1e-12);
                        }
                    }
                    _ => assert_eq!(st.a_input, st.a_t),
                }
                if mode == PolicyMode::Baseline {
                    assert_eq!(st.window, full);
                }
                assert!(st.window.inside_image(1e-9));
            }
        }
    }
}

#[test]
fn chain_order_does_not_change_results() {
    let s = scene(6);
    let policy_cfg = small_policy();
    let policy = Policy::init(policy_cfg, 1).unwrap();
    let chains = policy.chains();
    let cfg = InferConfig {
        mode: PolicyMode::Zoom,
        seed: 77,
        ..InferConfig::default()
    };
    let mut forward = Vec::new();
    for (i, c) in chains.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c.subs[0] as u64 + 1);
        forward.push(infer(&policy, i, c, &s, &cfg, &mut rng).unwrap().0);
    }
    let mut reversed = Vec::new();
    for (i, c) in chains.iter().enumerate().rev() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c.subs[0] as u64 + 1);
        reversed.push(infer(&policy, i, c, &s, &cfg, &mut rng).unwrap().0);
    }
    reversed.reverse();
    assert_eq!(forward, reversed);
    let (a, _) = run_fddp_per_subaction(&policy, &chains, &s, &cfg).unwrap();
    assert_eq!(a.dim(), 6);
    assert_eq!(&a.values[..3], &forward[0].values[..]);
    assert_eq!(&a.values[3..], &forward[1].values[..]);
}

#[test]
fn joint_chain_runs_and_traces() {
    let s = scene(7);
    let cfg = PolicyConfig {
        chains: ChainMode::Joint,
        ..small_policy()
    };
    let policy = Policy::init(cfg, 2).unwrap();
    assert_eq!(policy.models.len(), 1);
    assert_eq!(policy.models[0].config.action_dim, 6);
    let (a, traces) =
        run_fddp_per_subaction(&policy, &policy.chains(), &s, &InferConfig::default()).unwrap();
    assert_eq!(a.dim(), 6);
    assert_eq!(traces.len(), 1);
    assert_eq!(traces[0].steps.len(), 10);
}

#[test]
fn baseline_example_at_horizon_is_unconstrained() {
    let demo = Demo::from_scene(scene(8));
    let chains = ChainMode::PerSubAction.chains();
    let cfg = TrainConfig {
        mode: PolicyMode::Baseline,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let eps = [0.3, -1.0, 0.5];
    let ex = make_training_example(&demo, &chains[0], 1.0, &eps, &cfg, (64, 64), &mut rng).unwrap();
    let camera = demo.scene.camera(64, 64);
    assert_eq!(ex.window, Window::full(camera));
    assert_eq!(
        ex.image,
        c3dm_core::scene::render(&demo.scene, &c3dm_core::scene::View::Full, 64, 64)
    );
    assert_eq!(ex.a_input, ex.a_noisy);
    assert_eq!(ex.eps_target, eps.to_vec());
}

#[test]
fn zoom_example_near_zero_time_centers_on_target() {
    let chains = ChainMode::PerSubAction.chains();
    let cfg = TrainConfig {
        mode: PolicyMode::Zoom,
        jitter: false,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..20 {
        let demo = Demo::from_scene(scene(seed));
        for (c, chain) in chains.iter().enumerate() {
            let ex = make_training_example(&demo, chain, 1e-9, &[0.0; 3], &cfg, (64, 64), &mut rng)
                .unwrap();
            let gt = demo.action.position(c).unwrap();
            let local = ex.window.to_local(gt);
            assert_eq!(ex.a_input.frame, Frame::Window(ex.window));
            assert!((ex.a_input.values[0] - local[0]).abs() < 1e-9);
            assert!((ex.a_input.values[1] - local[1]).abs() < 1e-9);
            // the window only moves off-center when clipped at the image border
            let clipped = ex.window.min_corner().iter().any(|v| v.abs() < 1e-9)
                || ex
                    .window
                    .max_corner()
                    .iter()
                    .any(|v| (v - 64.0).abs() < 1e-9);
            if !clipped {
                assert!(local[0].abs() < 1e-9 && local[1].abs() < 1e-9);
            }
        }
    }
}

#[test]
fn fixation_comes_from_ground_truth() {
    let chains = ChainMode::PerSubAction.chains();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for mode in [PolicyMode::Mask, PolicyMode::Zoom] {
        let cfg = TrainConfig {
            mode,
            ..TrainConfig::default()
        };
        for i in 0..500 {
            let demo = Demo::from_scene(scene(i % 10));
            let c = i as usize % 2;
            let t: f64 = rng.random_range(0.0..1.0);
            let eps: Vec<f64> = (0..3)
                .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let ex = make_training_example(&demo, &chains[c], t, &eps, &cfg, (64, 64), &mut rng)
                .unwrap();
            let camera = demo.scene.camera(64, 64);
            let expect = camera.real_to_img(demo.action.position(c).unwrap());
            assert_eq!(ex.fixation, expect);
            assert!(ex.window.contains_pixel(expect));
            assert!(ex.window.inside_image(1e-9));
        }
    }
}

#[test]
fn zoom_training_covers_more_views_than_demos() {
    let demos: Vec<Demo> = (0..5).map(|s| Demo::from_scene(scene(s))).collect();
    let chains = ChainMode::PerSubAction.chains();
    let cfg = TrainConfig {
        mode: PolicyMode::Zoom,
        k: 2,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut seen = HashSet::new();
    for demo in &demos {
        for _ in 0..cfg.k {
            let t: f64 = rng.random_range(0.0..1.0);
            let ex =
                make_training_example(demo, &chains[0], t, &[0.0; 3], &cfg, (64, 64), &mut rng)
                    .unwrap();
            let key: Vec<u64> = ex
                .window
                .center
                .iter()
                .chain(&ex.window.half_extent)
                .chain(&ex.a_input.values)
                .map(|v| v.to_bits())
                .collect();
            seen.insert(key);
        }
    }
    assert!(seen.len() > demos.len(), "{} distinct views", seen.len());
}

#[test]
fn training_is_deterministic_and_resumable() {
    let demos: Vec<Demo> = (0..3).map(|s| Demo::from_scene(scene(s))).collect();
    let cfg = TrainConfig {
        k: 2,
        batch_size: 2,
        epochs: 2,
        mode: PolicyMode::Mask,
        ..TrainConfig::default()
    };
    let a = train(&demos, small_policy(), &cfg).unwrap();
    let b = train(&demos, small_policy(), &cfg).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.policy.step, 4);
    assert!(a.losses.iter().all(|l| l.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    a.policy.save(&path).unwrap();
    let loaded = Policy::load(small_policy(), &path).unwrap();
    assert_eq!(loaded, a.policy);
    let resumed = train_from(loaded, &demos, &cfg).unwrap();
    assert_eq!(resumed.policy.step, 8);
}

#[test]
fn unconstrained_frame_maps_table_to_unit_square() {
    let s = scene(0);
    let camera = s.camera(64, 64);
    let a = Demo::from_scene(s.clone()).action;
    let u = to_unconstrained(&a, &camera);
    for sub in 0..2 {
        let p = a.position(sub).unwrap();
        let q = u.position(sub).unwrap();
        assert!((q[0] - p[0] / 0.5).abs() < 1e-12 && (q[1] - p[1] / 0.5).abs() < 1e-12);
    }
    assert_eq!(u.values[2], a.values[2]);
}
