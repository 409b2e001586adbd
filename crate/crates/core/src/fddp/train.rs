use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    to_unconstrained, window_for, ChainSpec, Observer, Policy, PolicyConfig, PolicyMode,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{fixation_point, renormalize_action, ActionVec, Point2, Window};
use crate::nn::{adam_step, AdamConfig, AdamState, LossGroup, LossSample};
use crate::scene::{Demo, Image};
use crate::schedules::noise;

/// One supervised sample of the denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// Constrained context `O'`.
    pub image: Image,
    /// Noisy action `ã`, unconstrained frame.
    pub a_noisy: ActionVec,
    /// `ã` as fed to the network: window frame in zoom mode, else `ã`.
    pub a_input: ActionVec,
    /// Regression target, unconstrained frame.
    pub eps_target: Vec<f64>,
    pub window: Window,
    /// Fixation pixel, always from the ground-truth action.
    pub fixation: Point2,
}

/// Build the context and noisy action for one `(demo, t, ε)` draw.
pub fn make_training_example<R: Rng + ?Sized>(
    demo: &Demo,
    chain: &ChainSpec,
    t: f64,
    eps: &[f64],
    cfg: &TrainConfig,
    image_size: (usize, usize),
    rng: &mut R,
) -> Result<TrainingExample> {
    let observer = Observer::new(
        &demo.scene,
        image_size.0,
        image_size.1,
        cfg.pixel_noise,
        rng.random(),
    );
    example_with(&observer, demo, chain, t, eps, cfg, rng)
}

fn example_with<R: Rng + ?Sized>(
    observer: &Observer<'_>,
    demo: &Demo,
    chain: &ChainSpec,
    t: f64,
    eps: &[f64],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainingExample> {
    let camera = observer.camera;
    let a = to_unconstrained(&demo.action.select(&chain.subs)?, &camera);
    let a_noisy = a.with_values(noise(cfg.variant, &a.values, t, eps, &cfg.schedule)?)?;
    let fixation = fixation_point(&demo.action.select(&chain.subs)?, chain.fixation, &camera)?;
    let jitter = if cfg.jitter { Some(rng) } else { None };
    let window = window_for(
        cfg.mode,
        fixation,
        t,
        &cfg.schedule,
        cfg.f_min,
        &camera,
        jitter,
    )?;
    let image = observer.context(cfg.mode, &window)?;
    let a_input = match cfg.mode {
        PolicyMode::Zoom => renormalize_action(&a_noisy, &window),
        PolicyMode::Baseline | PolicyMode::Mask => a_noisy.clone(),
    };
    Ok(TrainingExample {
        image,
        a_noisy,
        a_input,
        eps_target: eps.to_vec(),
        window,
        fixation,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    /// Mean loss of each epoch.
    pub losses: Vec<f64>,
    /// Loss of every optimizer step, averaged over networks.
    pub step_losses: Vec<f64>,
}

pub fn train(demos: &[Demo], policy_cfg: PolicyConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let policy = Policy::init(policy_cfg, cfg.seed)?;
    train_from(policy, demos, cfg)
}

/// Continue training `policy`; its step counter keeps counting.
pub fn train_from(mut policy: Policy, demos: &[Demo], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if demos.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let chains = policy.chains();
    let (h, w) = {
        let c = &policy.models[0].config;
        (c.image_h, c.image_w)
    };
    let turns: usize = if cfg.rotation_augment { 4 } else { 1 };
    let variants: Vec<Vec<Demo>> = demos
        .iter()
        .map(|d| (0..turns).map(|k| d.rotated(k as u32)).collect())
        .collect();
    let observers: Vec<Vec<Observer<'_>>> = variants
        .iter()
        .map(|vs| {
            vs.iter()
                .map(|d| Observer::new(&d.scene, h, w, 0.0, 0))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ policy.step.rotate_left(32));
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut states: Vec<AdamState<f32>> = policy
        .models
        .iter()
        .map(|m| AdamState::new(&m.params, adam))
        .collect();
    let steps_per_epoch = demos.len().div_ceil(cfg.batch_size);
    let total_steps = (steps_per_epoch * cfg.epochs).max(1);
    let mut order: Vec<usize> = (0..demos.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::with_capacity(total_steps);
    let mut step_in_run = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut groups: Vec<Vec<LossGroup>> = vec![Vec::new(); policy.models.len()];
            for &i in batch {
                let k = rng.random_range(0..turns);
                let demo = &variants[i][k];
                let noisy;
                let observer = if cfg.pixel_noise > 0.0 {
                    noisy = Observer::new(&demo.scene, h, w, cfg.pixel_noise, rng.random());
                    &noisy
                } else {
                    &observers[i][k]
                };
                for (c, chain) in chains.iter().enumerate() {
                    let dim = chain.layout(&policy.layout)?.0.dim();
                    let cond = policy.cond(c);
                    let target = &mut groups[policy.chain_model[c]];
                    let mut shared: Option<LossGroup> = None;
                    for _ in 0..cfg.k {
                        let t = rng.random_range(0.0..cfg.schedule.horizon);
                        let eps: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                        let ex = example_with(observer, demo, chain, t, &eps, cfg, &mut rng)?;
                        let sample = LossSample {
                            a_input: ex.a_input.values,
                            t,
                            eps: ex.eps_target,
                        };
                        if cfg.mode == PolicyMode::Baseline {
                            shared
                                .get_or_insert_with(|| LossGroup {
                                    image: ex.image,
                                    cond: cond.clone(),
                                    samples: Vec::with_capacity(cfg.k),
                                })
                                .samples
                                .push(sample);
                        } else {
                            target.push(LossGroup {
                                image: ex.image,
                                cond: cond.clone(),
                                samples: vec![sample],
                            });
                        }
                    }
                    target.extend(shared);
                }
            }

            let progress = step_in_run as f64 / total_steps as f64;
            let lr = cfg.lr
                * (cfg.lr_final_frac
                    + (1.0 - cfg.lr_final_frac) * 0.5 * (1.0 + (PI * progress).cos()));
            let mut step_loss = 0.0;
            for (m, model) in policy.models.iter_mut().enumerate() {
                let (loss, grads) = model.loss_and_grads(&groups[m])?;
                if !loss.is_finite() || !grads.all_finite() {
                    return Err(Error::Divergence {
                        step: policy.step as usize,
                        value: loss,
                    });
                }
                states[m].config.lr = lr;
                adam_step(&mut model.params, &grads, &mut states[m])?;
                step_loss += loss;
            }
            let step_loss = step_loss / policy.models.len() as f64;
            epoch_loss += step_loss;
            step_losses.push(step_loss);
            policy.step += 1;
            step_in_run += 1;
        }
        losses.push(epoch_loss / steps_per_epoch as f64);
    }
    Ok(TrainOutcome {
        policy,
        losses,
        step_losses,
    })
}
