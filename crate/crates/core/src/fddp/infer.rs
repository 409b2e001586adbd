use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{unconstrained_frame, window_for, ChainSpec, InferConfig, Observer, PolicyMode};
use crate::error::{Error, Result};
use crate::geometry::{
    fixation_point, renormalize_action, ActionLayout, ActionVec, Frame, Point2, Window,
};
use crate::scene::{Image, SceneSpec};
use crate::schedules::{denoise_point_estimate, renoise, NoiseVariant, ScheduleSpec};

/// Anything that maps (context, noisy action, t) to a noise estimate in the
/// unconstrained frame.
pub trait NoisePredictor {
    fn image_size(&self) -> (usize, usize);
    fn encode(&self, chain: usize, image: &Image) -> Result<Vec<f64>>;
    /// `a_input` is expressed in the frame of the context that was encoded.
    fn predict(
        &self,
        chain: usize,
        embedding: &[f64],
        a_input: &ActionVec,
        t: f64,
    ) -> Result<Vec<f64>>;
}

/// Closed-form denoiser that knows the answer: `ε* = (ã − c·a*)/σ(t)` with
/// `c = √ᾱ(t)` under drift and 1 otherwise.
#[derive(Debug, Clone)]
pub struct IdealDenoiser {
    /// Target action in the table frame.
    pub target: ActionVec,
    pub chains: Vec<ChainSpec>,
    pub schedule: ScheduleSpec,
    pub variant: NoiseVariant,
    pub image_h: usize,
    pub image_w: usize,
}

impl NoisePredictor for IdealDenoiser {
    fn image_size(&self) -> (usize, usize) {
        (self.image_h, self.image_w)
    }

    fn encode(&self, _chain: usize, _image: &Image) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }

    fn predict(
        &self,
        chain: usize,
        _embedding: &[f64],
        a_input: &ActionVec,
        t: f64,
    ) -> Result<Vec<f64>> {
        let Frame::Window(w) = &a_input.frame else {
            return Err(Error::Config(
                "denoiser input must be in a window frame".into(),
            ));
        };
        let full = Window::full(w.parent);
        let a = renormalize_action(a_input, &full);
        let target = renormalize_action(&self.target.select(&self.chains[chain].subs)?, &full);
        let ab = self.schedule.alpha_bar(t)?;
        let c = match self.variant {
            NoiseVariant::Drift => ab.sqrt(),
            NoiseVariant::NoDrift => 1.0,
        };
        let sigma = (1.0 - ab).sqrt();
        Ok(a.values
            .iter()
            .zip(&target.values)
            .map(|(x, y)| (x - c * y) / sigma)
            .collect())
    }
}

/// One refinement step of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t: f64,
    /// Context window used at this step (full image in baseline mode).
    pub window: Window,
    /// Latent `a_t`, unconstrained frame.
    pub a_t: ActionVec,
    /// What the denoiser saw: `a_t` in the frame of `window` (zoom) or unchanged.
    pub a_input: ActionVec,
    /// Predicted noise, unconstrained frame.
    pub eps_hat: Vec<f64>,
    /// Point estimate `a_t⁰` after clamping, unconstrained frame.
    pub a0: ActionVec,
    /// Fixation pixel derived from `a0`.
    pub fixation: Point2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseTrace {
    pub chain: usize,
    pub mode: PolicyMode,
    pub steps: Vec<TraceStep>,
}

fn clamp_to_bounds(values: &mut [f64], bounds: &[[f64; 2]], factor: f64) {
    for (v, b) in values.iter_mut().zip(bounds) {
        let (c, h) = ((b[0] + b[1]) / 2.0, (b[1] - b[0]) / 2.0 * factor);
        *v = v.clamp(c - h, c + h);
    }
}

/// Run one denoising chain on `scene`. Returns the action of
/// the chain's sub-actions in the table frame and the per-step trace.
pub fn infer<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    chain_index: usize,
    chain: &ChainSpec,
    scene: &SceneSpec,
    cfg: &InferConfig,
    rng: &mut R,
) -> Result<(ActionVec, DenoiseTrace)> {
    let full_layout = ActionLayout::desk();
    cfg.validate(&full_layout)?;
    let (layout, slots) = chain.layout(&full_layout)?;
    let bounds: Vec<[f64; 2]> = slots.iter().map(|&s| cfg.act_bounds[s]).collect();
    let (h, w) = predictor.image_size();
    let observer = Observer::new(scene, h, w, cfg.pixel_noise, cfg.seed ^ scene.seed);
    let camera = observer.camera;
    let frame = unconstrained_frame(&camera);

    let init: Vec<f64> = bounds
        .iter()
        .map(|b| rng.random_range(b[0]..b[1]))
        .collect();
    let mut a_t = ActionVec::new(init, layout, frame.clone())?;
    let grid = cfg.schedule.inference_grid(cfg.n_steps);
    let mut window = Window::full(camera);
    let mut cached: Option<Vec<f64>> = None;
    let mut trace = DenoiseTrace {
        chain: chain_index,
        mode: cfg.mode,
        steps: Vec::with_capacity(cfg.n_steps),
    };

    for (k, &t) in grid.iter().enumerate() {
        let embedding = match (cfg.mode, &cached) {
            (PolicyMode::Baseline, Some(e)) => e.clone(),
            _ => {
                let e = predictor.encode(chain_index, &observer.context(cfg.mode, &window)?)?;
                if cfg.mode == PolicyMode::Baseline {
                    cached = Some(e.clone());
                }
                e
            }
        };
        let a_input = match cfg.mode {
            PolicyMode::Zoom => renormalize_action(&a_t, &window),
            PolicyMode::Baseline | PolicyMode::Mask => a_t.clone(),
        };
        let eps_hat = predictor.predict(chain_index, &embedding, &a_input, t)?;
        let mut a0_values =
            denoise_point_estimate(&a_t.values, &eps_hat, t, &cfg.schedule, cfg.variant)?;
        let finite = a0_values.iter().all(|v| v.is_finite());
        clamp_to_bounds(&mut a0_values, &bounds, 1.5);
        let a0 = a_t.with_values(a0_values)?;
        let mut fixation = fixation_point(&a0.to_global(), chain.fixation, &camera)?;
        fixation[0] = fixation[0].clamp(0.0, camera.image_w as f64);
        fixation[1] = fixation[1].clamp(0.0, camera.image_h as f64);
        trace.steps.push(TraceStep {
            t,
            window,
            a_t: a_t.clone(),
            a_input,
            eps_hat,
            a0: a0.clone(),
            fixation,
        });
        if !finite {
            return Err(Error::NonFiniteAction {
                step: k,
                trace: Box::new(trace),
            });
        }
        let Some(&t_prev) = grid.get(k + 1) else {
            break;
        };
        let eps: Vec<f64> = (0..a0.dim()).map(|_| rng.sample(StandardNormal)).collect();
        a_t = a0.with_values(renoise(
            &a0.values,
            t_prev,
            &eps,
            &cfg.schedule,
            cfg.variant,
        )?)?;
        window = window_for::<R>(
            cfg.mode,
            fixation,
            t_prev,
            &cfg.schedule,
            cfg.f_min,
            &camera,
            None,
        )?;
    }

    let last = trace.steps.last().expect("n_steps >= 1");
    Ok((last.a0.to_global(), trace))
}

/// Run every chain and assemble the full desk action in the table frame.
/// Each chain draws from its own stream, keyed by its first sub-action.
pub fn run_fddp_per_subaction<P: NoisePredictor + ?Sized>(
    predictor: &P,
    chains: &[ChainSpec],
    scene: &SceneSpec,
    cfg: &InferConfig,
) -> Result<(ActionVec, Vec<DenoiseTrace>)> {
    let layout = ActionLayout::desk();
    let mut values = vec![0.0; layout.dim()];
    let mut covered = vec![false; layout.dim()];
    let mut traces = Vec::with_capacity(chains.len());
    for (i, chain) in chains.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(chain.subs[0] as u64 + 1);
        let (a, trace) = infer(predictor, i, chain, scene, cfg, &mut rng)?;
        let (_, slots) = chain.layout(&layout)?;
        for (j, &s) in slots.iter().enumerate() {
            values[s] = a.values[j];
            covered[s] = true;
        }
        traces.push(trace);
    }
    if covered.iter().any(|c| !c) {
        return Err(Error::Config(
            "chains do not cover every action slot".into(),
        ));
    }
    Ok((ActionVec::global(values, layout)?, traces))
}
