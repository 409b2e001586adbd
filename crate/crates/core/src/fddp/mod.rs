//! Training and fixation-while-denoising inference for baseline, mask and
//! zoom policies.

mod infer;
mod policy;
mod train;

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    constrain_window, mask_context, renormalize_action, zoom_context, ActionLayout, ActionVec,
    CameraTransform, Frame, Point2, Window, PICK, PLACE,
};
use crate::scene::{render, Image, SceneSpec, View};
use crate::schedules::{NoiseVariant, ScheduleSpec};

pub use infer::{
    infer, run_fddp_per_subaction, DenoiseTrace, IdealDenoiser, NoisePredictor, TraceStep,
};
pub use policy::{Policy, PolicyConfig};
pub use train::{make_training_example, train, train_from, TrainOutcome, TrainingExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Full image at every step; the encoding is computed once.
    Baseline,
    /// Pixels outside the fixation window set to the table color.
    Mask,
    /// Scene re-rendered inside the fixation window.
    Zoom,
}

impl PolicyMode {
    pub const ALL: [PolicyMode; 3] = [PolicyMode::Baseline, PolicyMode::Mask, PolicyMode::Zoom];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyMode::Baseline => "baseline",
            PolicyMode::Mask => "mask",
            PolicyMode::Zoom => "zoom",
        }
    }
}

impl fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(PolicyMode::Baseline),
            "mask" => Ok(PolicyMode::Mask),
            "zoom" => Ok(PolicyMode::Zoom),
            _ => Err(Error::Config(format!(
                "unknown mode `{s}` (baseline, mask, zoom)"
            ))),
        }
    }
}

/// How the desk action is split into denoising chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// Separate pick and place chains, each fixating on its own position.
    PerSubAction,
    /// One chain over the whole action, fixating on the pick position.
    Joint,
}

/// Sub-actions denoised together and the one whose position drives fixation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSpec {
    pub subs: Vec<usize>,
    /// Index into `subs`.
    pub fixation: usize,
}

impl ChainMode {
    pub fn chains(self) -> Vec<ChainSpec> {
        match self {
            ChainMode::PerSubAction => vec![
                ChainSpec {
                    subs: vec![PICK],
                    fixation: 0,
                },
                ChainSpec {
                    subs: vec![PLACE],
                    fixation: 0,
                },
            ],
            ChainMode::Joint => vec![ChainSpec {
                subs: vec![PICK, PLACE],
                fixation: 0,
            }],
        }
    }
}

impl ChainSpec {
    pub fn layout(&self, full: &ActionLayout) -> Result<(ActionLayout, Vec<usize>)> {
        full.select(&self.subs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Noisy samples drawn per demo per step.
    pub k: usize,
    /// Demos per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr`, reached by cosine decay.
    pub lr_final_frac: f64,
    pub schedule: ScheduleSpec,
    pub variant: NoiseVariant,
    pub mode: PolicyMode,
    pub f_min: f64,
    /// Displace training windows randomly around the fixation point.
    pub jitter: bool,
    pub rotation_augment: bool,
    pub pixel_noise: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 10,
            batch_size: 100,
            epochs: 100,
            lr: 1e-3,
            lr_final_frac: 1.0,
            schedule: ScheduleSpec::linear(),
            variant: NoiseVariant::NoDrift,
            mode: PolicyMode::Zoom,
            f_min: 0.2,
            jitter: true,
            rotation_augment: false,
            pixel_noise: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.batch_size == 0 {
            return Err(Error::Config("k and batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.lr_final_frac > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.f_min > 0.0 && self.f_min <= 1.0) {
            return Err(Error::Config("f_min must lie in (0, 1]".into()));
        }
        self.schedule.validate()
    }
}

/// Default per-slot bounds of the desk action in the unconstrained frame:
/// positions span the table, pick yaw spans the square block's symmetry.
pub fn desk_act_bounds() -> Vec<[f64; 2]> {
    let pos = [-1.0, 1.0];
    let yaw = [-FRAC_PI_4, FRAC_PI_4];
    vec![pos, pos, yaw, pos, pos, yaw]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    pub n_steps: usize,
    /// Per-slot sampling interval for `a_T`, unconstrained frame.
    pub act_bounds: Vec<[f64; 2]>,
    pub mode: PolicyMode,
    pub variant: NoiseVariant,
    pub schedule: ScheduleSpec,
    pub f_min: f64,
    pub pixel_noise: f64,
    pub seed: u64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            n_steps: 10,
            act_bounds: desk_act_bounds(),
            mode: PolicyMode::Zoom,
            variant: NoiseVariant::NoDrift,
            schedule: ScheduleSpec::linear(),
            f_min: 0.2,
            pixel_noise: 0.0,
            seed: 0,
        }
    }
}

impl InferConfig {
    pub fn validate(&self, layout: &ActionLayout) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if self.act_bounds.len() != layout.dim() {
            return Err(Error::shape(
                format!("{} act_bounds", layout.dim()),
                self.act_bounds.len(),
            ));
        }
        if self.act_bounds.iter().any(|b| !(b[0] < b[1])) {
            return Err(Error::Config(
                "act_bounds intervals must be nonempty".into(),
            ));
        }
        if !(self.f_min > 0.0 && self.f_min <= 1.0) {
            return Err(Error::Config("f_min must lie in (0, 1]".into()));
        }
        self.schedule.validate()
    }
}

/// The normalized frame of the whole image: the table spans `[-1,1]²`.
/// Denoiser targets and outputs always live here.
pub fn unconstrained_frame(camera: &CameraTransform) -> Frame {
    Frame::Window(Window::full(*camera))
}

/// Express `a` (any frame) in the unconstrained frame.
pub fn to_unconstrained(a: &ActionVec, camera: &CameraTransform) -> ActionVec {
    renormalize_action(a, &Window::full(*camera))
}

/// Observation source for one scene: the full render is cached, windowed
/// views are derived per mode.
pub(crate) struct Observer<'a> {
    pub scene: &'a SceneSpec,
    pub camera: CameraTransform,
    pub full: Image,
    pub pixel_noise: f64,
    pub noise_seed: u64,
}

impl<'a> Observer<'a> {
    pub fn new(
        scene: &'a SceneSpec,
        h: usize,
        w: usize,
        pixel_noise: f64,
        noise_seed: u64,
    ) -> Self {
        let mut full = render(scene, &View::Full, h, w);
        if pixel_noise > 0.0 {
            full = full.with_noise(pixel_noise, noise_seed);
        }
        Self {
            scene,
            camera: scene.camera(h, w),
            full,
            pixel_noise,
            noise_seed,
        }
    }

    pub fn context(&self, mode: PolicyMode, window: &Window) -> Result<Image> {
        match mode {
            PolicyMode::Baseline => Ok(self.full.clone()),
            PolicyMode::Mask => Ok(mask_context(&self.full, window, self.scene.table_color)),
            PolicyMode::Zoom => {
                let img = zoom_context(self.scene, window, self.full.height, self.full.width)?;
                if self.pixel_noise > 0.0 {
                    let salt = (window.center[0].to_bits()
                        ^ window.half_extent[0].to_bits().rotate_left(17))
                    .wrapping_add(window.center[1].to_bits().rotate_left(31));
                    Ok(img.with_noise(self.pixel_noise, self.noise_seed ^ salt))
                } else {
                    Ok(img)
                }
            }
        }
    }
}

/// Window for the context at time `t` around pixel `p`; the full image in
/// baseline mode.
pub(crate) fn window_for<R: rand::Rng + ?Sized>(
    mode: PolicyMode,
    p: Point2,
    t: f64,
    schedule: &ScheduleSpec,
    f_min: f64,
    camera: &CameraTransform,
    jitter: Option<&mut R>,
) -> Result<Window> {
    match mode {
        PolicyMode::Baseline => Ok(Window::full(*camera)),
        PolicyMode::Mask | PolicyMode::Zoom => {
            constrain_window(p, t, schedule, f_min, camera, jitter)
        }
    }
}
