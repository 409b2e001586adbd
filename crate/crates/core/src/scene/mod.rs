//! Desk-scale tabletop task: put the red block in the green bowl while
//! colored distractor blocks clutter the table.

mod dataset;
mod image;
mod render;

pub use dataset::{read_dataset, write_dataset, Episode, Manifest, DATASET_FORMAT};
pub use image::Image;
pub use render::{render, render_with, View};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, ActionLayout, ActionVec, CameraTransform, PICK, PLACE};

pub type Rgb = [f32; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    SquareBlock,
    DiskBowl,
    Bar,
    Ell,
}

impl Shape {
    /// Rotation after which the silhouette repeats.
    pub fn symmetry_period(self) -> f64 {
        match self {
            Shape::SquareBlock => FRAC_PI_2,
            Shape::Bar => PI,
            Shape::Ell => 2.0 * PI,
            // any angle; yaw carries no information
            Shape::DiskBowl => 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    PickTarget,
    PlaceGoal,
    Distractor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub half_size: f64,
    pub position: [f64; 2],
    pub yaw: f64,
    pub color: Rgb,
    pub role: Role,
}

impl ObjectSpec {
    pub fn bounding_radius(&self) -> f64 {
        let s = self.half_size;
        match self.shape {
            Shape::SquareBlock | Shape::Ell => s * std::f64::consts::SQRT_2,
            Shape::DiskBowl => s,
            Shape::Bar => s * (1.0f64 + 1.0 / 9.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl TableBounds {
    pub fn square(half: f64) -> Self {
        Self {
            min: [-half, -half],
            max: [half, half],
        }
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn center(&self) -> [f64; 2] {
        [
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<ObjectSpec>,
    pub table_bounds: TableBounds,
    pub table_color: Rgb,
    pub seed: u64,
}

impl SceneSpec {
    pub fn target(&self) -> &ObjectSpec {
        self.find(Role::PickTarget)
            .expect("scene has a pick target")
    }

    pub fn goal(&self) -> &ObjectSpec {
        self.find(Role::PlaceGoal).expect("scene has a place goal")
    }

    fn find(&self, role: Role) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.role == role)
    }

    pub fn distractors(&self) -> impl Iterator<Item = &ObjectSpec> {
        self.objects.iter().filter(|o| o.role == Role::Distractor)
    }

    /// Camera whose `out_h x out_w` image spans the table.
    pub fn camera(&self, out_h: usize, out_w: usize) -> CameraTransform {
        let tb = &self.table_bounds;
        let scale = [
            out_w as f64 / (tb.max[0] - tb.min[0]),
            out_h as f64 / (tb.max[1] - tb.min[1]),
        ];
        CameraTransform {
            scale,
            offset: [-tb.min[0] * scale[0], -tb.min[1] * scale[1]],
            image_h: out_h,
            image_w: out_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let count = |r| self.objects.iter().filter(|o| o.role == r).count();
        if count(Role::PickTarget) != 1 || count(Role::PlaceGoal) != 1 {
            return Err(Error::Config(
                "scene needs exactly one pick target and one place goal".into(),
            ));
        }
        Ok(())
    }

    /// Rotate the whole scene by `quarter_turns · 90°` about the table center.
    /// Yaws are re-canonicalized modulo each shape's symmetry.
    pub fn rotated(&self, quarter_turns: u32) -> SceneSpec {
        let c = self.table_bounds.center();
        let k = quarter_turns % 4;
        let mut out = self.clone();
        for obj in &mut out.objects {
            let mut d = [obj.position[0] - c[0], obj.position[1] - c[1]];
            for _ in 0..k {
                d = [-d[1], d[0]];
            }
            obj.position = [c[0] + d[0], c[1] + d[1]];
            obj.yaw = canonical_yaw(obj.shape, obj.yaw + k as f64 * FRAC_PI_2);
        }
        out
    }
}

pub fn canonical_yaw(shape: Shape, yaw: f64) -> f64 {
    if shape == Shape::DiskBowl {
        return 0.0;
    }
    wrap_angle(yaw, shape.symmetry_period())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub scene: SceneSpec,
    pub action: ActionVec,
}

impl Demo {
    pub fn from_scene(scene: SceneSpec) -> Self {
        let action = oracle_action(&scene);
        Self { scene, action }
    }

    /// Rotated copy; the oracle action co-rotates with the scene.
    pub fn rotated(&self, quarter_turns: u32) -> Demo {
        let scene = self.scene.rotated(quarter_turns);
        let c = scene.table_bounds.center();
        let mut action = self.action.clone();
        for (sub, obj) in [(PICK, scene.target()), (PLACE, scene.goal())] {
            let mut d = {
                let p = action.position(sub).expect("desk layout");
                [p[0] - c[0], p[1] - c[1]]
            };
            for _ in 0..quarter_turns % 4 {
                d = [-d[1], d[0]];
            }
            action
                .set_position(sub, [c[0] + d[0], c[1] + d[1]])
                .expect("desk layout");
            let yaw_slot = action.layout.offset(sub).expect("desk layout") + 2;
            let yaw = action.values[yaw_slot] + (quarter_turns % 4) as f64 * FRAC_PI_2;
            action.values[yaw_slot] = canonical_yaw(obj.shape, yaw);
        }
        Demo { scene, action }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub table_half: f64,
    pub image_size: usize,
    pub target_half_size: f64,
    pub goal_half_size: f64,
    pub distractor_half_size: f64,
    pub n_distractors: usize,
    /// Centers must be at least `margin · (s_i + s_j)` apart.
    pub margin: f64,
    pub table_color: Rgb,
    pub target_color: Rgb,
    pub goal_color: Rgb,
    pub distractor_palette: Vec<Rgb>,
    pub distractor_shapes: Vec<Shape>,
    pub unseen_palette: Vec<Rgb>,
    pub unseen_shapes: Vec<Shape>,
    pub tol_pos: f64,
    pub tol_yaw: f64,
    pub check_yaw: bool,
    /// Gaussian pixel noise σ added to observations (0 disables).
    pub pixel_noise: f64,
    pub max_retries: usize,
}

/// Minimum hue separation (degrees) between palettes that must not overlap.
pub const HUE_SEPARATION_DEG: f64 = 20.0;

impl Default for TaskConfig {
    fn default() -> Self {
        // Every color stays within 1/3 of the table grey per channel.
        Self {
            table_half: 0.5,
            image_size: 64,
            target_half_size: 0.03,
            goal_half_size: 0.05,
            distractor_half_size: 0.03,
            n_distractors: 3,
            margin: 1.5,
            table_color: [0.5, 0.5, 0.5],
            target_color: [0.82, 0.2, 0.2],
            goal_color: [0.2, 0.8, 0.25],
            distractor_palette: vec![[0.22, 0.3, 0.82], [0.8, 0.78, 0.2], [0.6, 0.22, 0.78]],
            distractor_shapes: vec![Shape::SquareBlock],
            unseen_palette: vec![[0.2, 0.75, 0.8], [0.8, 0.52, 0.2], [0.82, 0.3, 0.65]],
            unseen_shapes: vec![Shape::Bar, Shape::Ell],
            tol_pos: 0.04,
            tol_yaw: 0.2,
            check_yaw: false,
            pixel_noise: 0.0,
            max_retries: 10_000,
        }
    }
}

/// Hue in degrees, `None` for greys.
pub fn hue_deg(c: Rgb) -> Option<f64> {
    let [r, g, b] = c.map(|v| v as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d < 1e-6 {
        return None;
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    Some(h * 60.0)
}

pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn hue_clash(c: Rgb, others: &[Rgb]) -> bool {
    let Some(h) = hue_deg(c) else { return false };
    others
        .iter()
        .filter_map(|o| hue_deg(*o))
        .any(|ho| hue_distance(h, ho) < HUE_SEPARATION_DEG)
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.table_half > 0.0) || self.image_size == 0 {
            return bad("table and image size must be positive");
        }
        if self.distractor_palette.is_empty() || self.distractor_shapes.is_empty() {
            return bad("distractor palette and shapes must be nonempty");
        }
        let reserved = [self.target_color, self.goal_color];
        for c in self.distractor_palette.iter().chain(&self.unseen_palette) {
            if hue_clash(*c, &reserved) {
                return bad("distractor colors must not share the target or goal hue");
            }
        }
        if hue_clash(self.target_color, &[self.goal_color]) {
            return bad("target and goal colors must differ in hue");
        }
        if !(self.tol_pos > 0.0) {
            return bad("tol_pos must be positive");
        }
        Ok(())
    }

    pub fn table_bounds(&self) -> TableBounds {
        TableBounds::square(self.table_half)
    }

    pub fn camera(&self) -> CameraTransform {
        CameraTransform::for_table(self.table_half, self.image_size, self.image_size)
    }
}

/// Deterministic scene for `seed`: target, goal, then distractors, each
/// rejection-sampled against the separation margin.
pub fn sample_scene(cfg: &TaskConfig, seed: u64) -> Result<SceneSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(2 + cfg.n_distractors);

    let mut plan = vec![
        (
            Shape::SquareBlock,
            cfg.target_half_size,
            cfg.target_color,
            Role::PickTarget,
        ),
        (
            Shape::DiskBowl,
            cfg.goal_half_size,
            cfg.goal_color,
            Role::PlaceGoal,
        ),
    ];
    for _ in 0..cfg.n_distractors {
        let shape = cfg.distractor_shapes[rng.random_range(0..cfg.distractor_shapes.len())];
        let color = cfg.distractor_palette[rng.random_range(0..cfg.distractor_palette.len())];
        plan.push((shape, cfg.distractor_half_size, color, Role::Distractor));
    }

    for (shape, half_size, color, role) in plan {
        let yaw = match (shape, role) {
            (Shape::DiskBowl, _) => 0.0,
            (Shape::SquareBlock, _) => {
                canonical_yaw(shape, rng.random_range(-FRAC_PI_4..FRAC_PI_4))
            }
            _ => canonical_yaw(shape, rng.random_range(-PI..PI)),
        };
        let mut obj = ObjectSpec {
            shape,
            half_size,
            position: [0.0, 0.0],
            yaw,
            color,
            role,
        };
        let reach = cfg.table_half - obj.bounding_radius();
        if reach <= 0.0 {
            return Err(Error::Config("objects do not fit on the table".into()));
        }
        let mut placed = false;
        for _ in 0..cfg.max_retries {
            obj.position = [
                rng.random_range(-reach..reach),
                rng.random_range(-reach..reach),
            ];
            if objects.iter().all(|o| separated(o, &obj, cfg.margin)) {
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SamplingExhausted {
                retries: cfg.max_retries,
            });
        }
        objects.push(obj);
    }

    Ok(SceneSpec {
        objects,
        table_bounds: cfg.table_bounds(),
        table_color: cfg.table_color,
        seed,
    })
}

pub fn separated(a: &ObjectSpec, b: &ObjectSpec, margin: f64) -> bool {
    let d = (a.position[0] - b.position[0]).hypot(a.position[1] - b.position[1]);
    d >= margin * (a.half_size + b.half_size)
}

/// Pick at the target centroid with the target's yaw, place at the goal centroid.
pub fn oracle_action(scene: &SceneSpec) -> ActionVec {
    let t = scene.target();
    let g = scene.goal();
    ActionVec::global(
        vec![
            t.position[0],
            t.position[1],
            t.yaw,
            g.position[0],
            g.position[1],
            0.0,
        ],
        ActionLayout::desk(),
    )
    .expect("desk layout has six slots")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionErrors {
    pub pick_m: f64,
    pub place_m: f64,
    pub pick_yaw: f64,
}

pub fn action_errors(scene: &SceneSpec, a: &ActionVec) -> Result<ActionErrors> {
    let g = a.to_global();
    let t = scene.target();
    let goal = scene.goal();
    let pick = g.position(PICK)?;
    let place = g.position(PLACE)?;
    let yaw_slot = g.layout.offset(PICK)? + g.layout.subs[PICK].position_dims;
    let pick_yaw = if g.layout.subs[PICK].rotation_dims > 0 {
        wrap_angle(g.values[yaw_slot] - t.yaw, t.shape.symmetry_period()).abs()
    } else {
        0.0
    };
    Ok(ActionErrors {
        pick_m: (pick[0] - t.position[0]).hypot(pick[1] - t.position[1]),
        place_m: (place[0] - goal.position[0]).hypot(place[1] - goal.position[1]),
        pick_yaw,
    })
}

/// Closed-ball success test on pick and place positions (and pick yaw when enabled).
pub fn success(
    scene: &SceneSpec,
    a: &ActionVec,
    tol_pos: f64,
    tol_yaw: f64,
    check_yaw: bool,
) -> bool {
    match action_errors(scene, a) {
        Ok(e) => {
            e.pick_m <= tol_pos && e.place_m <= tol_pos && (!check_yaw || e.pick_yaw <= tol_yaw)
        }
        Err(_) => false,
    }
}

/// Replace every distractor in place by an unseen shape/color.
pub fn swap_distractors(scene: &SceneSpec, cfg: &TaskConfig, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0ff5_ca1e_d00d);
    let mut out = scene.clone();
    for obj in out
        .objects
        .iter_mut()
        .filter(|o| o.role == Role::Distractor)
    {
        let shape = cfg.unseen_shapes[rng.random_range(0..cfg.unseen_shapes.len())];
        obj.color = cfg.unseen_palette[rng.random_range(0..cfg.unseen_palette.len())];
        obj.yaw = canonical_yaw(shape, rng.random_range(-PI..PI));
        obj.shape = shape;
    }
    out
}
