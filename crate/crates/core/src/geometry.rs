//! Planar camera geometry, fixation windows and action frames.
//!
//! Pixel coordinates are continuous `(u, v)` = (column, row); pixel `(i, j)`
//! covers `[j, j+1) x [i, i+1)` and is sampled at its center. A
//! [`CameraTransform`] is an axis-aligned affine map from some planar frame
//! (meters on the table, or normalized window units) into pixels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{render_with, Image, SceneSpec};
use crate::schedules::ScheduleSpec;

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraTransform {
    /// Pixels per frame unit, per axis.
    pub scale: [f64; 2],
    /// Pixel coordinates of the frame origin.
    pub offset: [f64; 2],
    pub image_h: usize,
    pub image_w: usize,
}

impl CameraTransform {
    pub fn new(scale: [f64; 2], offset: [f64; 2], image_h: usize, image_w: usize) -> Result<Self> {
        if scale.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(Error::Config(format!(
                "camera scale must be finite and nonzero: {scale:?}"
            )));
        }
        if image_h == 0 || image_w == 0 {
            return Err(Error::Config("camera image size must be positive".into()));
        }
        Ok(Self {
            scale,
            offset,
            image_h,
            image_w,
        })
    }

    /// Top-down camera whose image exactly spans a square table of the
    /// given half extent, centered on the origin.
    pub fn for_table(table_half: f64, image_h: usize, image_w: usize) -> Self {
        Self {
            scale: [
                image_w as f64 / (2.0 * table_half),
                image_h as f64 / (2.0 * table_half),
            ],
            offset: [image_w as f64 / 2.0, image_h as f64 / 2.0],
            image_h,
            image_w,
        }
    }

    pub fn real_to_img(&self, xy: Point2) -> Point2 {
        [
            self.scale[0] * xy[0] + self.offset[0],
            self.scale[1] * xy[1] + self.offset[1],
        ]
    }

    pub fn img_to_real(&self, px: Point2) -> Point2 {
        [
            (px[0] - self.offset[0]) / self.scale[0],
            (px[1] - self.offset[1]) / self.scale[1],
        ]
    }

    pub fn contains_pixel(&self, px: Point2) -> bool {
        (0.0..=self.image_w as f64).contains(&px[0]) && (0.0..=self.image_h as f64).contains(&px[1])
    }

    /// Frame coordinates sampled by pixel `(row, col)`.
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> Point2 {
        self.img_to_real([col as f64 + 0.5, row as f64 + 0.5])
    }
}

pub fn real_to_img(camera: &CameraTransform, xy: Point2) -> Point2 {
    camera.real_to_img(xy)
}

pub fn img_to_real(camera: &CameraTransform, px: Point2) -> Point2 {
    camera.img_to_real(px)
}

/// Axis-aligned window in the pixel grid of `parent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: Point2,
    pub half_extent: Point2,
    pub parent: CameraTransform,
}

impl Window {
    pub fn new(center: Point2, half_extent: Point2, parent: CameraTransform) -> Result<Self> {
        if half_extent.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::DegenerateWindow(format!(
                "half extent {half_extent:?}"
            )));
        }
        Ok(Self {
            center,
            half_extent,
            parent,
        })
    }

    pub fn full(parent: CameraTransform) -> Self {
        let (w, h) = (parent.image_w as f64, parent.image_h as f64);
        Self {
            center: [w / 2.0, h / 2.0],
            half_extent: [w / 2.0, h / 2.0],
            parent,
        }
    }

    pub fn min_corner(&self) -> Point2 {
        [
            self.center[0] - self.half_extent[0],
            self.center[1] - self.half_extent[1],
        ]
    }

    pub fn max_corner(&self) -> Point2 {
        [
            self.center[0] + self.half_extent[0],
            self.center[1] + self.half_extent[1],
        ]
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extent[0] * self.half_extent[1]
    }

    pub fn contains_pixel(&self, px: Point2) -> bool {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        (0..2).all(|i| px[i] >= lo[i] && px[i] <= hi[i])
    }

    pub fn inside_image(&self, tol: f64) -> bool {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        lo[0] >= -tol
            && lo[1] >= -tol
            && hi[0] <= self.parent.image_w as f64 + tol
            && hi[1] <= self.parent.image_h as f64 + tol
    }

    /// Window center in the parent's frame.
    pub fn real_center(&self) -> Point2 {
        self.parent.img_to_real(self.center)
    }

    /// Signed half extent of the window in the parent's frame.
    pub fn real_half(&self) -> Point2 {
        [
            self.half_extent[0] / self.parent.scale[0],
            self.half_extent[1] / self.parent.scale[1],
        ]
    }

    pub fn to_local(&self, xy: Point2) -> Point2 {
        let (c, h) = (self.real_center(), self.real_half());
        [(xy[0] - c[0]) / h[0], (xy[1] - c[1]) / h[1]]
    }

    pub fn from_local(&self, uv: Point2) -> Point2 {
        let (c, h) = (self.real_center(), self.real_half());
        [c[0] + uv[0] * h[0], c[1] + uv[1] * h[1]]
    }

    /// Maps normalized window coordinates (`[-1,1]²`) into an `out_h x out_w` image.
    pub fn local_transform(&self, out_h: usize, out_w: usize) -> CameraTransform {
        CameraTransform {
            scale: [out_w as f64 / 2.0, out_h as f64 / 2.0],
            offset: [out_w as f64 / 2.0, out_h as f64 / 2.0],
            image_h: out_h,
            image_w: out_w,
        }
    }

    /// Maps the parent frame into an `out_h x out_w` image of this window.
    pub fn zoom_transform(&self, out_h: usize, out_w: usize) -> CameraTransform {
        let lo = self.min_corner();
        let k = [
            out_w as f64 / (2.0 * self.half_extent[0]),
            out_h as f64 / (2.0 * self.half_extent[1]),
        ];
        let p = &self.parent;
        CameraTransform {
            scale: [p.scale[0] * k[0], p.scale[1] * k[1]],
            offset: [(p.offset[0] - lo[0]) * k[0], (p.offset[1] - lo[1]) * k[1]],
            image_h: out_h,
            image_w: out_w,
        }
    }
}

/// One named sub-action (e.g. pick or place) inside a flat action vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubActionSpec {
    pub name: String,
    /// 2 (planar x, y) or 3 (x, y, z); only x and y are reframed.
    pub position_dims: usize,
    /// Rotation slots (yaw first), left untouched by reframing.
    pub rotation_dims: usize,
}

impl SubActionSpec {
    pub fn new(name: &str, position_dims: usize, rotation_dims: usize) -> Self {
        Self {
            name: name.to_string(),
            position_dims,
            rotation_dims,
        }
    }

    pub fn len(&self) -> usize {
        self.position_dims + self.rotation_dims
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLayout {
    pub subs: Vec<SubActionSpec>,
}

pub const PICK: usize = 0;
pub const PLACE: usize = 1;

impl ActionLayout {
    pub fn new(subs: Vec<SubActionSpec>) -> Result<Self> {
        for s in &subs {
            if !(2..=3).contains(&s.position_dims) || s.rotation_dims > 3 {
                return Err(Error::Config(format!(
                    "bad sub-action slot counts for `{}`",
                    s.name
                )));
            }
        }
        Ok(Self { subs })
    }

    /// Planar pick and place, each `(x, y, yaw)`: D = 6.
    pub fn desk() -> Self {
        Self {
            subs: vec![
                SubActionSpec::new("pick", 2, 1),
                SubActionSpec::new("place", 2, 1),
            ],
        }
    }

    /// Two full 6-DoF poses, each `(x, y, z, rz, rx, ry)`: D = 12.
    pub fn two_pose_6dof() -> Self {
        Self {
            subs: vec![
                SubActionSpec::new("pick", 3, 3),
                SubActionSpec::new("place", 3, 3),
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.subs.iter().map(SubActionSpec::len).sum()
    }

    pub fn offset(&self, sub: usize) -> Result<usize> {
        if sub >= self.subs.len() {
            return Err(Error::SubActionIndex {
                index: sub,
                len: self.subs.len(),
            });
        }
        Ok(self.subs[..sub].iter().map(SubActionSpec::len).sum())
    }

    /// Indices of the (x, y) slots of each sub-action.
    pub fn planar_slots(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.subs.len() * 2);
        let mut off = 0;
        for s in &self.subs {
            out.push(off);
            out.push(off + 1);
            off += s.len();
        }
        out
    }

    /// Layout restricted to the given sub-actions plus the flat slot indices they occupy.
    pub fn select(&self, subs: &[usize]) -> Result<(ActionLayout, Vec<usize>)> {
        let mut slots = Vec::new();
        let mut specs = Vec::new();
        for &s in subs {
            let off = self.offset(s)?;
            slots.extend(off..off + self.subs[s].len());
            specs.push(self.subs[s].clone());
        }
        Ok((ActionLayout { subs: specs }, slots))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Frame {
    /// Table frame in meters.
    Global,
    /// Normalized coordinates of a window: its real-plane rectangle spans `[-1,1]²`.
    Window(Window),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVec {
    pub values: Vec<f64>,
    pub layout: ActionLayout,
    pub frame: Frame,
}

impl ActionVec {
    pub fn new(values: Vec<f64>, layout: ActionLayout, frame: Frame) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::shape(
                format!("{} action slots", layout.dim()),
                values.len(),
            ));
        }
        Ok(Self {
            values,
            layout,
            frame,
        })
    }

    pub fn global(values: Vec<f64>, layout: ActionLayout) -> Result<Self> {
        Self::new(values, layout, Frame::Global)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.layout.clone(), self.frame.clone())
    }

    /// pos(·): the (x, y) of one sub-action in this vector's frame.
    pub fn position(&self, sub: usize) -> Result<Point2> {
        let off = self.layout.offset(sub)?;
        Ok([self.values[off], self.values[off + 1]])
    }

    pub fn set_position(&mut self, sub: usize, xy: Point2) -> Result<()> {
        let off = self.layout.offset(sub)?;
        self.values[off] = xy[0];
        self.values[off + 1] = xy[1];
        Ok(())
    }

    /// Sub-vector for the given sub-actions, same frame.
    pub fn select(&self, subs: &[usize]) -> Result<ActionVec> {
        let (layout, slots) = self.layout.select(subs)?;
        let values = slots.iter().map(|&i| self.values[i]).collect();
        ActionVec::new(values, layout, self.frame.clone())
    }

    fn map_positions(&self, frame: Frame, f: impl Fn(Point2) -> Point2) -> ActionVec {
        let mut values = self.values.clone();
        let slots = self.layout.planar_slots();
        for pair in slots.chunks(2) {
            let xy = f([values[pair[0]], values[pair[1]]]);
            values[pair[0]] = xy[0];
            values[pair[1]] = xy[1];
        }
        ActionVec {
            values,
            layout: self.layout.clone(),
            frame,
        }
    }

    pub fn to_global(&self) -> ActionVec {
        match &self.frame {
            Frame::Global => self.clone(),
            Frame::Window(w) => unnormalize_action(self, w),
        }
    }
}

pub fn fixation_point(a: &ActionVec, sub: usize, camera: &CameraTransform) -> Result<Point2> {
    Ok(camera.real_to_img(a.position(sub)?))
}

/// Re-express `a` (any frame) in the normalized frame of `w`.
pub fn renormalize_action(a: &ActionVec, w: &Window) -> ActionVec {
    let g = a.to_global();
    g.map_positions(Frame::Window(*w), |xy| w.to_local(xy))
}

/// Interpret `a` as normalized coordinates of `w` and map back to the table frame.
pub fn unnormalize_action(a: &ActionVec, w: &Window) -> ActionVec {
    a.map_positions(Frame::Global, |uv| w.from_local(uv))
}

/// Side fraction of the constrained window at time `t`.
pub fn window_fraction(t: f64, spec: &ScheduleSpec, f_min: f64) -> f64 {
    (t / spec.horizon).max(f_min).clamp(0.0, 1.0)
}

/// Window of side `max(t/T, f_min)` of the image around `p`.
///
/// With `jitter`, the center is displaced uniformly over the offsets that
/// keep `p` strictly inside; the window is then shifted back into the image.
pub fn constrain_window<R: Rng + ?Sized>(
    p: Point2,
    t: f64,
    spec: &ScheduleSpec,
    f_min: f64,
    camera: &CameraTransform,
    jitter: Option<&mut R>,
) -> Result<Window> {
    spec.alpha_bar(t)?;
    if !camera.contains_pixel(p) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::OutsideImage {
            x: p[0],
            y: p[1],
            w: camera.image_w,
            h: camera.image_h,
        });
    }
    let f = window_fraction(t, spec, f_min);
    let dims = [camera.image_w as f64, camera.image_h as f64];
    let half = [
        (f * dims[0] / 2.0).max(1.0).min(dims[0] / 2.0),
        (f * dims[1] / 2.0).max(1.0).min(dims[1] / 2.0),
    ];
    let mut center = p;
    if let Some(rng) = jitter {
        for i in 0..2 {
            center[i] += rng.random_range(-half[i]..half[i]);
        }
    }
    for i in 0..2 {
        center[i] = center[i].clamp(half[i], dims[i] - half[i]);
    }
    Window::new(center, half, *camera)
}

/// Set every pixel whose center falls outside `w` to `background`.
pub fn mask_context(image: &Image, w: &Window, background: [f32; 3]) -> Image {
    let mut out = image.clone();
    let (lo, hi) = (w.min_corner(), w.max_corner());
    for row in 0..image.height {
        let v = row as f64 + 0.5;
        let row_in = v >= lo[1] && v <= hi[1];
        for col in 0..image.width {
            let u = col as f64 + 0.5;
            if !(row_in && u >= lo[0] && u <= hi[0]) {
                out.set(row, col, background);
            }
        }
    }
    out
}

/// Render the scene restricted to the window's real-plane rectangle.
pub fn zoom_context(scene: &SceneSpec, w: &Window, out_h: usize, out_w: usize) -> Result<Image> {
    if !(w.half_extent[0] > 0.0 && w.half_extent[1] > 0.0) {
        return Err(Error::DegenerateWindow(format!(
            "half extent {:?}",
            w.half_extent
        )));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::DegenerateWindow("empty output size".into()));
    }
    Ok(render_with(scene, &w.zoom_transform(out_h, out_w)))
}

/// Zoom by bilinear resampling of a cached render of the full parent image
/// at any resolution (typically several times the parent's).
pub fn zoom_context_resampled(
    cached: &Image,
    w: &Window,
    out_h: usize,
    out_w: usize,
) -> Result<Image> {
    if !(w.half_extent[0] > 0.0 && w.half_extent[1] > 0.0) {
        return Err(Error::DegenerateWindow(format!(
            "half extent {:?}",
            w.half_extent
        )));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::DegenerateWindow("empty output size".into()));
    }
    let k = [
        cached.width as f64 / w.parent.image_w as f64,
        cached.height as f64 / w.parent.image_h as f64,
    ];
    let lo = w.min_corner();
    let mut out = Image::filled(out_h, out_w, [0.0; 3]);
    for row in 0..out_h {
        let v = lo[1] + (row as f64 + 0.5) / out_h as f64 * 2.0 * w.half_extent[1];
        for col in 0..out_w {
            let u = lo[0] + (col as f64 + 0.5) / out_w as f64 * 2.0 * w.half_extent[0];
            out.set(row, col, cached.bilinear(u * k[0], v * k[1]));
        }
    }
    Ok(out)
}

/// Wrap an angle into `(-period/2, period/2]`.
pub fn wrap_angle(theta: f64, period: f64) -> f64 {
    let half = period / 2.0;
    let mut r = (theta + half).rem_euclid(period) - half;
    if r <= -half {
        r += period;
    }
    r
}
