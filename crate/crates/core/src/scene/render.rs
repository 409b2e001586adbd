//! Orthographic, flat-shaded rasterization sampled at pixel centers.

use crate::geometry::{CameraTransform, Window};

use super::{Image, ObjectSpec, SceneSpec, Shape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum View {
    Full,
    Window(Window),
}

/// Render `scene` at `out_h x out_w`, either the whole table or a window of
/// the base camera.
pub fn render(scene: &SceneSpec, view: &View, out_h: usize, out_w: usize) -> Image {
    let camera = match view {
        View::Full => scene.camera(out_h, out_w),
        View::Window(w) => w.zoom_transform(out_h, out_w),
    };
    render_with(scene, &camera)
}

/// Render through an arbitrary table-to-pixel transform.
pub fn render_with(scene: &SceneSpec, camera: &CameraTransform) -> Image {
    let (h, w) = (camera.image_h, camera.image_w);
    let mut img = Image::filled(h, w, scene.table_color);
    let tb = &scene.table_bounds;
    // Off-table area keeps the table color; objects are painted in list order.
    for obj in &scene.objects {
        let r = obj.bounding_radius();
        let a = camera.real_to_img([obj.position[0] - r, obj.position[1] - r]);
        let b = camera.real_to_img([obj.position[0] + r, obj.position[1] + r]);
        let (u0, u1) = (a[0].min(b[0]), a[0].max(b[0]));
        let (v0, v1) = (a[1].min(b[1]), a[1].max(b[1]));
        let cols = pixel_span(u0, u1, w);
        let rows = pixel_span(v0, v1, h);
        let (cos, sin) = (obj.yaw.cos(), obj.yaw.sin());
        for row in rows {
            for col in cols.clone() {
                let p = camera.pixel_center(row, col);
                if p[0] < tb.min[0] || p[0] > tb.max[0] || p[1] < tb.min[1] || p[1] > tb.max[1] {
                    continue;
                }
                let (dx, dy) = (p[0] - obj.position[0], p[1] - obj.position[1]);
                // rotate into the object frame
                let lx = cos * dx + sin * dy;
                let ly = -sin * dx + cos * dy;
                if covers(obj, lx, ly) {
                    img.set(row, col, obj.color);
                }
            }
        }
    }
    img
}

fn pixel_span(lo: f64, hi: f64, n: usize) -> std::ops::Range<usize> {
    // pixel k is sampled at k + 0.5
    let start = (lo - 0.5).ceil().max(0.0);
    let end = ((hi - 0.5).floor() + 1.0).min(n as f64);
    if end <= start {
        0..0
    } else {
        start as usize..end as usize
    }
}

#[inline]
fn covers(obj: &ObjectSpec, lx: f64, ly: f64) -> bool {
    let s = obj.half_size;
    match obj.shape {
        Shape::SquareBlock => lx.abs() <= s && ly.abs() <= s,
        Shape::DiskBowl => lx * lx + ly * ly <= s * s,
        Shape::Bar => lx.abs() <= s && ly.abs() <= s / 3.0,
        Shape::Ell => {
            let in_box = lx.abs() <= s && ly.abs() <= s;
            in_box && (lx <= -s / 3.0 || ly <= -s / 3.0)
        }
    }
}
