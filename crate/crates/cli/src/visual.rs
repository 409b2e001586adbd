//! PPM snapshots of denoising chains: the scene with the context window
//! outlined and the fixation point marked.

use std::fs;
use std::path::{Path, PathBuf};

use c3dm_core::fddp::DenoiseTrace;
use c3dm_core::geometry::Window;
use c3dm_core::scene::{render, Image, SceneSpec, View};

use crate::error::HarnessError;

const UPSCALE: usize = 4;
const WINDOW_COLOR: [f32; 3] = [1.0, 1.0, 1.0];
const FIXATION_COLOR: [f32; 3] = [0.0, 0.0, 0.0];

pub fn trace_file_name(episode: usize, sub: usize, step: usize) -> String {
    format!("ep{episode}_sub{sub}_t{step}.ppm")
}

fn plot(img: &mut Image, x: isize, y: isize, c: [f32; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width && (y as usize) < img.height {
        img.set(y as usize, x as usize, c);
    }
}

fn outline(img: &mut Image, w: &Window, k: f64) {
    let (lo, hi) = (w.min_corner(), w.max_corner());
    let (x0, y0) = ((lo[0] * k).round() as isize, (lo[1] * k).round() as isize);
    let (x1, y1) = (
        (hi[0] * k).round() as isize - 1,
        (hi[1] * k).round() as isize - 1,
    );
    for x in x0..=x1 {
        plot(img, x, y0, WINDOW_COLOR);
        plot(img, x, y1, WINDOW_COLOR);
    }
    for y in y0..=y1 {
        plot(img, x0, y, WINDOW_COLOR);
        plot(img, x1, y, WINDOW_COLOR);
    }
}

fn cross(img: &mut Image, p: [f64; 2], k: f64) {
    let (cx, cy) = ((p[0] * k) as isize, (p[1] * k) as isize);
    for d in -3..=3 {
        plot(img, cx + d, cy, FIXATION_COLOR);
        plot(img, cx, cy + d, FIXATION_COLOR);
    }
}

/// One image per chain and step. Returns the written paths.
pub fn write_trace_images(
    dir: &Path,
    episode: usize,
    scene: &SceneSpec,
    traces: &[DenoiseTrace],
    image_size: usize,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let size = image_size * UPSCALE;
    let base = render(scene, &View::Full, size, size);
    let k = UPSCALE as f64;
    let mut paths = Vec::new();
    for trace in traces {
        for (step, s) in trace.steps.iter().enumerate() {
            let mut img = base.clone();
            outline(&mut img, &s.window, k);
            cross(&mut img, s.fixation, k);
            let path = dir.join(trace_file_name(episode, trace.chain, step));
            img.save_ppm(&path)?;
            paths.push(path);
        }
    }
    Ok(paths)
}
