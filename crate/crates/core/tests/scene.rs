use c3dm_core::geometry::{fixation_point, PICK};
use c3dm_core::scene::{
    hue_deg, hue_distance, oracle_action, render, sample_scene, separated, success,
    swap_distractors, Demo, Image, ObjectSpec, Role, SceneSpec, Shape, TableBounds, TaskConfig,
    View, HUE_SEPARATION_DEG,
};
use proptest::prelude::*;

fn lone_square(half_size: f64, position: [f64; 2], yaw: f64) -> SceneSpec {
    let task = TaskConfig::default();
    SceneSpec {
        objects: vec![ObjectSpec {
            shape: Shape::SquareBlock,
            half_size,
            position,
            yaw,
            color: task.target_color,
            role: Role::PickTarget,
        }],
        table_bounds: TableBounds::square(task.table_half),
        table_color: task.table_color,
        seed: 0,
    }
}

fn centroid(img: &Image, color: [f32; 3]) -> [f64; 2] {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for r in 0..img.height {
        for c in 0..img.width {
            if img.get(r, c) == color {
                sx += c as f64 + 0.5;
                sy += r as f64 + 0.5;
                n += 1.0;
            }
        }
    }
    [sx / n, sy / n]
}

#[test]
fn empty_table_is_uniform() {
    let mut scene = lone_square(0.03, [0.0, 0.0], 0.0);
    scene.objects.clear();
    let img = render(&scene, &View::Full, 64, 64);
    assert_eq!(img.count_color(scene.table_color), 64 * 64);
}

#[test]
fn square_pixel_area_matches_geometry() {
    for (s, pos) in [
        (0.03, [0.0, 0.0]),
        (0.05, [0.11, -0.2]),
        (0.1, [-0.3, 0.27]),
        (0.2, [0.013, 0.0]),
    ] {
        let scene = lone_square(s, pos, 0.0);
        for size in [64, 128] {
            let img = render(&scene, &View::Full, size, size);
            let side = 2.0 * s * size as f64;
            let count = img.count_color(scene.objects[0].color) as f64;
            // one pixel ring around the perimeter may go either way
            let band = 4.0 * side + 4.0;
            assert!(
                (count - side * side).abs() <= band,
                "s={s} size={size}: {count} vs {}",
                side * side
            );
        }
    }
}

#[test]
fn supersampled_render_agrees_with_base_render() {
    let task = TaskConfig::default();
    for seed in 0..20 {
        let scene = sample_scene(&task, seed).unwrap();
        let base = render(&scene, &View::Full, 64, 64);
        let fine = render(&scene, &View::Full, 128, 128).downsample(2).unwrap();
        let err = base.max_abs_diff(&fine);
        assert!(err <= 0.25, "seed {seed}: {err}");
    }
}

#[test]
fn pixels_outside_bounding_boxes_keep_the_table_color() {
    let task = TaskConfig::default();
    for seed in 0..20 {
        let scene = sample_scene(&task, seed).unwrap();
        let img = render(&scene, &View::Full, 64, 64);
        let cam = scene.camera(64, 64);
        for r in 0..64 {
            for c in 0..64 {
                let p = cam.pixel_center(r, c);
                let near = scene.objects.iter().any(|o| {
                    let rad = o.bounding_radius();
                    (p[0] - o.position[0]).abs() <= rad && (p[1] - o.position[1]).abs() <= rad
                });
                if !near {
                    assert_eq!(img.get(r, c), scene.table_color);
                }
            }
        }
    }
}

#[test]
fn renders_are_deterministic() {
    let task = TaskConfig::default();
    let a = sample_scene(&task, 42).unwrap();
    let b = sample_scene(&task, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        render(&a, &View::Full, 64, 64),
        render(&b, &View::Full, 64, 64)
    );
}

#[test]
fn oracle_fixation_lands_on_the_rendered_target() {
    let task = TaskConfig::default();
    for seed in 0..200 {
        let scene = sample_scene(&task, seed).unwrap();
        let demo = Demo::from_scene(scene.clone());
        let img = render(&scene, &View::Full, 64, 64);
        let cam = scene.camera(64, 64);
        let p = fixation_point(&demo.action, PICK, &cam).unwrap();
        let c = centroid(&img, scene.target().color);
        assert!(
            (p[0] - c[0]).abs() <= 0.5 && (p[1] - c[1]).abs() <= 0.5,
            "seed {seed}: {p:?} vs {c:?}"
        );
    }
}

#[test]
fn sampled_scenes_never_overlap() {
    let task = TaskConfig::default();
    for seed in 0..1000 {
        let scene = sample_scene(&task, seed).unwrap();
        for (i, a) in scene.objects.iter().enumerate() {
            for b in &scene.objects[i + 1..] {
                assert!(separated(a, b, task.margin), "seed {seed}");
            }
            let tb = &scene.table_bounds;
            assert!(
                a.position[0] - a.half_size >= tb.min[0]
                    && a.position[0] + a.half_size <= tb.max[0]
            );
            assert!(
                a.position[1] - a.half_size >= tb.min[1]
                    && a.position[1] + a.half_size <= tb.max[1]
            );
        }
        assert!(success(
            &scene,
            &oracle_action(&scene),
            task.tol_pos,
            task.tol_yaw,
            true
        ));
    }
}

#[test]
fn distractor_order_does_not_change_the_oracle() {
    let task = TaskConfig {
        n_distractors: 5,
        ..TaskConfig::default()
    };
    for seed in 0..50 {
        let scene = sample_scene(&task, seed).unwrap();
        let mut permuted = scene.clone();
        permuted.objects.reverse();
        assert_eq!(oracle_action(&scene), oracle_action(&permuted));
    }
}

#[test]
fn swapped_distractors_leave_the_training_palette() {
    let task = TaskConfig::default();
    let seen: Vec<f64> = task
        .distractor_palette
        .iter()
        .filter_map(|&c| hue_deg(c))
        .collect();
    for seed in 0..100 {
        let scene = sample_scene(&task, seed).unwrap();
        let swapped = swap_distractors(&scene, &task, seed);
        assert_eq!(scene.target(), swapped.target());
        assert_eq!(scene.goal(), swapped.goal());
        for (a, b) in scene.distractors().zip(swapped.distractors()) {
            assert_eq!(a.position, b.position);
            assert!(task.unseen_shapes.contains(&b.shape));
            let h = hue_deg(b.color).unwrap();
            assert!(seen
                .iter()
                .all(|&s| hue_distance(h, s) >= HUE_SEPARATION_DEG));
        }
    }
    let bare = TaskConfig {
        n_distractors: 0,
        ..TaskConfig::default()
    };
    let scene = sample_scene(&bare, 3).unwrap();
    assert_eq!(swap_distractors(&scene, &bare, 3), scene);
}

proptest! {
    #[test]
    fn quarter_turns_keep_demos_consistent(seed in 0u64..500, k in 0u32..4) {
        let demo = Demo::from_scene(sample_scene(&TaskConfig::default(), seed).unwrap());
        let rotated = demo.rotated(k);
        prop_assert!(success(&rotated.scene, &rotated.action, 1e-9, 1e-9, true));
        prop_assert_eq!(rotated.scene.objects.len(), demo.scene.objects.len());
    }
}
