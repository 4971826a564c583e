use lfcs_core::{gen_scene, LayerSpec, Region, SceneSpec};
use lfcs_nets::warp_to_center;
use proptest::prelude::*;

/// Background plane plus up to three rectangles and discs, all at integer
/// disparities so every warped sample lands on a pixel.
fn layered_spec(size: usize, views: usize, layers: &[(i32, u8, f64, f64, f64)]) -> SceneSpec {
    let mut spec = SceneSpec {
        height: size,
        width: size,
        views,
        dmax: 4.0,
        layers: vec![LayerSpec {
            disparity: 0.0,
            region: Region::Full,
        }],
    };
    for &(d, kind, a, b, r) in layers {
        let s = size as f64;
        let region = if kind == 0 {
            Region::Rect {
                top: a * s,
                left: b * s,
                height: r * s,
                width: r * s,
            }
        } else {
            Region::Disc {
                row: a * s,
                col: b * s,
                radius: r * s * 0.5,
            }
        };
        spec.layers.push(LayerSpec {
            disparity: d as f64,
            region,
        });
    }
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn warping_with_true_disparity_recovers_visible_center_pixels(
        views in 2usize..4,
        layers in prop::collection::vec((-2i32..=2, 0u8..2, 0.0f64..0.8, 0.0f64..0.8, 0.2f64..0.5), 0..4),
        seed in any::<u64>(),
    ) {
        let spec = layered_spec(16, views, &layers);
        let scene = gen_scene(&spec, seed).unwrap();
        let lf = &scene.light_field;
        let s = lf.shape();
        let center = s.center_index();
        for u in 0..views {
            for v in 0..views {
                let warped = warp_to_center(lf, &scene.disparity, u, v).unwrap();
                let (ku, kv) = s.view_offset(u, v);
                for x in 0..s.height {
                    for y in 0..s.width {
                        let p = x * s.width + y;
                        if !warped.valid[p] {
                            continue;
                        }
                        let d = scene.disparity.get(x, y) as f64;
                        let (sx, sy) = ((x as f64 - ku * d) as usize, (y as f64 - kv * d) as usize);
                        // Skip pixels whose layer is hidden in this view.
                        if scene.visible_layer(sx, sy, u, v) != scene.visible_layer(x, y, center, center) {
                            continue;
                        }
                        for c in 0..3 {
                            let diff = (warped.image[p * 3 + c] - lf.get(x, y, center, center, c)).abs();
                            prop_assert!(diff <= 1e-6, "view ({u},{v}) pixel ({x},{y}) c{c}: {diff}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ground_truth_disparity_only_takes_layer_values(
        layers in prop::collection::vec((-2i32..=2, 0u8..2, 0.0f64..0.8, 0.0f64..0.8, 0.2f64..0.5), 0..4),
        seed in any::<u64>(),
    ) {
        let spec = layered_spec(12, 2, &layers);
        let scene = gen_scene(&spec, seed).unwrap();
        let allowed: Vec<f32> = spec.layers.iter().map(|l| l.disparity as f32).collect();
        prop_assert!(scene.disparity.as_slice().iter().all(|d| allowed.contains(d)));
    }
}
