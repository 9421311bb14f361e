use bevsplat::camera::{
    backproject, compose_rotation, decode_camera, decode_depth, encode_depth, ray_quaternion, CameraCalib, RawHeadGrid,
};
use bevsplat::io;
use bevsplat::losses::{bce_loss, depth_loss};
use bevsplat::nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use bevsplat::{render, render_naive, BevGrid, Gaussian, GaussianScene, Mask, Quat, RenderConfig};
use proptest::prelude::*;

fn calib(fx: f64, f_ref: f64, rot: Quat, t: [f64; 3], w: usize, h: usize) -> CameraCalib {
    CameraCalib::new(
        fx,
        fx * 1.1,
        w as f64 / 2.0,
        h as f64 / 2.0,
        rot.normalized().to_rotation_matrix(),
        Vector3::from(t),
        w,
        h,
        f_ref,
    )
    .unwrap()
}

fn quat() -> impl Strategy<Value = Quat> {
    prop::array::uniform4(-1.0..1.0f64)
        .prop_filter("near zero", |a| a.iter().map(|v| v * v).sum::<f64>() > 0.05)
        .prop_map(Quat::from_array)
}

fn oracle(q: Quat) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q.w, q.x, q.y, q.z))
}

fn gaussian(c: usize) -> impl Strategy<Value = Gaussian> {
    (
        prop::array::uniform3(-8.0..8.0f64),
        prop::array::uniform3(0.2..3.0f64),
        quat(),
        0.05..0.95f64,
        prop::collection::vec(-2.0..2.0f64, c),
    )
        .prop_map(|(center, scale, q, opacity, embedding)| Gaussian {
            center: center.into(),
            scale: scale.into(),
            rotation: q.normalized(),
            opacity,
            embedding,
        })
}

fn scene(c: usize, max: usize) -> impl Strategy<Value = GaussianScene> {
    prop::collection::vec(gaussian(c), 0..max).prop_map(move |gs| {
        let mut s = GaussianScene::new(c);
        for g in gs {
            s.push(g).unwrap();
        }
        s
    })
}

fn small_cfg() -> RenderConfig {
    RenderConfig {
        x_range: [-10.0, 10.0],
        y_range: [-8.0, 8.0],
        resolution: 0.5,
        tile: 8,
        ..RenderConfig::default()
    }
}

proptest! {
    #[test]
    fn depth_round_trip(z in 0.1..100.0f64, fx in 10.0..2000.0f64, ratio in 0.2..5.0f64) {
        // Keeps d = 1/(z·f_ref/fx + 1) above the 1e-3 disparity clamp.
        let c = calib(fx, fx / ratio, Quat::IDENTITY, [0.0; 3], 4, 4);
        let back = decode_depth(encode_depth(z, &c), &c).0;
        prop_assert!(((back - z) / z).abs() <= 1e-9, "{z} -> {back}");
    }

    #[test]
    fn backprojection_lies_on_ray(u in 0.0..64.0f64, v in 0.0..48.0f64, z in 0.1..100.0f64, fx in 20.0..800.0f64) {
        let c = calib(fx, fx, Quat::IDENTITY, [0.0; 3], 64, 48);
        let (p, _) = backproject(u, v, z, &c);
        prop_assert!(p.cross(&c.ray(u, v)).norm() <= 1e-9);
    }

    #[test]
    fn composed_rotation_matches_matrix_oracle(cam in quat(), raw in quat(), u in 0.0..32.0f64, v in 0.0..24.0f64) {
        let c = calib(40.0, 40.0, cam, [0.0; 3], 32, 24);
        let q_ray = ray_quaternion(u, v, &c);
        let (q_w, _) = compose_rotation(q_ray, raw, &c).unwrap();
        prop_assert!((q_w.norm() - 1.0).abs() <= 1e-9);
        prop_assert!(q_w.w >= 0.0);
        let expected = oracle(c.rotation_quaternion()) * oracle(q_ray) * oracle(raw);
        let got = q_w.to_rotation_matrix();
        prop_assert!((got - expected.to_rotation_matrix().into_inner()).abs().max() <= 1e-9);
    }

    #[test]
    fn identity_raw_rotation_points_along_ray(cam in quat(), u in 0.0..32.0f64, v in 0.0..24.0f64) {
        let c = calib(40.0, 40.0, cam, [0.0; 3], 32, 24);
        let (q_w, _) = compose_rotation(ray_quaternion(u, v, &c), Quat::IDENTITY, &c).unwrap();
        let axis = q_w.rotate(&Vector3::z());
        let ray = c.rotation * c.ray(u, v).normalize();
        prop_assert!((axis - ray).norm() <= 1e-9);
    }

    #[test]
    fn translation_is_equivariant(cam in quat(), t in prop::array::uniform3(-20.0..20.0f64),
                                  delta in prop::array::uniform3(-20.0..20.0f64), seed in 0u64..1000) {
        let raw = raw_grid(seed, 3, 2);
        let a = decode_camera(&raw, &calib(30.0, 25.0, cam, t, 3, 2)).unwrap().0;
        let shifted = [t[0] + delta[0], t[1] + delta[1], t[2] + delta[2]];
        let b = decode_camera(&raw, &calib(30.0, 25.0, cam, shifted, 3, 2)).unwrap().0;
        for (ga, gb) in a.gaussians.iter().zip(&b.gaussians) {
            prop_assert!((gb.center - ga.center - Vector3::from(delta)).norm() <= 1e-12 * (1.0 + ga.center.norm() + 40.0));
            prop_assert_eq!(ga.rotation, gb.rotation);
        }
    }

    #[test]
    fn negated_raw_quaternion_decodes_identically(seed in 0u64..1000, cam in quat()) {
        let raw = raw_grid(seed, 2, 2);
        let mut neg = raw.clone();
        for q in &mut neg.rotation {
            q.iter_mut().for_each(|v| *v = -*v);
        }
        let c = calib(30.0, 30.0, cam, [1.0, 2.0, 3.0], 2, 2);
        let a = decode_camera(&raw, &c).unwrap().0;
        let b = decode_camera(&neg, &c).unwrap().0;
        for (ga, gb) in a.gaussians.iter().zip(&b.gaussians) {
            let diff = (ga.rotation.to_vector() - gb.rotation.to_vector()).abs().max();
            prop_assert!(diff <= 1e-15, "{:?} vs {:?}", ga.rotation, gb.rotation);
        }
    }

    #[test]
    fn render_ignores_quaternion_sign(s in scene(2, 12)) {
        let cfg = small_cfg();
        let mut flipped = s.clone();
        for g in &mut flipped.gaussians {
            g.rotation = g.rotation.neg();
        }
        prop_assert_eq!(render(&s, &cfg), render(&flipped, &cfg));
    }

    #[test]
    fn render_is_linear_in_embeddings(s in scene(3, 12), a in -2.0..2.0f64, b in -2.0..2.0f64, seed in 0u64..1000) {
        let cfg = small_cfg();
        let mut other = s.clone();
        for (i, g) in other.gaussians.iter_mut().enumerate() {
            for (k, e) in g.embedding.iter_mut().enumerate() {
                *e = (((seed as usize + 7 * i + 3 * k) % 13) as f64 - 6.0) / 4.0;
            }
        }
        let mut mixed = s.clone();
        for (g, o) in mixed.gaussians.iter_mut().zip(&other.gaussians) {
            for (e, eo) in g.embedding.iter_mut().zip(&o.embedding) {
                *e = a * *e + b * eo;
            }
        }
        let (r1, r2, rm) = (render(&s, &cfg), render(&other, &cfg), render(&mixed, &cfg));
        for i in 0..rm.data.len() {
            let want = a * r1.data[i] + b * r2.data[i];
            prop_assert!((rm.data[i] - want).abs() <= 1e-12 * (1.0 + a.abs() * 2.0 + b.abs() * 2.0));
        }
    }

    #[test]
    fn single_gaussian_is_bounded(g in gaussian(3)) {
        let cfg = small_cfg();
        let norm = g.embedding.iter().map(|e| e * e).sum::<f64>().sqrt();
        let mut s = GaussianScene::new(3);
        s.push(g).unwrap();
        let grid = render(&s, &cfg);
        for px in grid.data.chunks_exact(3) {
            let n = px.iter().map(|e| e * e).sum::<f64>().sqrt();
            prop_assert!(n <= cfg.alpha_max * norm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn tiled_matches_naive_without_thresholds(s in scene(2, 30), tile in 1usize..20) {
        let cfg = RenderConfig { tile, ..small_cfg() }.without_thresholds();
        let (a, b) = (render(&s, &cfg), render_naive(&s, &cfg));
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn bce_matches_textbook_form(x in -10.0..10.0f64, y in prop::bool::ANY) {
        let y = if y { 1.0 } else { 0.0 };
        let s = 1.0 / (1.0 + (-x).exp());
        let want = -(y * s.ln() + (1.0 - y) * (1.0 - s).ln());
        let got = bce_loss(&[x], &[y], None).unwrap().value;
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-6));
    }

    #[test]
    fn depth_loss_is_symmetric(a in prop::collection::vec(0.01..100.0f64, 1..20), seed in 0u64..1000) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * (1.0 + ((seed as usize + i) % 7) as f64 * 0.3)).collect();
        prop_assert_eq!(depth_loss(&a, &b, None).unwrap().value, depth_loss(&b, &a, None).unwrap().value);
    }

    #[test]
    fn scene_file_round_trips(s in scene(3, 10)) {
        // Round to f32 first; the file stores single precision.
        let mut s32 = s.clone();
        for g in &mut s32.gaussians {
            let f = |v: &mut f64| *v = *v as f32 as f64;
            g.center.iter_mut().for_each(f);
            g.scale.iter_mut().for_each(f);
            let mut q = g.rotation.to_array();
            q.iter_mut().for_each(f);
            g.rotation = Quat::from_array(q);
            f(&mut g.opacity);
            g.embedding.iter_mut().for_each(f);
        }
        prop_assert_eq!(io::decode_scene(&io::encode_scene(&s32)).unwrap(), s32);
    }

    #[test]
    fn pfm_round_trips(h in 1usize..6, w in 1usize..6, c in 1usize..9, seed in 0u64..1000) {
        let mut g = BevGrid::zeros(h, w, c);
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = ((i as u64 * 2654435761 + seed) % 1000) as f32 as f64 / 7.0f32 as f64;
            *v = *v as f32 as f64;
        }
        prop_assert_eq!(io::decode_grid_pfm(&io::encode_grid_pfm(&g)).unwrap(), g);
    }

    #[test]
    fn pgm_round_trips(bits in prop::collection::vec(prop::bool::ANY, 12)) {
        let m = Mask { height: 3, width: 4, data: bits };
        prop_assert_eq!(io::decode_mask_pgm(&io::encode_mask_pgm(&m)).unwrap(), m);
    }

    #[test]
    fn calib_file_round_trips(cam in quat(), t in prop::array::uniform3(-5.0..5.0f64)) {
        let c = calib(321.5, 300.0, cam, t, 16, 9);
        let file = io::CalibFile::from_calibs(std::slice::from_ref(&c)).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back: io::CalibFile = serde_json::from_str(&text).unwrap();
        let loaded = back.to_calibs().unwrap();
        prop_assert!((loaded[0].rotation - c.rotation).abs().max() <= 1e-12);
        prop_assert_eq!(loaded[0].translation, c.translation);
        prop_assert_eq!((loaded[0].fx, loaded[0].width), (c.fx, c.width));
    }
}

fn raw_grid(seed: u64, w: usize, h: usize) -> RawHeadGrid {
    let mut raw = RawHeadGrid::zeros(w, h, 2);
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..raw.n_pixels() {
        raw.disparity[i] = 0.1 + 0.8 * next();
        raw.offset[i] = [next() - 0.5, next() - 0.5, next() - 0.5];
        raw.rotation[i] = [0.5 + next(), next() - 0.5, next() - 0.5, next() - 0.5];
        raw.scale[i] = [0.2 + next(), -0.2 - next(), 0.5];
        raw.opacity_logit[i] = 4.0 * next() - 2.0;
    }
    raw
}

#[test]
fn quaternion_oracle_agrees_on_hamilton_product() {
    let a = Quat::new(0.3, -0.2, 0.9, 0.1).normalized();
    let b = Quat::new(-0.5, 0.4, 0.1, 0.7).normalized();
    let ours = a.mul(b);
    let theirs = oracle(a) * oracle(b);
    let m: Matrix3<f64> = theirs.to_rotation_matrix().into_inner();
    assert!((ours.to_rotation_matrix() - m).abs().max() < 1e-12);
}
