use bevsplat::fit::{fit, FitProblem, Preset};
use bevsplat::nalgebra::Vector3;
use bevsplat::{preview_pca, render, render_backward, BevGrid, Gaussian, GaussianScene, Quat, RenderConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn busy_scene(n: usize, c: usize, seed: u64) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = GaussianScene::new(c);
    for _ in 0..n {
        s.push(Gaussian {
            center: Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.0..3.0)),
            scale: Vector3::new(rng.random_range(0.2..2.0), rng.random_range(0.2..2.0), rng.random_range(0.2..2.0)),
            rotation: Quat::new(1.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                .normalized(),
            opacity: rng.random_range(0.05..0.95),
            embedding: (0..c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .unwrap();
    }
    s
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn render_and_backward_are_thread_independent() {
    let cfg = RenderConfig {
        x_range: [-25.0, 25.0],
        y_range: [-25.0, 25.0],
        ..RenderConfig::default()
    };
    let scene = busy_scene(400, 5, 1);
    let mut d_grid = BevGrid::zeros(cfg.height(), cfg.width(), 5);
    for (i, v) in d_grid.data.iter_mut().enumerate() {
        *v = ((i * 7919) % 101) as f64 / 50.0 - 1.0;
    }
    let run = || {
        let grid = render(&scene, &cfg);
        let grads = render_backward(&scene, &cfg, &d_grid).unwrap();
        let mut flat = grads.opacity.clone();
        flat.extend(&grads.embedding);
        for i in 0..grads.len() {
            flat.extend(grads.center[i].iter());
            flat.extend(grads.scale[i].iter());
            flat.extend(grads.rotation[i].iter());
        }
        (bits(&grid.data), bits(&flat), preview_pca(&grid))
    };
    let reference = in_pool(1, run);
    for threads in [1, 2, 8] {
        assert!(in_pool(threads, run) == reference, "differs with {threads} threads");
    }
}

#[test]
fn fit_is_thread_independent() {
    let mut problem = FitProblem::from_preset(Preset::TwoBoxes, 5);
    problem.optimizer.steps = 15;
    let reference = in_pool(1, || fit(&problem).unwrap().report);
    for threads in [1, 2, 8] {
        let report = in_pool(threads, || fit(&problem).unwrap().report);
        assert!(report.same_result(&reference), "differs with {threads} threads");
    }
}
