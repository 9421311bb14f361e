//! False-color previews of feature grids via PCA.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::raster::BevGrid;

const POWER_ITERS: usize = 100;
const INIT_SEED: u64 = 0x5eed;

/// Top principal directions of the pixel-feature covariance by power
/// iteration with deflation. Each direction is sign-fixed so its
/// largest-magnitude entry is positive; zero-variance directions are zero.
pub fn principal_components(grid: &BevGrid, k: usize) -> Vec<Vec<f64>> {
    let c = grid.channels;
    let n = grid.height * grid.width;
    if n == 0 || c == 0 {
        return vec![vec![0.0; c]; k];
    }
    let mut mean = vec![0.0; c];
    for px in grid.data.chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; c * c];
    for px in grid.data.chunks_exact(c) {
        for i in 0..c {
            let di = px[i] - mean[i];
            for j in 0..c {
                cov[i * c + j] += di * (px[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|v| *v /= n as f64);
    let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut rng = ChaCha8Rng::seed_from_u64(INIT_SEED);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut lambda = 0.0;
        let mut alive = scale > 0.0;
        for _ in 0..POWER_ITERS {
            if !alive {
                break;
            }
            let w: Vec<f64> = (0..c).map(|i| (0..c).map(|j| cov[i * c + j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm <= 1e-12 * scale {
                alive = false;
                break;
            }
            v = w.into_iter().map(|x| x / norm).collect();
            lambda = norm;
        }
        if !alive {
            out.push(vec![0.0; c]);
            continue;
        }
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..c {
            for j in 0..c {
                cov[i * c + j] -= lambda * v[i] * v[j];
            }
        }
        out.push(v);
    }
    out
}

/// Renders the grid as a binary PPM (`P6`, maxval 255).
///
/// With three or more channels the top three principal components map to
/// red, green and blue. With fewer, the leading component is shown in gray.
/// Each component is min-max stretched to `[0, 255]`; a flat component
/// maps to 128.
pub fn preview_pca(grid: &BevGrid) -> Vec<u8> {
    let (h, w, c) = grid.shape();
    let k = if c >= 3 { 3 } else { 1 };
    let comps = principal_components(grid, k);
    let mut channels: Vec<Vec<u8>> = comps
        .iter()
        .map(|v| {
            let scores: Vec<f64> = grid
                .data
                .chunks_exact(c.max(1))
                .map(|px| px.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect();
            stretch(&scores)
        })
        .collect();
    if channels.is_empty() || c == 0 {
        channels = vec![vec![128; h * w]];
    }
    while channels.len() < 3 {
        channels.push(channels[0].clone());
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for p in 0..h * w {
        out.extend(channels.iter().map(|ch| ch[p]));
    }
    out
}

fn stretch(scores: &[f64]) -> Vec<u8> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) {
        return vec![128; scores.len()];
    }
    scores
        .iter()
        .map(|s| (255.0 * (s - lo) / span).round().clamp(0.0, 255.0) as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid_is_uniform_gray() {
        let mut g = BevGrid::zeros(3, 4, 5);
        g.data.fill(0.7);
        let ppm = preview_pca(&g);
        let header = b"P6\n4 3\n255\n";
        assert!(ppm.starts_with(header));
        assert_eq!(ppm.len(), header.len() + 3 * 4 * 3);
        assert!(ppm[header.len()..].iter().all(|&b| b == 128));
    }

    #[test]
    fn single_channel_is_gray() {
        let mut g = BevGrid::zeros(1, 3, 1);
        g.data = vec![0.0, 1.0, 2.0];
        let ppm = preview_pca(&g);
        let body = &ppm[ppm.len() - 9..];
        assert_eq!(body, &[0, 0, 0, 128, 128, 128, 255, 255, 255]);
    }

    #[test]
    fn preview_is_deterministic() {
        let mut g = BevGrid::zeros(5, 5, 6);
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = ((i * 37) % 11) as f64 * 0.1;
        }
        assert_eq!(preview_pca(&g), preview_pca(&g));
    }
}
