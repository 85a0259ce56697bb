use fdia_core::nn::*;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((rows, cols), |_| n.sample(&mut rng))
}

fn main() {
    let kind = MmdKind::Gaussian { bandwidth: Some(1.2) };
    let mut s = batch(8, 5, 1);
    let t = batch(6, 5, 2) * 1.3 + 0.2;
    let (v, gs, _gt) = mmd_with_grads(&s, &t, &kind).unwrap();
    println!("est = {v:.6e}");
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let orig = s[(i, j)];
            s[(i, j)] = orig + eps;
            let up = mmd(&s, &t, &kind).unwrap();
            s[(i, j)] = orig - eps;
            let dn = mmd(&s, &t, &kind).unwrap();
            s[(i, j)] = orig;
            let fd = (up - dn) / (2.0 * eps);
            let denom = gs[(i, j)].abs().max(fd.abs()).max(1e-10);
            worst = worst.max((gs[(i, j)] - fd).abs() / denom);
        }
    }
    println!("worst rel err on source grads: {worst:.3e}");
}
