use fdia_core::nn::*;
use ndarray::Array2;
use std::time::Instant;

fn main() {
    let cfg = MLPConfig::new(96);
    let model = MLPModel::init(cfg, 1).unwrap();
    for &m in &[100usize, 1000] {
        let xs = Array2::from_shape_fn((m, 96), |(i, j)| ((i * 7 + j) % 13) as f64 * 0.1);
        let xt = xs.clone() * 1.1;
        let mut ys = Array2::zeros((m, 2));
        for i in 0..m { ys[(i, i % 2)] = 1.0; }
        let t0 = Instant::now();
        let iters = 50;
        for _ in 0..iters {
            let (cache, _) = forward_joint(&model, &xs, &xt).unwrap();
            let g = backward(&model, &cache, &ys, 0.01, 500.0, &MmdKind::MeanDifference).unwrap();
            std::hint::black_box(g.to_vec());
        }
        println!("batch {m}: {:.1} ms/iter (joint fwd+bwd)", t0.elapsed().as_secs_f64() * 1000.0 / iters as f64);
    }
}
