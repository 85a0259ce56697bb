use fdia_core::dataset::*;
use fdia_core::eval::*;
use fdia_core::grid::*;

fn main() {
    let case = GridCase::ieee14();
    for seed in [20260809u64, 1, 2] {
        let cfg = SweepConfig {
            gen: GenerationConfig::desk(0).with_counts(10, 1000),
            target_counts: (10, 2000),
            test_counts: (10, 200),
            trials: 1,
            methods: vec![MethodKind::Proposed, MethodKind::DnnB],
            seed,
            ..SweepConfig::default()
        };
        let results = run_sigma_sweep(&case, &[0.0, 0.07, 0.10], 0.5, &cfg);
        for r in &results {
            let get = |name: &str| r.methods.iter().find(|m| m.method == name).map(|m| m.acc_mean).unwrap_or(f64::NAN);
            println!("seed {seed} sigma={:.2}: proposed {:.4}  dnnb {:.4}  err={:?}",
                r.sigma_source, get("Proposed"), get("DNN-B"), r.error);
        }
    }
}
