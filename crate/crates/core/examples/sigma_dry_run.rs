use fdia_core::dataset::*;
use fdia_core::eval::*;
use fdia_core::grid::*;

fn main() {
    let case = GridCase::ieee14();
    let cfg = SweepConfig {
        gen: GenerationConfig::desk(0).with_counts(10, 1000),
        target_counts: (10, 2000),
        test_counts: (10, 200),
        trials: 1,
        methods: vec![MethodKind::Proposed],
        seed: 20260809,
        ..SweepConfig::default()
    };
    let results = run_sigma_sweep(&case, &[0.0, 0.01, 0.05, 0.10], 0.5, &cfg);
    for r in &results {
        println!("sigma_source={:.2}: err={:?}", r.sigma_source, r.error);
        for m in &r.methods {
            println!("  {}: ACC {:.4} MAR {:?} ({:.0}s)", m.method, m.acc_mean, m.mar_mean, m.runtime_s);
        }
    }
}
