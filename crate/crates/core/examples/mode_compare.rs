use fdia_core::dataset::*;
use fdia_core::eval::*;
use fdia_core::grid::*;
use fdia_core::transfer::Stage2Mode;

fn main() {
    let case = GridCase::ieee14();
    for mode in [Stage2Mode::ReplayAttacks, Stage2Mode::NormalOnly] {
        println!("--- stage2 mode {mode:?} ---");
        let mut cfg = SweepConfig {
            gen: GenerationConfig::desk(0).with_counts(10, 1000),
            target_counts: (10, 2000),
            test_counts: (10, 200),
            trials: 1,
            methods: vec![MethodKind::Proposed],
            seed: 20260809,
            ..SweepConfig::default()
        };
        cfg.train.stage2_mode = mode;
        let results = run_sigma_sweep(&case, &[0.0, 0.01, 0.05, 0.10], 0.5, &cfg);
        for r in &results {
            for m in &r.methods {
                println!("  sigma={:4.2}: ACC {:.4} MAR {:?}", r.sigma_source, m.acc_mean, m.mar_mean);
            }
            if let Some(e) = &r.error { println!("  sigma={:4.2}: ERR {e}", r.sigma_source); }
        }
        let d = run_delta_sweep(&case, &[0.0], &cfg);
        for m in &d[0].methods {
            println!("  delta=0senario: ACC {:.4}", m.acc_mean);
        }
    }
}
