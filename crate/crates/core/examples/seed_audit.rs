use fdia_core::dataset::*;
use fdia_core::eval::*;
use fdia_core::grid::*;

fn main() {
    let case = GridCase::ieee14();
    for seed in [20260809u64, 1, 2, 3, 4] {
        let cfg = SweepConfig {
            gen: GenerationConfig::desk(0).with_counts(10, 1000),
            target_counts: (10, 2000),
            test_counts: (10, 200),
            trials: 1,
            methods: vec![MethodKind::Proposed, MethodKind::DnnB],
            seed,
            ..SweepConfig::default()
        };
        for delta in [0.0, 0.5] {
            let r = run_scenario(&case, delta, 0.01, &cfg);
            let get = |name: &str| r.methods.iter().find(|m| m.method == name).map(|m| m.acc_mean).unwrap_or(f64::NAN);
            println!("seed {seed} delta={delta}: proposed {:.4}  dnnb {:.4}  margin {:+.2} pts  err={:?}",
                get("Proposed"), get("DNN-B"), (get("Proposed") - get("DNN-B")) * 100.0, r.error);
        }
    }
}
