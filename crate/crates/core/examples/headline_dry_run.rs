use fdia_core::dataset::*;
use fdia_core::eval::*;
use fdia_core::grid::*;
use fdia_core::nn::*;
use fdia_core::transfer::*;
use fdia_core::seed::{derive_seed, role};
use std::time::Instant;

fn main() {
    let case = GridCase::ieee14();
    let t0 = Instant::now();
    for &delta in &[0.0, 0.5] {
        let cfg = SweepConfig {
            gen: GenerationConfig::desk(0).with_counts(10, 1000),
            target_counts: (10, 2000),
            test_counts: (10, 200),
            trials: 1,
            methods: vec![MethodKind::Proposed, MethodKind::DnnB],
            seed: 20260809,
            ..SweepConfig::default()
        };
        let t1 = Instant::now();
        let r = run_scenario(&case, delta, 0.01, &cfg);
        println!("delta={delta}: {:?}", r.error);
        for m in &r.methods {
            println!("  {}: ACC {:.4} MAR {:?} ({:.1}s)", m.method, m.acc_mean, m.mar_mean, m.runtime_s);
        }
        println!("  scenario took {:.1}s", t1.elapsed().as_secs_f64());
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    // MMD gap check at delta=0.5
    let t2 = Instant::now();
    let real = perturb_case(&case, &PerturbSpec::new(0.5, 1).unwrap()).unwrap();
    let mut source = generate_source_dataset(&case, &GenerationConfig::desk(5).with_counts(10, 1000)).unwrap();
    let mut target = generate_target_dataset(&real, &GenerationConfig::desk(6).with_counts(10, 2000)).unwrap();
    normalize_and_split(&mut source, 7).unwrap();
    apply_norm_stats(&mut target, &source.norm_stats.clone().unwrap()).unwrap();
    split_dataset(&mut target, 8).unwrap();
    let model = MLPModel::init(MLPConfig::new(source.feature_len()), derive_seed(9, &[role::MODEL_INIT])).unwrap();
    let gap_before = feature_gap(&model, &source, &target, 1000, 10).unwrap();
    let cfg = TrainConfig { seed: 9, ..TrainConfig::default() };
    let run = pretrain(model, &source, &target, &cfg).unwrap();
    let gap_after = feature_gap(&run.model, &source, &target, 1000, 10).unwrap();
    println!("MMD gap: before {gap_before:.4} -> after {gap_after:.4} (stop {:?}, iters {}, {:.1}s)",
             run.stop, run.trace.records.len(), t2.elapsed().as_secs_f64());
}
