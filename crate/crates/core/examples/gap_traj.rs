use fdia_core::dataset::*;
use fdia_core::grid::*;
use fdia_core::nn::*;
use fdia_core::transfer::*;
use fdia_core::seed::{derive_seed, role};

fn main() {
    let case = GridCase::ieee14();
    let real = perturb_case(&case, &PerturbSpec::new(0.5, 1).unwrap()).unwrap();
    let mut source = generate_source_dataset(&case, &GenerationConfig::desk(5).with_counts(10, 1000)).unwrap();
    let mut target = generate_target_dataset(&real, &GenerationConfig::desk(6).with_counts(10, 2000)).unwrap();
    normalize_and_split(&mut source, 7).unwrap();
    apply_norm_stats(&mut target, &source.norm_stats.clone().unwrap()).unwrap();
    split_dataset(&mut target, 8).unwrap();
    let model = MLPModel::init(MLPConfig::new(source.feature_len()), derive_seed(9, &[role::MODEL_INIT])).unwrap();
    println!("gap at init: {:.4}", feature_gap(&model, &source, &target, 1000, 10).unwrap());

    // drive the stage manually in chunks to watch the gap trajectory
    let mut m = model;
    for chunk in 0..12 {
        let cfg = TrainConfig {
            seed: 9 + chunk as u64, // fresh batch stream per chunk is fine for probing
            stage1_max_iters: 250,
            stage1_acc_threshold: 1.0,
            eval_every: 50,
            ..TrainConfig::default()
        };
        let run = pretrain(m, &source, &target, &cfg).unwrap();
        let last = run.trace.records.last().unwrap().clone();
        // continue from the RETURNED (best-val) model
        m = run.model;
        let gap = feature_gap(&m, &source, &target, 1000, 10).unwrap();
        println!("after {:4} iters: gap {:.4}  val {:?}  mmd_batch {:.4}  stop {:?}",
            (chunk + 1) * 250, gap, run.best_val_acc, last.loss_mmd, run.stop);
    }
}
