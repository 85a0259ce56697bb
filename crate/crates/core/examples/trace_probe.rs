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
    let gap0 = feature_gap(&model, &source, &target, 1000, 10).unwrap();
    println!("gap at init: {gap0:.4}");
    let cfg = TrainConfig { seed: 9, stage1_max_iters: 1500, ..TrainConfig::default() };
    let run = pretrain(model, &source, &target, &cfg).unwrap();
    println!("stop {:?} best_val {:.4}", run.stop, run.best_val_acc);
    for r in run.trace.records.iter().filter(|r| r.iteration % 100 == 0 || r.acc_val.is_some() && r.iteration % 50 == 0) {
        println!("it {:4}  ce {:.4e}  mmd {:.4}  reg {:.3e}  acc_batch {:.3}  val {:?}",
            r.iteration, r.loss_ce, r.loss_mmd, r.loss_reg, r.acc_train, r.acc_val);
    }
    let gap1 = feature_gap(&run.model, &source, &target, 1000, 10).unwrap();
    println!("gap after: {gap1:.4}");
}
