use fdia_core::dataset::*;
use fdia_core::estimation::Verdict;
use fdia_core::eval::*;
use fdia_core::grid::*;
use fdia_core::nn::*;
use fdia_core::transfer::*;
use fdia_core::seed::{derive_seed, role};

fn main() {
    // replicate run_scenario's trial flow for seed 2, delta=0.5, sigma=0.01
    let case = GridCase::ieee14();
    let scenario_seed = derive_seed(2, &[role::SCENARIO, 500_000, 10_000]);
    let real = perturb_case(&case, &PerturbSpec::new(0.5, scenario_seed).unwrap()).unwrap();
    let trial_seed = derive_seed(scenario_seed, &[role::TRIAL, 0]);
    let mut source = generate_source_dataset(&case, &GenerationConfig::desk(0).with_counts(10, 1000).with_sigma(0.01).with_seed(derive_seed(trial_seed, &[1]))).unwrap();
    let mut target = generate_target_dataset(&real, &GenerationConfig::desk(0).with_counts(10, 2000).with_sigma(0.01).with_seed(derive_seed(trial_seed, &[2]))).unwrap();
    let mut test = generate_target_test_dataset(&real, &GenerationConfig::desk(0).with_counts(10, 200).with_sigma(0.01).with_seed(derive_seed(trial_seed, &[3]))).unwrap();
    normalize_and_split(&mut source, derive_seed(trial_seed, &[4])).unwrap();
    let stats = source.norm_stats.clone().unwrap();
    apply_norm_stats(&mut target, &stats).unwrap();
    split_dataset(&mut target, derive_seed(trial_seed, &[5])).unwrap();
    apply_norm_stats(&mut test, &stats).unwrap();

    let mut tc = TrainConfig::default();
    tc.seed = derive_seed(trial_seed, &[7]);
    let model = MLPModel::init(MLPConfig::new(source.feature_len()), derive_seed(trial_seed, &[role::MODEL_INIT])).unwrap();
    let s1 = pretrain(model, &source, &target, &tc).unwrap();

    let report = |m: &MLPModel, name: &str| {
        let v = classify_dataset(m, &test).unwrap();
        let truth: Vec<Label> = test.samples.iter().map(|s| s.label).collect();
        let c = ConfusionCounts::from_verdicts(&truth, &v).unwrap();
        let met = compute_metrics(&c).unwrap();
        println!("{name}: ACC {:.4} MAR {:?}  tp {} tn {} fp {} fn {}", met.acc, met.mar,
                 c.true_positive, c.true_negative, c.false_positive, c.false_negative);
    };
    println!("stage1: stop {:?}, iters {}, best_val {:.4}", s1.stop, s1.trace.records.len(), s1.best_val_acc);
    report(&s1.model, "stage1");
    let gap0 = feature_gap(&s1.model, &source, &target, 1000, 123).unwrap();
    println!("gap after stage1: {gap0:.4}");
    for mode in [Stage2Mode::NormalOnly, Stage2Mode::ReplayAttacks] {
        let stage2 = build_stage2_dataset(&target, &source, mode, derive_seed(trial_seed, &[8])).unwrap();
        let s2 = finetune(s1.model.clone(), &stage2, &tc).unwrap();
        report(&s2.model, &format!("stage2 {mode:?}"));
        let _ = v_hold(&s2);
    }
}
fn v_hold(_r: &TrainRun) {}
