use fdia_core::attack::*;
use fdia_core::dataset::*;
use fdia_core::estimation::*;
use fdia_core::eval::*;
use fdia_core::grid::*;
use fdia_core::nn::*;
use fdia_core::powerflow::*;
use fdia_core::transfer::*;
use fdia_core::seed::{derive_seed, role};
use rayon::prelude::*;

fn main() {
    let case = GridCase::ieee14();

    // --- finetune before/after + norm drift at delta=50% ---
    let real = perturb_case(&case, &PerturbSpec::new(0.5, 1).unwrap()).unwrap();
    let mut source = generate_source_dataset(&case, &GenerationConfig::desk(5).with_counts(10, 1000)).unwrap();
    let mut target = generate_target_dataset(&real, &GenerationConfig::desk(6).with_counts(10, 2000)).unwrap();
    let mut test = generate_target_test_dataset(&real, &GenerationConfig::desk(7).with_counts(10, 200)).unwrap();
    normalize_and_split(&mut source, 7).unwrap();
    let stats = source.norm_stats.clone().unwrap();
    apply_norm_stats(&mut target, &stats).unwrap();
    split_dataset(&mut target, 8).unwrap();
    apply_norm_stats(&mut test, &stats).unwrap();

    let cfg = TrainConfig { seed: 9, ..TrainConfig::default() };
    let model = MLPModel::init(MLPConfig::new(source.feature_len()), derive_seed(9, &[role::MODEL_INIT])).unwrap();
    let s1 = pretrain(model, &source, &target, &cfg).unwrap();
    let acc = |m: &MLPModel, ds: &Dataset| -> f64 {
        let v = classify_dataset(m, ds).unwrap();
        let ok = ds.samples.iter().zip(&v).filter(|(s, vv)| (s.label == Label::Attack) == (**vv == Verdict::Attack)).count();
        ok as f64 / ds.len() as f64
    };
    let before = acc(&s1.model, &test);
    let norm_before = s1.model.param_frobenius();
    let stage2 = build_stage2_dataset(&target, &source, cfg.stage2_mode, 10).unwrap();
    let s2 = finetune(s1.model.clone(), &stage2, &cfg).unwrap();
    let after = acc(&s2.model, &test);
    let norm_after = s2.model.param_frobenius();
    println!("delta=50%: stage1 test ACC {before:.4} -> stage2 {after:.4}  (s1 iters {}, s2 iters {})", s1.trace.records.len(), s2.trace.records.len());
    println!("param frobenius {:.4} -> {:.4}  drift {:.3}%", norm_before, norm_after, 100.0*(norm_after-norm_before).abs()/norm_before);

    // --- criterion 2 stealth: 1000 attacks ---
    let t0 = std::time::Instant::now();
    let profiles = generate_load_profiles(&case, &GenerationConfig::desk(77).with_counts(1, 1000)).unwrap();
    let r = vec![1.0; MeasurementLayout::of(&case).dim()];
    let flat = StateVector::flat(&case);
    let results: Vec<(f64, f64, f64, f64)> = profiles.par_iter().enumerate().map(|(k, loads)| {
        let state = solve_power_flow(&case, loads).unwrap();
        let z0 = measure(&case, &state, &NoiseSpec::none());
        let bus = [2usize, 3, 9][k % 3];
        let gamma = [0.1, 0.2, 0.3][(k / 3) % 3];
        let att = construct_attack(&case, &state, &AttackSpec::single(bus, gamma, 0)).unwrap();
        let za0 = apply_attack(&z0, &att).unwrap();
        let rn0 = wls_estimate_ac(&case, &z0, &r, &flat).unwrap().residual_norm;
        let ra0 = wls_estimate_ac(&case, &za0, &r, &flat).unwrap().residual_norm;
        // noisy pair for BDD
        let zن = measure(&case, &state, &NoiseSpec::uniform(0.01, 5000 + k as u64));
        let zan = apply_attack(&zن, &att).unwrap();
        let rn1 = wls_estimate_ac(&case, &zن, &r, &flat).unwrap().residual_norm;
        let ra1 = wls_estimate_ac(&case, &zan, &r, &flat).unwrap().residual_norm;
        (rn0, ra0, rn1, ra1)
    }).collect();
    let max_gap = results.iter().map(|(a, b, _, _)| (a - b).abs()).fold(0.0f64, f64::max);
    let normals: Vec<f64> = results.iter().map(|r| r.2).collect();
    let tau = calibrate_tau(&normals, 0.999).unwrap();
    let flagged = results.iter().filter(|r| r.3 > tau).count();
    println!("stealth: max |r_normal - r_attack| = {max_gap:.3e} (noiseless); tau={tau:.4e}; flagged {flagged}/1000 at sigma=1%  [{:.1}s]", t0.elapsed().as_secs_f64());
}
