//! Comparison detectors: residual-threshold BDD, logistic regression,
//! k-nearest neighbors, Gaussian naive Bayes, and DNN-B (the same network
//! architecture trained on source data only, without the transfer stages).
//!
//! Hyperparameters are selected from fixed candidate sets by source
//! validation accuracy; the chosen values are recorded in the trained
//! model's metadata.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, NormStats};
use crate::error::{Error, Result};
use crate::estimation::{bdd_detect, calibrate_tau, wls_estimate_ac, BddConfig, Verdict};
use crate::grid::{CaseDocument, GridCase};
use crate::nn::{AdamConfig, AdamState, MLPConfig, MLPModel};
use crate::powerflow::StateVector;
use crate::seed::{derive_seed, role};
use crate::transfer::{classify_dataset, train_supervised, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Bdd,
    DnnB,
    Lr,
    Knn,
    Gnb,
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            BaselineKind::Bdd => "BDD",
            BaselineKind::DnnB => "DNN-B",
            BaselineKind::Lr => "LR",
            BaselineKind::Knn => "KNN",
            BaselineKind::Gnb => "GNB",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<BaselineKind> {
        match s.to_ascii_lowercase().as_str() {
            "bdd" => Ok(BaselineKind::Bdd),
            "dnn-b" | "dnnb" | "dnn_b" => Ok(BaselineKind::DnnB),
            "lr" => Ok(BaselineKind::Lr),
            "knn" => Ok(BaselineKind::Knn),
            "gnb" => Ok(BaselineKind::Gnb),
            other => Err(Error::Validation(format!("unknown baseline kind '{other}'"))),
        }
    }
}

/// Candidate sets and fixed knobs for baseline training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineHyperGrid {
    pub lr_penalties: Vec<f64>,
    pub lr_iterations: usize,
    pub lr_learning_rate: f64,
    pub knn_neighbors: Vec<usize>,
    /// Stored reference points are subsampled to this cap.
    pub knn_max_reference: usize,
    pub gnb_var_floor: f64,
    pub bdd_quantile: f64,
    pub bdd_calibration_samples: usize,
}

impl Default for BaselineHyperGrid {
    fn default() -> BaselineHyperGrid {
        BaselineHyperGrid {
            lr_penalties: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2],
            lr_iterations: 500,
            lr_learning_rate: 0.05,
            knn_neighbors: vec![1, 2, 5, 10, 50],
            knn_max_reference: 10_000,
            gnb_var_floor: 1e-9,
            bdd_quantile: 0.999,
            bdd_calibration_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineModel {
    Bdd {
        case_doc: CaseDocument,
        config: BddConfig,
    },
    DnnB {
        model: MLPModel,
    },
    Lr {
        w: Vec<f64>,
        b: f64,
        penalty: f64,
    },
    Knn {
        k: usize,
        dim: usize,
        ref_features: Vec<f32>,
        /// true = attack.
        ref_labels: Vec<bool>,
    },
    Gnb {
        /// [attack, normal] per-feature moments.
        mean: [Vec<f64>; 2],
        var: [Vec<f64>; 2],
        log_prior: [f64; 2],
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedBaseline {
    pub kind: BaselineKind,
    pub model: BaselineModel,
    /// Chosen hyperparameters and selection metadata.
    pub hyper: serde_json::Value,
    pub val_acc: Option<f64>,
    /// Input map the model expects on evaluation features.
    pub norm_stats: Option<NormStats>,
}

/// Everything baseline training needs besides the kind.
pub struct BaselineContext<'a> {
    pub source: &'a Dataset,
    /// Nominal system model (the defender's H); only BDD touches it.
    pub case: &'a GridCase,
    pub train: &'a TrainConfig,
    pub grid: &'a BaselineHyperGrid,
    pub seed: u64,
}

fn split_of(ds: &Dataset) -> Result<(Vec<u32>, Vec<u32>)> {
    match &ds.split {
        Some(s) => Ok((s.train.clone(), s.val.clone())),
        None => Err(Error::Validation(
            "source dataset must carry a train/validation split".into(),
        )),
    }
}

fn is_attack(ds: &Dataset, i: u32) -> bool {
    ds.samples[i as usize].label == Label::Attack
}

fn accuracy_of(verdicts: &[Verdict], ds: &Dataset, idx: &[u32]) -> f64 {
    let correct = idx
        .iter()
        .zip(verdicts)
        .filter(|(&i, v)| (**v == Verdict::Attack) == is_attack(ds, i))
        .count();
    correct as f64 / idx.len().max(1) as f64
}

pub fn train_baseline(kind: BaselineKind, ctx: &BaselineContext<'_>) -> Result<TrainedBaseline> {
    match kind {
        BaselineKind::Lr => train_lr(ctx),
        BaselineKind::Knn => train_knn(ctx),
        BaselineKind::Gnb => train_gnb(ctx),
        BaselineKind::DnnB => train_dnn_b(ctx),
        BaselineKind::Bdd => train_bdd(ctx),
    }
}

pub fn evaluate_baseline(tb: &TrainedBaseline, test: &Dataset) -> Result<Vec<Verdict>> {
    if let Some(stats) = &tb.norm_stats {
        match &test.norm_stats {
            Some(s) if s == stats => {}
            _ => {
                return Err(Error::Validation(
                    "test dataset is not normalized with the model's input map".into(),
                ))
            }
        }
    }
    match &tb.model {
        BaselineModel::Lr { w, b, .. } => Ok(test
            .samples
            .iter()
            .map(|s| {
                let score: f64 = s
                    .features
                    .iter()
                    .zip(w)
                    .map(|(&x, &wi)| x as f64 * wi)
                    .sum::<f64>()
                    + b;
                if score > 0.0 {
                    Verdict::Attack
                } else {
                    Verdict::Normal
                }
            })
            .collect()),
        BaselineModel::Gnb {
            mean,
            var,
            log_prior,
        } => Ok(test
            .samples
            .iter()
            .map(|s| {
                let mut log_post = [log_prior[0], log_prior[1]];
                for (c, lp) in log_post.iter_mut().enumerate() {
                    for (j, &x) in s.features.iter().enumerate() {
                        let (m, v) = (mean[c][j], var[c][j]);
                        let d = x as f64 - m;
                        *lp += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - d * d / (2.0 * v);
                    }
                }
                // index 0 = attack; tie goes to normal
                if log_post[0] > log_post[1] {
                    Verdict::Attack
                } else {
                    Verdict::Normal
                }
            })
            .collect()),
        BaselineModel::Knn {
            k,
            dim,
            ref_features,
            ref_labels,
        } => {
            if test.feature_len() != *dim {
                return Err(Error::Dimension(format!(
                    "KNN reference dimension {dim} vs test {}",
                    test.feature_len()
                )));
            }
            let idx: Vec<u32> = (0..test.len() as u32).collect();
            Ok(idx
                .par_iter()
                .map(|&i| {
                    knn_vote(
                        &test.samples[i as usize].features,
                        ref_features,
                        ref_labels,
                        *dim,
                        *k,
                    )
                })
                .collect())
        }
        BaselineModel::DnnB { model } => classify_dataset(model, test),
        BaselineModel::Bdd { case_doc, config } => {
            let case = GridCase::from_document(case_doc.clone())?;
            test.validate_layout(&case)?;
            let r = vec![1.0; test.layout.dim()];
            let flat = StateVector::flat(&case);
            let idx: Vec<usize> = (0..test.len()).collect();
            let residuals: Vec<Result<f64>> = idx
                .par_iter()
                .map(|&i| {
                    let z = test.measurement_of(i)?;
                    Ok(wls_estimate_ac(&case, &z, &r, &flat)?.residual_norm)
                })
                .collect();
            residuals
                .into_iter()
                .map(|r| r.map(|res| bdd_detect(res, config)))
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

fn train_lr(ctx: &BaselineContext<'_>) -> Result<TrainedBaseline> {
    let (train_idx, val_idx) = split_of(ctx.source)?;
    let k = ctx.source.feature_len();
    let xs = crate::transfer::features_matrix(ctx.source, &train_idx);
    let ys: Vec<f64> = train_idx
        .iter()
        .map(|&i| if is_attack(ctx.source, i) { 1.0 } else { 0.0 })
        .collect();
    let n = train_idx.len() as f64;

    let mut best: Option<(f64, Vec<f64>, f64, f64)> = None; // (val_acc, w, b, penalty)
    for &penalty in &ctx.grid.lr_penalties {
        let mut params = vec![0.0; k + 1];
        let mut adam = AdamState::new(k + 1, AdamConfig::with_lr(ctx.grid.lr_learning_rate));
        for _ in 0..ctx.grid.lr_iterations {
            // full-batch gradient of mean logistic loss + (penalty/2)||w||^2
            let mut grads = vec![0.0; k + 1];
            for (r, &y) in ys.iter().enumerate() {
                let mut score = params[k];
                for j in 0..k {
                    score += params[j] * xs[(r, j)];
                }
                let p = 1.0 / (1.0 + (-score).exp());
                let err = (p - y) / n;
                for j in 0..k {
                    grads[j] += err * xs[(r, j)];
                }
                grads[k] += err;
            }
            for j in 0..k {
                grads[j] += penalty * params[j];
            }
            adam.step(&mut params, &grads)?;
        }
        let (w, b) = (params[..k].to_vec(), params[k]);
        let model = BaselineModel::Lr {
            w: w.clone(),
            b,
            penalty,
        };
        let tb = TrainedBaseline {
            kind: BaselineKind::Lr,
            model,
            hyper: serde_json::json!({}),
            val_acc: None,
            norm_stats: ctx.source.norm_stats.clone(),
        };
        let verdicts = eval_on_indices(&tb, ctx.source, &val_idx)?;
        let acc = accuracy_of(&verdicts, ctx.source, &val_idx);
        if best.as_ref().is_none_or(|(b_acc, ..)| acc > *b_acc) {
            best = Some((acc, w, b, penalty));
        }
    }
    let (val_acc, w, b, penalty) = best.expect("at least one penalty candidate");
    Ok(TrainedBaseline {
        kind: BaselineKind::Lr,
        model: BaselineModel::Lr { w, b, penalty },
        hyper: serde_json::json!({ "penalty": penalty, "iterations": ctx.grid.lr_iterations }),
        val_acc: Some(val_acc),
        norm_stats: ctx.source.norm_stats.clone(),
    })
}

/// Evaluate a baseline on a subset of a dataset by building a view dataset.
fn eval_on_indices(tb: &TrainedBaseline, ds: &Dataset, idx: &[u32]) -> Result<Vec<Verdict>> {
    let view = Dataset {
        samples: idx.iter().map(|&i| ds.samples[i as usize].clone()).collect(),
        layout: ds.layout.clone(),
        case_id: ds.case_id.clone(),
        seed: ds.seed,
        sigma: ds.sigma,
        norm_stats: ds.norm_stats.clone(),
        split: None,
    };
    evaluate_baseline(tb, &view)
}

// ---------------------------------------------------------------------------
// K-nearest neighbors
// ---------------------------------------------------------------------------

fn knn_vote(query: &[f32], ref_features: &[f32], ref_labels: &[bool], dim: usize, k: usize) -> Verdict {
    let n_ref = ref_labels.len();
    let mut dists: Vec<(f64, usize)> = (0..n_ref)
        .map(|i| {
            let base = i * dim;
            let d: f64 = query
                .iter()
                .zip(&ref_features[base..base + dim])
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum();
            (d, i)
        })
        .collect();
    let k = k.min(n_ref);
    dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dists[..k].sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let attack_votes = dists[..k].iter().filter(|(_, i)| ref_labels[*i]).count();
    // strict majority; ties go to normal
    if 2 * attack_votes > k {
        Verdict::Attack
    } else {
        Verdict::Normal
    }
}

fn train_knn(ctx: &BaselineContext<'_>) -> Result<TrainedBaseline> {
    let (train_idx, val_idx) = split_of(ctx.source)?;
    let dim = ctx.source.feature_len();

    // seeded subsample of the training split as the stored reference set
    let mut pool = train_idx.clone();
    let cap = ctx.grid.knn_max_reference;
    if pool.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, &[role::SUBSAMPLE, 1]));
        for i in (1..pool.len()).rev() {
            let j = rng.random_range(0..=i);
            pool.swap(i, j);
        }
        pool.truncate(cap);
        pool.sort_unstable();
    }
    let mut ref_features = Vec::with_capacity(pool.len() * dim);
    let mut ref_labels = Vec::with_capacity(pool.len());
    for &i in &pool {
        ref_features.extend_from_slice(&ctx.source.samples[i as usize].features);
        ref_labels.push(is_attack(ctx.source, i));
    }

    let mut best: Option<(f64, usize)> = None;
    for &k in &ctx.grid.knn_neighbors {
        if k == 0 || k > ref_labels.len() {
            continue;
        }
        let verdicts: Vec<Verdict> = val_idx
            .par_iter()
            .map(|&i| {
                knn_vote(
                    &ctx.source.samples[i as usize].features,
                    &ref_features,
                    &ref_labels,
                    dim,
                    k,
                )
            })
            .collect();
        let acc = accuracy_of(&verdicts, ctx.source, &val_idx);
        if best.as_ref().is_none_or(|(b_acc, _)| acc > *b_acc) {
            best = Some((acc, k));
        }
    }
    let (val_acc, k) = best.ok_or_else(|| Error::Validation("no usable KNN candidate".into()))?;
    Ok(TrainedBaseline {
        kind: BaselineKind::Knn,
        model: BaselineModel::Knn {
            k,
            dim,
            ref_features,
            ref_labels,
        },
        hyper: serde_json::json!({ "k": k, "reference_size": pool.len() }),
        val_acc: Some(val_acc),
        norm_stats: ctx.source.norm_stats.clone(),
    })
}

// ---------------------------------------------------------------------------
// Gaussian naive Bayes
// ---------------------------------------------------------------------------

fn train_gnb(ctx: &BaselineContext<'_>) -> Result<TrainedBaseline> {
    let (train_idx, val_idx) = split_of(ctx.source)?;
    let k = ctx.source.feature_len();
    let mut mean = [vec![0.0; k], vec![0.0; k]];
    let mut var = [vec![0.0; k], vec![0.0; k]];
    let mut counts = [0usize; 2];

    for &i in &train_idx {
        let c = if is_attack(ctx.source, i) { 0 } else { 1 };
        counts[c] += 1;
        for (j, &x) in ctx.source.samples[i as usize].features.iter().enumerate() {
            mean[c][j] += x as f64;
        }
    }
    for c in 0..2 {
        if counts[c] == 0 {
            return Err(Error::Validation(
                "GNB needs both classes in the training split".into(),
            ));
        }
        for m in mean[c].iter_mut() {
            *m /= counts[c] as f64;
        }
    }
    for &i in &train_idx {
        let c = if is_attack(ctx.source, i) { 0 } else { 1 };
        for (j, &x) in ctx.source.samples[i as usize].features.iter().enumerate() {
            let d = x as f64 - mean[c][j];
            var[c][j] += d * d;
        }
    }
    for c in 0..2 {
        for v in var[c].iter_mut() {
            *v = (*v / counts[c] as f64).max(ctx.grid.gnb_var_floor);
        }
    }
    let total = (counts[0] + counts[1]) as f64;
    let log_prior = [
        (counts[0] as f64 / total).ln(),
        (counts[1] as f64 / total).ln(),
    ];

    let tb = TrainedBaseline {
        kind: BaselineKind::Gnb,
        model: BaselineModel::Gnb {
            mean,
            var,
            log_prior,
        },
        hyper: serde_json::json!({ "var_floor": ctx.grid.gnb_var_floor }),
        val_acc: None,
        norm_stats: ctx.source.norm_stats.clone(),
    };
    let verdicts = eval_on_indices(&tb, ctx.source, &val_idx)?;
    let val_acc = accuracy_of(&verdicts, ctx.source, &val_idx);
    Ok(TrainedBaseline { val_acc: Some(val_acc), ..tb })
}

// ---------------------------------------------------------------------------
// DNN-B
// ---------------------------------------------------------------------------

fn train_dnn_b(ctx: &BaselineContext<'_>) -> Result<TrainedBaseline> {
    let mlp_cfg = MLPConfig::new(ctx.source.feature_len());
    let model = MLPModel::init(mlp_cfg, derive_seed(ctx.seed, &[role::MODEL_INIT, 2]))?;
    let mut cfg = *ctx.train;
    cfg.seed = derive_seed(ctx.seed, &[role::BATCH, 99]);
    let run = train_supervised(model, ctx.source, &cfg)?;
    Ok(TrainedBaseline {
        kind: BaselineKind::DnnB,
        model: BaselineModel::DnnB { model: run.model },
        hyper: serde_json::json!({
            "stop": format!("{:?}", run.stop),
            "iterations": run.trace.records.len(),
        }),
        val_acc: Some(run.best_val_acc),
        norm_stats: ctx.source.norm_stats.clone(),
    })
}

// ---------------------------------------------------------------------------
// BDD
// ---------------------------------------------------------------------------

fn train_bdd(ctx: &BaselineContext<'_>) -> Result<TrainedBaseline> {
    ctx.source.validate_layout(ctx.case)?;
    let (train_idx, _) = split_of(ctx.source)?;
    let mut normals: Vec<u32> = train_idx
        .iter()
        .copied()
        .filter(|&i| !is_attack(ctx.source, i))
        .collect();
    if normals.is_empty() {
        return Err(Error::Empty("normal samples for BDD calibration".into()));
    }
    let cap = ctx.grid.bdd_calibration_samples;
    if normals.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, &[role::SUBSAMPLE, 2]));
        for i in (1..normals.len()).rev() {
            let j = rng.random_range(0..=i);
            normals.swap(i, j);
        }
        normals.truncate(cap);
        normals.sort_unstable();
    }

    let r = vec![1.0; ctx.source.layout.dim()];
    let flat = StateVector::flat(ctx.case);
    let residuals: Vec<Result<f64>> = normals
        .par_iter()
        .map(|&i| {
            let z = ctx.source.measurement_of(i as usize)?;
            Ok(wls_estimate_ac(ctx.case, &z, &r, &flat)?.residual_norm)
        })
        .collect();
    let residuals: Vec<f64> = residuals.into_iter().collect::<Result<_>>()?;
    let tau = calibrate_tau(&residuals, ctx.grid.bdd_quantile)?;

    Ok(TrainedBaseline {
        kind: BaselineKind::Bdd,
        model: BaselineModel::Bdd {
            case_doc: ctx.case.to_document(),
            config: BddConfig {
                tau,
                calibration: crate::estimation::TauCalibration::QuantileOfNormal {
                    quantile: ctx.grid.bdd_quantile,
                },
            },
        },
        hyper: serde_json::json!({
            "tau": tau,
            "quantile": ctx.grid.bdd_quantile,
            "calibration_samples": residuals.len(),
        }),
        val_acc: None,
        norm_stats: None,
    })
}

pub fn save_baseline(tb: &TrainedBaseline, path: &std::path::Path) -> Result<()> {
    let json = serde_json::to_string(tb).map_err(|e| Error::Corrupt(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_baseline(path: &std::path::Path) -> Result<TrainedBaseline> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("baseline file: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        generate_source_dataset, normalize_and_split, GenerationConfig, LabeledSample, Provenance,
    };
    use crate::powerflow::MeasurementLayout;

    /// Synthetic 4-feature dataset (1 bus, 0 branches) with two Gaussian
    /// clusters, attack centered at +mu and normal at -mu.
    fn toy_dataset(n_per_class: usize, mu: f64, noise: f64, seed: u64) -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for i in 0..2 * n_per_class {
            let attack = i % 2 == 0;
            let center = if attack { mu } else { -mu };
            let features: Vec<f32> = (0..4)
                .map(|_| (center + noise * rng.random_range(-1.0..1.0)) as f32)
                .collect();
            samples.push(LabeledSample {
                features,
                label: if attack { Label::Attack } else { Label::Normal },
                domain: crate::dataset::Domain::Source,
                provenance: Provenance {
                    base_id: 0,
                    draw_id: i as u32,
                    attack: None,
                },
            });
        }
        let mut ds = Dataset {
            samples,
            layout: MeasurementLayout {
                n_bus: 1,
                n_branch: 0,
                case_hash: "toy".into(),
            },
            case_id: "toy".into(),
            seed,
            sigma: 0.0,
            norm_stats: None,
            split: None,
        };
        crate::dataset::split_dataset(&mut ds, seed).unwrap();
        ds
    }

    fn toy_ctx<'a>(
        source: &'a Dataset,
        case: &'a GridCase,
        train: &'a TrainConfig,
        grid: &'a BaselineHyperGrid,
    ) -> BaselineContext<'a> {
        BaselineContext {
            source,
            case,
            train,
            grid,
            seed: 7,
        }
    }

    #[test]
    fn knn_with_k1_is_perfect_on_its_own_references() {
        let ds = toy_dataset(60, 0.5, 2.0, 1); // overlapping clouds
        let case = GridCase::three_bus_demo();
        let train = TrainConfig::default();
        let mut grid = BaselineHyperGrid::default();
        grid.knn_neighbors = vec![1];
        let tb = train_baseline(BaselineKind::Knn, &toy_ctx(&ds, &case, &train, &grid)).unwrap();

        // evaluate on the stored reference points themselves
        let train_idx = ds.split.as_ref().unwrap().train.clone();
        let verdicts = eval_on_indices(&tb, &ds, &train_idx).unwrap();
        assert_eq!(verdicts.len(), train_idx.len());
        assert_eq!(accuracy_of(&verdicts, &ds, &train_idx), 1.0);
    }

    #[test]
    fn gnb_separates_distant_clusters() {
        let ds = toy_dataset(150, 2.0, 1.0, 2);
        let case = GridCase::three_bus_demo();
        let train = TrainConfig::default();
        let grid = BaselineHyperGrid::default();
        let tb = train_baseline(BaselineKind::Gnb, &toy_ctx(&ds, &case, &train, &grid)).unwrap();
        assert!(tb.val_acc.unwrap() >= 0.99, "val acc {:?}", tb.val_acc);
    }

    #[test]
    fn lr_fits_linearly_separable_data_and_aligns_with_the_normal() {
        let ds = toy_dataset(150, 1.5, 1.0, 3);
        let case = GridCase::three_bus_demo();
        let train = TrainConfig::default();
        let grid = BaselineHyperGrid::default();
        let tb = train_baseline(BaselineKind::Lr, &toy_ctx(&ds, &case, &train, &grid)).unwrap();
        assert!(tb.val_acc.unwrap() >= 0.99, "val acc {:?}", tb.val_acc);
        if let BaselineModel::Lr { w, .. } = &tb.model {
            // separating direction is all-positive (attack lives at +mu)
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let cos = w.iter().sum::<f64>() / (norm * 2.0);
            assert!(cos > 0.99, "weight direction misaligned, cos {cos}");
        } else {
            panic!("wrong model kind");
        }
    }

    #[test]
    fn knn_and_gnb_are_invariant_to_shared_affine_rescaling() {
        let ds = toy_dataset(80, 1.0, 1.5, 4);
        let case = GridCase::three_bus_demo();
        let train = TrainConfig::default();
        let grid = BaselineHyperGrid::default();

        // uniform scale + per-feature shift applied to train and test alike
        let mut scaled = ds.clone();
        for s in &mut scaled.samples {
            for (j, v) in s.features.iter_mut().enumerate() {
                *v = 3.0 * *v + j as f32;
            }
        }
        let val_idx = ds.split.as_ref().unwrap().val.clone();
        for kind in [BaselineKind::Knn, BaselineKind::Gnb] {
            let tb = train_baseline(kind, &toy_ctx(&ds, &case, &train, &grid)).unwrap();
            let tb_scaled =
                train_baseline(kind, &toy_ctx(&scaled, &case, &train, &grid)).unwrap();
            let a = eval_on_indices(&tb, &ds, &val_idx).unwrap();
            let b = eval_on_indices(&tb_scaled, &scaled, &val_idx).unwrap();
            assert_eq!(a, b, "{kind} verdicts changed under shared affine map");
        }
    }

    #[test]
    fn bdd_misses_stealthy_attacks() {
        let case = GridCase::ieee14();
        let mut source =
            generate_source_dataset(&case, &GenerationConfig::desk(31).with_counts(2, 50)).unwrap();
        normalize_and_split(&mut source, 31).unwrap();
        let train = TrainConfig::default();
        let grid = BaselineHyperGrid::default();
        let tb = train_baseline(
            BaselineKind::Bdd,
            &BaselineContext {
                source: &source,
                case: &case,
                train: &train,
                grid: &grid,
                seed: 31,
            },
        )
        .unwrap();
        let verdicts = evaluate_baseline(&tb, &source).unwrap();
        assert_eq!(verdicts.len(), source.len());
        let attacks_flagged = source
            .samples
            .iter()
            .zip(&verdicts)
            .filter(|(s, v)| s.label == Label::Attack && **v == Verdict::Attack)
            .count();
        let n_attacks = source.class_counts().1;
        assert!(
            (attacks_flagged as f64) <= 0.05 * n_attacks as f64,
            "BDD flagged {attacks_flagged} of {n_attacks} stealthy attacks"
        );
    }

    #[test]
    fn baseline_files_round_trip() {
        let ds = toy_dataset(40, 1.0, 1.0, 5);
        let case = GridCase::three_bus_demo();
        let train = TrainConfig::default();
        let grid = BaselineHyperGrid::default();
        let tb = train_baseline(BaselineKind::Gnb, &toy_ctx(&ds, &case, &train, &grid)).unwrap();
        let dir = std::env::temp_dir().join("fdia-baseline-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("gnb.json");
        save_baseline(&tb, &path).unwrap();
        let loaded = load_baseline(&path).unwrap();
        assert_eq!(loaded.kind, BaselineKind::Gnb);
        assert_eq!(loaded.model, tb.model);
    }

    #[test]
    fn evaluation_requires_matching_normalization() {
        let mut ds = toy_dataset(40, 1.0, 1.0, 6);
        ds.norm_stats = Some(crate::dataset::NormStats {
            mins: vec![0.0; 4],
            maxs: vec![1.0; 4],
        });
        let case = GridCase::three_bus_demo();
        let train = TrainConfig::default();
        let grid = BaselineHyperGrid::default();
        let tb = train_baseline(BaselineKind::Gnb, &toy_ctx(&ds, &case, &train, &grid)).unwrap();
        let mut other = ds.clone();
        other.norm_stats = None;
        assert!(evaluate_baseline(&tb, &other).is_err());
    }
}
