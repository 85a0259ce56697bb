//! Dataset generation, normalization, and storage.
//!
//! Three dataset roles exist. The source domain is simulated with the
//! nominal case and carries balanced normal/attack labels. The target domain
//! is "collected" from the perturbed real-world case and holds normal
//! samples only. The target-test set mirrors the source recipe on the
//! real-world case and never participates in training.
//!
//! Every sample is generated from seeds derived from (config seed, base id,
//! draw id, role), so a fixed [`GenerationConfig`] yields bit-identical
//! datasets regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::attack::{apply_attack, construct_attack, AttackSpec};
use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::powerflow::{
    measure, solve_power_flow, MeasurementLayout, MeasurementVector, NoiseDistribution, NoiseSpec,
};
use crate::seed::{derive_seed, role};

const FORMAT_MAGIC: &str = "FDIADS1";
const FORMAT_VERSION: u32 = 1;
/// Power-flow retry budget per profile before giving up.
const MAX_PROFILE_ATTEMPTS: u64 = 25;
/// Fraction of profiles that may need resampling before generation aborts.
const MAX_RESAMPLE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Attack,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
    TargetTest,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::Source => write!(f, "source"),
            Domain::Target => write!(f, "target"),
            Domain::TargetTest => write!(f, "target_test"),
        }
    }
}

/// Where a sample came from: which base condition and draw produced its load
/// profile, and the attack applied to it if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_id: u32,
    pub draw_id: u32,
    /// (external target bus, gamma) for attack samples.
    pub attack: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    /// Feature layout: [Pd (n) | Qd (n) | P (n) | Q (n) | p (b) | q (b)].
    pub features: Vec<f32>,
    pub label: Label,
    pub domain: Domain,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub layout: MeasurementLayout,
    pub case_id: String,
    pub seed: u64,
    pub sigma: f64,
    /// Min/max of the training portion, present once normalized.
    pub norm_stats: Option<NormStats>,
    pub split: Option<SplitIndices>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_base: usize,
    pub n_per_base: usize,
    /// Uniform multiplier range for load scaling (base conditions and
    /// per-draw profiles alike).
    pub load_range: (f64, f64),
    /// Measurement noise fraction sigma.
    pub sigma: f64,
    #[serde(default = "default_noise")]
    pub noise: NoiseDistribution,
    /// External ids of candidate attack buses.
    pub attack_buses: Vec<usize>,
    pub attack_intensities: Vec<f64>,
    pub seed: u64,
}

fn default_noise() -> NoiseDistribution {
    NoiseDistribution::UniformBounded
}

impl GenerationConfig {
    /// Desk-scale defaults: 10 base conditions x 1000 draws, 50-150% load
    /// scaling, 1% bounded noise, attacks on buses {2, 3, 9} at intensities
    /// {10%, 20%, 30%}.
    pub fn desk(seed: u64) -> GenerationConfig {
        GenerationConfig {
            n_base: 10,
            n_per_base: 1000,
            load_range: (0.5, 1.5),
            sigma: 0.01,
            noise: NoiseDistribution::UniformBounded,
            attack_buses: vec![2, 3, 9],
            attack_intensities: vec![0.1, 0.2, 0.3],
            seed,
        }
    }

    pub fn with_counts(mut self, n_base: usize, n_per_base: usize) -> GenerationConfig {
        self.n_base = n_base;
        self.n_per_base = n_per_base;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> GenerationConfig {
        self.sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> GenerationConfig {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_base == 0 || self.n_per_base == 0 {
            return Err(Error::Validation("profile counts must be at least 1".into()));
        }
        if self.load_range.0 > self.load_range.1 {
            return Err(Error::Validation(format!(
                "load_range low must not exceed high, got {:?}",
                self.load_range
            )));
        }
        if self.load_range.0 < 0.0 {
            return Err(Error::Validation("load_range must be nonnegative".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Validation("sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Dataset {
    pub fn feature_len(&self) -> usize {
        4 * self.layout.n_bus + 2 * self.layout.n_branch
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// (normal, attack) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let attack = self.samples.iter().filter(|s| s.label == Label::Attack).count();
        (self.samples.len() - attack, attack)
    }

    pub fn validate_layout(&self, case: &GridCase) -> Result<()> {
        let expected = MeasurementLayout::of(case);
        if self.layout != expected {
            return Err(Error::Dimension(format!(
                "dataset layout ({} buses, {} branches, hash {}) does not match case {} \
                 ({} buses, {} branches, hash {})",
                self.layout.n_bus,
                self.layout.n_branch,
                self.layout.case_hash,
                case.id(),
                expected.n_bus,
                expected.n_branch,
                expected.case_hash
            )));
        }
        Ok(())
    }

    /// Undo normalization for one feature value.
    pub fn denormalize_value(&self, feature: usize, v: f64) -> f64 {
        match &self.norm_stats {
            None => v,
            Some(stats) => {
                let (lo, hi) = (stats.mins[feature], stats.maxs[feature]);
                if hi == lo {
                    lo
                } else {
                    (v + 1.0) / 2.0 * (hi - lo) + lo
                }
            }
        }
    }

    /// Raw feature vector of a sample with any normalization removed.
    pub fn raw_features(&self, idx: usize) -> Vec<f64> {
        self.samples[idx]
            .features
            .iter()
            .enumerate()
            .map(|(j, &v)| self.denormalize_value(j, v as f64))
            .collect()
    }

    /// Reconstruct the measurement part (P, Q, p, q) of a sample as a
    /// [`MeasurementVector`], denormalizing if needed.
    pub fn measurement_of(&self, idx: usize) -> Result<MeasurementVector> {
        let raw = self.raw_features(idx);
        let n = self.layout.n_bus;
        let z = nalgebra::DVector::from_iterator(
            self.layout.dim(),
            raw[2 * n..].iter().copied(),
        );
        MeasurementVector::from_stacked(self.layout.clone(), &z)
    }

    /// Load part (Pd, Qd) of a sample, denormalized, as per-bus pairs.
    pub fn loads_of(&self, idx: usize) -> Vec<(f64, f64)> {
        let raw = self.raw_features(idx);
        let n = self.layout.n_bus;
        (0..n).map(|i| (raw[i], raw[n + i])).collect()
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

fn draw_factors(rng: &mut ChaCha8Rng, n: usize, range: (f64, f64)) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if range.0 == range.1 {
                range.0
            } else {
                rng.random_range(range.0..=range.1)
            }
        })
        .collect()
}

/// Per-bus scaling band for the base conditions themselves. The per-draw
/// scaling (`load_range`, typically 50-150%) is applied around these bases,
/// so the bases stay close to the nominal operating point.
const BASE_CONDITION_RANGE: (f64, f64) = (0.9, 1.1);

/// Base load conditions: the case loads scaled per-bus by uniform factors
/// from a narrow band around nominal. P and Q at one bus share a factor so
/// the power factor of the demand is preserved.
fn base_condition(case: &GridCase, cfg: &GenerationConfig, base_id: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[role::BASE_CONDITION, base_id]));
    let factors = draw_factors(&mut rng, case.n_bus(), BASE_CONDITION_RANGE);
    case.base_loads()
        .iter()
        .zip(&factors)
        .map(|((p, q), f)| (p * f, q * f))
        .collect()
}

fn profile_from_base(
    base: &[(f64, f64)],
    cfg: &GenerationConfig,
    base_id: u64,
    draw_id: u64,
    attempt: u64,
) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.seed,
        &[role::PROFILE, base_id, draw_id, attempt],
    ));
    let factors = draw_factors(&mut rng, base.len(), cfg.load_range);
    base.iter()
        .zip(&factors)
        .map(|((p, q), f)| (p * f, q * f))
        .collect()
}

/// Generate the full grid of load profiles (n_base x n_per_base), without
/// solving them. Ordered by (base id, draw id).
pub fn generate_load_profiles(case: &GridCase, cfg: &GenerationConfig) -> Result<Vec<Vec<(f64, f64)>>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.n_base * cfg.n_per_base);
    for b in 0..cfg.n_base {
        let base = base_condition(case, cfg, b as u64);
        for d in 0..cfg.n_per_base {
            out.push(profile_from_base(&base, cfg, b as u64, d as u64, 0));
        }
    }
    Ok(out)
}

fn features_from(loads: &[(f64, f64)], z: &MeasurementVector) -> Vec<f32> {
    let mut f = Vec::with_capacity(4 * z.layout.n_bus + 2 * z.layout.n_branch);
    f.extend(loads.iter().map(|(p, _)| *p as f32));
    f.extend(loads.iter().map(|(_, q)| *q as f32));
    f.extend(z.stacked().iter().map(|v| *v as f32));
    f
}

struct ProfileSamples {
    samples: Vec<LabeledSample>,
    resamples: u64,
}

fn generate_profile_samples(
    case: &GridCase,
    cfg: &GenerationConfig,
    domain: Domain,
    with_attacks: bool,
    base: &[(f64, f64)],
    b: u64,
    d: u64,
) -> Result<ProfileSamples> {
    let mut resamples = 0;
    for attempt in 0..MAX_PROFILE_ATTEMPTS {
        let loads = profile_from_base(base, cfg, b, d, attempt);
        let state = match solve_power_flow(case, &loads) {
            Ok(s) => s,
            Err(Error::NonConvergence { .. }) => {
                resamples += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let prov = Provenance {
            base_id: b as u32,
            draw_id: d as u32,
            attack: None,
        };
        let noise_normal = NoiseSpec {
            sigma: cfg.sigma,
            seed: derive_seed(cfg.seed, &[role::NOISE_NORMAL, b, d]),
            distribution: cfg.noise,
        };
        let z = measure(case, &state, &noise_normal);
        let mut samples = vec![LabeledSample {
            features: features_from(&loads, &z),
            label: Label::Normal,
            domain,
            provenance: prov,
        }];

        if with_attacks {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[role::ATTACK_CHOICE, b, d]));
            let bus = cfg.attack_buses[rng.random_range(0..cfg.attack_buses.len())];
            let gamma = cfg.attack_intensities[rng.random_range(0..cfg.attack_intensities.len())];
            let attack = construct_attack(case, &state, &AttackSpec::single(bus, gamma, 0))?;
            let noise_attack = NoiseSpec {
                sigma: cfg.sigma,
                seed: derive_seed(cfg.seed, &[role::NOISE_ATTACK, b, d]),
                distribution: cfg.noise,
            };
            let z_fresh = measure(case, &state, &noise_attack);
            let za = apply_attack(&z_fresh, &attack)?;
            samples.push(LabeledSample {
                features: features_from(&loads, &za),
                label: Label::Attack,
                domain,
                provenance: Provenance {
                    attack: Some((bus, gamma)),
                    ..prov
                },
            });
        }
        return Ok(ProfileSamples { samples, resamples });
    }
    Err(Error::NonConvergence {
        iterations: MAX_PROFILE_ATTEMPTS as usize,
        mismatch: f64::NAN,
    })
}

fn generate(
    case: &GridCase,
    cfg: &GenerationConfig,
    domain: Domain,
    with_attacks: bool,
) -> Result<Dataset> {
    cfg.validate()?;
    if with_attacks {
        if cfg.attack_buses.is_empty() || cfg.attack_intensities.is_empty() {
            return Err(Error::Validation(
                "attack buses and intensities must be nonempty for labeled generation".into(),
            ));
        }
        for &bus in &cfg.attack_buses {
            match case.internal_index(bus) {
                None => {
                    return Err(Error::Validation(format!(
                        "attack bus {bus} does not exist in case {}",
                        case.id()
                    )))
                }
                Some(i) if i == case.slack() => {
                    return Err(Error::Validation(format!("attack bus {bus} is the slack")))
                }
                Some(_) => {}
            }
        }
    }

    let bases: Vec<Vec<(f64, f64)>> = (0..cfg.n_base)
        .map(|b| base_condition(case, cfg, b as u64))
        .collect();
    let pairs: Vec<(u64, u64)> = (0..cfg.n_base as u64)
        .flat_map(|b| (0..cfg.n_per_base as u64).map(move |d| (b, d)))
        .collect();

    let results: Vec<Result<ProfileSamples>> = pairs
        .par_iter()
        .map(|&(b, d)| generate_profile_samples(case, cfg, domain, with_attacks, &bases[b as usize], b, d))
        .collect();

    let mut samples = Vec::with_capacity(pairs.len() * if with_attacks { 2 } else { 1 });
    let mut resamples = 0u64;
    for r in results {
        let p = r?;
        resamples += p.resamples;
        samples.extend(p.samples);
    }
    let budget = (pairs.len() as f64 * MAX_RESAMPLE_FRACTION).ceil() as u64;
    if resamples > budget {
        return Err(Error::Validation(format!(
            "excessive resampling: {resamples} non-convergent profiles out of {} (budget {budget})",
            pairs.len()
        )));
    }

    Ok(Dataset {
        samples,
        layout: MeasurementLayout::of(case),
        case_id: case.id().to_string(),
        seed: cfg.seed,
        sigma: cfg.sigma,
        norm_stats: None,
        split: None,
    })
}

/// Simulated (source domain) dataset: one normal and one attacked sample per
/// load profile, exactly balanced.
pub fn generate_source_dataset(case: &GridCase, cfg: &GenerationConfig) -> Result<Dataset> {
    generate(case, cfg, Domain::Source, true)
}

/// Real-world (target domain) dataset: normal samples only.
pub fn generate_target_dataset(case_real: &GridCase, cfg: &GenerationConfig) -> Result<Dataset> {
    generate(case_real, cfg, Domain::Target, false)
}

/// Held-out test dataset on the real-world case, balanced like the source.
pub fn generate_target_test_dataset(case_real: &GridCase, cfg: &GenerationConfig) -> Result<Dataset> {
    generate(case_real, cfg, Domain::TargetTest, true)
}

// ---------------------------------------------------------------------------
// Normalization and splitting
// ---------------------------------------------------------------------------

/// 7:3 train/validation split with a seeded shuffle.
pub fn split_dataset(dataset: &mut Dataset, seed: u64) -> Result<()> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::Empty("dataset to split".into()));
    }
    let mut indices: Vec<u32> = (0..n as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[role::SPLIT]));
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = ((0.7 * n as f64).round() as usize).clamp(1, n);
    let (train, val) = indices.split_at(n_train);
    dataset.split = Some(SplitIndices {
        train: train.to_vec(),
        val: val.to_vec(),
    });
    Ok(())
}

fn map_features(dataset: &mut Dataset, stats: &NormStats) {
    for s in &mut dataset.samples {
        for (j, v) in s.features.iter_mut().enumerate() {
            let (lo, hi) = (stats.mins[j], stats.maxs[j]);
            *v = if hi == lo {
                0.0
            } else {
                (2.0 * (*v as f64 - lo) / (hi - lo) - 1.0) as f32
            };
        }
    }
}

/// Split 7:3, compute per-feature min/max on the training portion only, and
/// affinely map every feature into [-1, 1] (training features exactly;
/// out-of-range validation/test values extend beyond without clipping).
///
/// Returns the indices of constant features, which map to 0.
pub fn normalize_and_split(dataset: &mut Dataset, seed: u64) -> Result<Vec<usize>> {
    if dataset.norm_stats.is_some() {
        return Err(Error::Validation("dataset is already normalized".into()));
    }
    split_dataset(dataset, seed)?;
    let split = dataset.split.as_ref().expect("split just set");
    let k = dataset.feature_len();
    let mut mins = vec![f64::INFINITY; k];
    let mut maxs = vec![f64::NEG_INFINITY; k];
    for &i in &split.train {
        for (j, &v) in dataset.samples[i as usize].features.iter().enumerate() {
            let v = v as f64;
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    let stats = NormStats { mins, maxs };
    let constant: Vec<usize> = (0..k).filter(|&j| stats.mins[j] == stats.maxs[j]).collect();
    map_features(dataset, &stats);
    dataset.norm_stats = Some(stats);
    Ok(constant)
}

/// Apply previously computed normalization stats (the source-domain map) to
/// another dataset so both domains share one input coordinate system.
pub fn apply_norm_stats(dataset: &mut Dataset, stats: &NormStats) -> Result<()> {
    if dataset.norm_stats.is_some() {
        return Err(Error::Validation("dataset is already normalized".into()));
    }
    if stats.mins.len() != dataset.feature_len() {
        return Err(Error::Dimension(format!(
            "normalization stats cover {} features, dataset has {}",
            stats.mins.len(),
            dataset.feature_len()
        )));
    }
    map_features(dataset, stats);
    dataset.norm_stats = Some(stats.clone());
    Ok(())
}

// ---------------------------------------------------------------------------
// Storage
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    version: u32,
    case_id: String,
    case_hash: String,
    n_bus: usize,
    n_branch: usize,
    feature_len: usize,
    n_samples: usize,
    n_normal: usize,
    n_attack: usize,
    seed: u64,
    sigma: f64,
    norm_stats: Option<NormStats>,
    split: Option<SplitIndices>,
}

fn meta_byte(label: Label, domain: Domain) -> u8 {
    let l = match label {
        Label::Attack => 1u8,
        Label::Normal => 0u8,
    };
    let d = match domain {
        Domain::Source => 0u8,
        Domain::Target => 1u8,
        Domain::TargetTest => 2u8,
    };
    l | (d << 1)
}

fn parse_meta_byte(b: u8) -> Result<(Label, Domain)> {
    let label = if b & 1 == 1 { Label::Attack } else { Label::Normal };
    let domain = match (b >> 1) & 0b11 {
        0 => Domain::Source,
        1 => Domain::Target,
        2 => Domain::TargetTest,
        other => return Err(Error::Corrupt(format!("unknown domain tag {other}"))),
    };
    Ok((label, domain))
}

/// Serialize: one JSON header line after the magic, then fixed-size binary
/// records (f32 features, one label/domain byte, provenance fields), all
/// little endian.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let (n_normal, n_attack) = dataset.class_counts();
    let header = DatasetHeader {
        version: FORMAT_VERSION,
        case_id: dataset.case_id.clone(),
        case_hash: dataset.layout.case_hash.clone(),
        n_bus: dataset.layout.n_bus,
        n_branch: dataset.layout.n_branch,
        feature_len: dataset.feature_len(),
        n_samples: dataset.len(),
        n_normal,
        n_attack,
        seed: dataset.seed,
        sigma: dataset.sigma,
        norm_stats: dataset.norm_stats.clone(),
        split: dataset.split.clone(),
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{FORMAT_MAGIC}")?;
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Corrupt(e.to_string()))?;
    w.write_all(b"\n")?;
    for s in &dataset.samples {
        for &f in &s.features {
            w.write_all(&f.to_le_bytes())?;
        }
        w.write_all(&[meta_byte(s.label, s.domain)])?;
        w.write_all(&s.provenance.base_id.to_le_bytes())?;
        w.write_all(&s.provenance.draw_id.to_le_bytes())?;
        let (bus, gamma) = match s.provenance.attack {
            Some((bus, gamma)) => (bus as i32, gamma),
            None => (-1i32, 0.0f64),
        };
        w.write_all(&bus.to_le_bytes())?;
        w.write_all(&gamma.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let magic_end = FORMAT_MAGIC.len() + 1;
    if bytes.len() < magic_end || &bytes[..FORMAT_MAGIC.len()] != FORMAT_MAGIC.as_bytes() {
        return Err(Error::Corrupt("missing dataset magic".into()));
    }
    let header_end = bytes[magic_end..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| magic_end + p)
        .ok_or_else(|| Error::Corrupt("missing header line".into()))?;
    let header: DatasetHeader = serde_json::from_slice(&bytes[magic_end..header_end])
        .map_err(|e| Error::Corrupt(format!("header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Corrupt(format!(
            "unsupported dataset version {}",
            header.version
        )));
    }
    if header.feature_len != 4 * header.n_bus + 2 * header.n_branch {
        return Err(Error::Corrupt("inconsistent feature length".into()));
    }

    let record_size = header.feature_len * 4 + 1 + 4 + 4 + 4 + 8;
    let body = &bytes[header_end + 1..];
    if body.len() != record_size * header.n_samples {
        return Err(Error::Corrupt(format!(
            "expected {} bytes of samples, found {}",
            record_size * header.n_samples,
            body.len()
        )));
    }

    let mut samples = Vec::with_capacity(header.n_samples);
    for rec in body.chunks_exact(record_size) {
        let mut features = Vec::with_capacity(header.feature_len);
        for j in 0..header.feature_len {
            features.push(f32::from_le_bytes(rec[4 * j..4 * j + 4].try_into().unwrap()));
        }
        let mut off = header.feature_len * 4;
        let (label, domain) = parse_meta_byte(rec[off])?;
        off += 1;
        let base_id = u32::from_le_bytes(rec[off..off + 4].try_into().unwrap());
        off += 4;
        let draw_id = u32::from_le_bytes(rec[off..off + 4].try_into().unwrap());
        off += 4;
        let bus = i32::from_le_bytes(rec[off..off + 4].try_into().unwrap());
        off += 4;
        let gamma = f64::from_le_bytes(rec[off..off + 8].try_into().unwrap());
        let attack = if bus < 0 { None } else { Some((bus as usize, gamma)) };
        samples.push(LabeledSample {
            features,
            label,
            domain,
            provenance: Provenance {
                base_id,
                draw_id,
                attack,
            },
        });
    }

    Ok(Dataset {
        samples,
        layout: MeasurementLayout {
            n_bus: header.n_bus,
            n_branch: header.n_branch,
            case_hash: header.case_hash,
        },
        case_id: header.case_id,
        seed: header.seed,
        sigma: header.sigma,
        norm_stats: header.norm_stats,
        split: header.split,
    })
}

/// Debug-friendly CSV rendering: feature columns, label, domain, provenance.
pub fn export_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let k = dataset.feature_len();
    let header: Vec<String> = (0..k)
        .map(|j| format!("feature_{j}"))
        .chain(["label", "domain", "base_id", "draw_id", "attack_bus", "gamma"].map(String::from))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for s in &dataset.samples {
        let mut row: Vec<String> = s.features.iter().map(|f| format!("{f}")).collect();
        row.push(match s.label {
            Label::Attack => "attack".into(),
            Label::Normal => "normal".into(),
        });
        row.push(s.domain.to_string());
        row.push(s.provenance.base_id.to_string());
        row.push(s.provenance.draw_id.to_string());
        match s.provenance.attack {
            Some((bus, gamma)) => {
                row.push(bus.to_string());
                row.push(format!("{gamma}"));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::wls_estimate_ac;
    use crate::grid::{perturb_case, GridCase, PerturbSpec};
    use crate::powerflow::{evaluate_h, StateVector};

    fn tiny_cfg(seed: u64) -> GenerationConfig {
        GenerationConfig::desk(seed).with_counts(2, 25)
    }

    #[test]
    fn profile_grid_has_expected_shape_and_bounds() {
        let case = GridCase::ieee14();
        let cfg = GenerationConfig::desk(1).with_counts(3, 40);
        let profiles = generate_load_profiles(&case, &cfg).unwrap();
        assert_eq!(profiles.len(), 120);
        // every load lies within base-band times draw-range of the case load
        let lo = BASE_CONDITION_RANGE.0 * cfg.load_range.0;
        let hi = BASE_CONDITION_RANGE.1 * cfg.load_range.1;
        for profile in &profiles {
            for ((p, q), (bp, bq)) in profile.iter().zip(case.base_loads()) {
                if bp != 0.0 {
                    let ratio = p / bp;
                    assert!((lo..=hi).contains(&ratio), "ratio {ratio}");
                }
                if bq != 0.0 {
                    let ratio = q / bq;
                    assert!((lo..=hi).contains(&ratio), "ratio {ratio}");
                }
            }
        }
    }

    #[test]
    fn degenerate_range_reproduces_the_base() {
        let case = GridCase::ieee14();
        let mut cfg = GenerationConfig::desk(1).with_counts(1, 5);
        cfg.load_range = (1.0, 1.0);
        let profiles = generate_load_profiles(&case, &cfg).unwrap();
        // with a unit draw range every profile equals its base condition
        for p in &profiles[1..] {
            assert_eq!(p, &profiles[0]);
        }
        // and the base stays inside its narrow scaling band
        for ((p, _), (bp, _)) in profiles[0].iter().zip(case.base_loads()) {
            if bp != 0.0 {
                let r = p / bp;
                assert!((BASE_CONDITION_RANGE.0..=BASE_CONDITION_RANGE.1).contains(&r));
            }
        }
    }

    #[test]
    fn source_dataset_is_balanced_and_tagged() {
        let case = GridCase::ieee14();
        let ds = generate_source_dataset(&case, &tiny_cfg(11)).unwrap();
        assert_eq!(ds.len(), 100);
        let (normal, attack) = ds.class_counts();
        assert_eq!((normal, attack), (50, 50));
        assert!(ds.samples.iter().all(|s| s.domain == Domain::Source));
        for s in &ds.samples {
            match s.label {
                Label::Attack => {
                    let (bus, gamma) = s.provenance.attack.unwrap();
                    assert!([2, 3, 9].contains(&bus));
                    assert!([0.1, 0.2, 0.3].iter().any(|g| (g - gamma).abs() < 1e-9));
                }
                Label::Normal => assert!(s.provenance.attack.is_none()),
            }
        }
        assert_eq!(ds.samples[0].features.len(), 4 * 14 + 2 * 20);
    }

    #[test]
    fn target_dataset_is_normal_only() {
        let case = GridCase::ieee14();
        let real = perturb_case(&case, &PerturbSpec::new(0.5, 3).unwrap()).unwrap();
        let ds = generate_target_dataset(&real, &tiny_cfg(12)).unwrap();
        assert_eq!(ds.len(), 50);
        assert!(ds.samples.iter().all(|s| s.label == Label::Normal));
        assert!(ds.samples.iter().all(|s| s.domain == Domain::Target));
    }

    #[test]
    fn generation_is_deterministic() {
        let case = GridCase::ieee14();
        let a = generate_source_dataset(&case, &tiny_cfg(42)).unwrap();
        let b = generate_source_dataset(&case, &tiny_cfg(42)).unwrap();
        assert_eq!(a, b);
        let c = generate_source_dataset(&case, &tiny_cfg(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn target_distribution_shifts_under_large_modeling_error() {
        let case = GridCase::ieee14();
        let real = perturb_case(&case, &PerturbSpec::new(0.5, 3).unwrap()).unwrap();
        let cfg = GenerationConfig::desk(5).with_counts(2, 100);
        let source = generate_source_dataset(&case, &cfg).unwrap();
        let target = generate_target_dataset(&real, &cfg).unwrap();

        // Welch statistic on each flow feature, source normals vs target
        let n = case.n_bus();
        let k0 = 4 * n; // first branch-flow feature
        let source_normals: Vec<&LabeledSample> = source
            .samples
            .iter()
            .filter(|s| s.label == Label::Normal)
            .collect();
        let mut max_t: f64 = 0.0;
        for j in k0..source.feature_len() {
            let xs: Vec<f64> = source_normals.iter().map(|s| s.features[j] as f64).collect();
            let ys: Vec<f64> = target.samples.iter().map(|s| s.features[j] as f64).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64], m: f64| {
                v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
            };
            let (mx, my) = (mean(&xs), mean(&ys));
            let (vx, vy) = (var(&xs, mx), var(&ys, my));
            let t = (mx - my).abs() / (vx / xs.len() as f64 + vy / ys.len() as f64).sqrt();
            max_t = max_t.max(t);
        }
        assert!(max_t > 10.0, "no detectable flow shift, max |t| = {max_t}");
    }

    #[test]
    fn attacked_samples_remain_stealthy_under_the_generating_case() {
        let case = GridCase::ieee14();
        let cfg = GenerationConfig::desk(21).with_counts(1, 10);
        let ds = generate_source_dataset(&case, &cfg).unwrap();
        let r = vec![1.0; ds.layout.dim()];
        let flat = StateVector::flat(&case);
        for (i, s) in ds.samples.iter().enumerate() {
            if s.label != Label::Attack {
                continue;
            }
            // rebuild the noiseless pair from the stored loads and provenance
            let loads = ds.loads_of(i);
            let state = solve_power_flow(&case, &loads).unwrap();
            let z = evaluate_h(&case, &state);
            let (bus, gamma) = s.provenance.attack.unwrap();
            let att = construct_attack(&case, &state, &AttackSpec::single(bus, gamma, 0)).unwrap();
            let za = apply_attack(&z, &att).unwrap();
            let rn = wls_estimate_ac(&case, &z, &r, &flat).unwrap().residual_norm;
            let ra = wls_estimate_ac(&case, &za, &r, &flat).unwrap().residual_norm;
            assert!(
                (rn - ra).abs() < 1e-6,
                "sample {i}: normal residual {rn}, attacked residual {ra}"
            );
        }
    }

    #[test]
    fn normalize_affine_map_and_split_ratio() {
        let case = GridCase::ieee14();
        let mut ds = generate_source_dataset(&case, &GenerationConfig::desk(9).with_counts(2, 250)).unwrap();
        assert_eq!(ds.len(), 1000);
        normalize_and_split(&mut ds, 77).unwrap();
        let split = ds.split.as_ref().unwrap();
        assert_eq!(split.train.len(), 700);
        assert_eq!(split.val.len(), 300);
        let mut all: Vec<u32> = split.train.iter().chain(&split.val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<u32>>());

        // training features live in [-1, 1]
        for &i in &split.train {
            for &v in &ds.samples[i as usize].features {
                assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&(v as f64)));
            }
        }
    }

    #[test]
    fn normalization_maps_explicit_column() {
        // a feature column {0, 5, 10} in the train portion maps to {-1, 0, 1}
        let stats = NormStats {
            mins: vec![0.0],
            maxs: vec![10.0],
        };
        let map = |v: f64| 2.0 * (v - 0.0) / 10.0 - 1.0;
        assert_eq!(map(0.0), -1.0);
        assert_eq!(map(5.0), 0.0);
        assert_eq!(map(10.0), 1.0);
        // out-of-range values extend past the interval, unclipped
        assert!(map(12.0) > 1.0);
        let _ = stats;
    }

    #[test]
    fn out_of_range_values_are_not_clipped() {
        let case = GridCase::ieee14();
        let mut source = generate_source_dataset(&case, &tiny_cfg(31)).unwrap();
        normalize_and_split(&mut source, 1).unwrap();
        let stats = source.norm_stats.clone().unwrap();

        let real = perturb_case(&case, &PerturbSpec::new(0.5, 4).unwrap()).unwrap();
        let mut target = generate_target_dataset(&real, &tiny_cfg(32)).unwrap();
        apply_norm_stats(&mut target, &stats).unwrap();
        let out_of_range = target
            .samples
            .iter()
            .flat_map(|s| s.features.iter())
            .any(|&v| !(-1.0..=1.0).contains(&(v as f64)));
        assert!(out_of_range, "a 50% perturbation should push features outside the source range");
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let case = GridCase::ieee14();
        let mut ds = generate_source_dataset(&case, &tiny_cfg(55)).unwrap();
        normalize_and_split(&mut ds, 2).unwrap();
        let dir = std::env::temp_dir().join("fdia-dataset-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ds");
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn layout_mismatch_and_truncation_are_detected() {
        let case = GridCase::ieee14();
        let ds = generate_source_dataset(&case, &tiny_cfg(56)).unwrap();
        let other = GridCase::three_bus_demo();
        assert!(ds.validate_layout(&case).is_ok());
        assert!(matches!(ds.validate_layout(&other), Err(Error::Dimension(_))));

        let dir = std::env::temp_dir().join("fdia-dataset-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("truncated.ds");
        save_dataset(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn saved_bytes_are_bit_identical_across_runs() {
        let case = GridCase::ieee14();
        let dir = std::env::temp_dir().join("fdia-dataset-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let (pa, pb) = (dir.join("det-a.ds"), dir.join("det-b.ds"));
        save_dataset(&generate_source_dataset(&case, &tiny_cfg(99)).unwrap(), &pa).unwrap();
        save_dataset(&generate_source_dataset(&case, &tiny_cfg(99)).unwrap(), &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }

    #[test]
    fn csv_export_writes_expected_columns() {
        let case = GridCase::ieee14();
        let ds = generate_source_dataset(&case, &GenerationConfig::desk(7).with_counts(1, 3)).unwrap();
        let dir = std::env::temp_dir().join("fdia-dataset-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("export.csv");
        export_csv(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("feature_0,"));
        assert!(header.ends_with("label,domain,base_id,draw_id,attack_bus,gamma"));
        assert_eq!(lines.count(), ds.len());
    }
}
