//! Stealthy false-data-injection construction.
//!
//! An attacker who knows the system model and the operating state can shift
//! the estimate by c while leaving the detection residual untouched: adding
//! a = h(x + c) - h(x) to the measurements moves the WLS minimizer to x + c
//! and the misfit z - h(x_hat) is unchanged term by term.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::powerflow::{evaluate_h, MeasurementLayout, MeasurementVector, StateVector};

/// How the intensity gamma maps onto the state shift c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// theta_t <- theta_t * (1 + gamma) at each target bus. Angle shifts
    /// drive active-power misestimation without producing implausible
    /// voltage magnitude readings.
    #[default]
    AngleOnly,
    /// Scale both the angle and the magnitude of each target bus.
    AngleAndMagnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// External ids of the buses whose state the attacker shifts.
    pub target_buses: Vec<usize>,
    /// Relative intensity gamma applied to the targeted state entries.
    pub intensity: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: AttackMode,
}

impl AttackSpec {
    pub fn single(bus: usize, intensity: f64, seed: u64) -> AttackSpec {
        AttackSpec {
            target_buses: vec![bus],
            intensity,
            seed,
            mode: AttackMode::AngleOnly,
        }
    }
}

/// An injection vector a (measurement layout) together with the state shift
/// c that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackVector {
    /// Stacked injection in the canonical [P; Q; p; q] layout.
    pub a: DVector<f64>,
    /// Angle component of c, internal bus order.
    pub c_theta: DVector<f64>,
    /// Magnitude component of c, internal bus order.
    pub c_v: DVector<f64>,
    pub layout: MeasurementLayout,
}

impl AttackVector {
    /// The compromised state the attacker steers the estimator toward.
    pub fn shifted_state(&self, state: &StateVector) -> StateVector {
        StateVector {
            v: &state.v + &self.c_v,
            theta: &state.theta + &self.c_theta,
            reference: state.reference,
        }
    }
}

/// Build the injection for an explicit state shift c.
pub fn construct_attack_with_shift(
    case: &GridCase,
    state: &StateVector,
    c_theta: DVector<f64>,
    c_v: DVector<f64>,
) -> Result<AttackVector> {
    let n = case.n_bus();
    if c_theta.len() != n || c_v.len() != n || state.n_bus() != n {
        return Err(Error::Dimension(
            "state shift does not match the case bus count".into(),
        ));
    }
    let shifted = StateVector {
        v: &state.v + &c_v,
        theta: &state.theta + &c_theta,
        reference: state.reference,
    };
    let a = evaluate_h(case, &shifted).stacked() - evaluate_h(case, state).stacked();
    Ok(AttackVector {
        a,
        c_theta,
        c_v,
        layout: MeasurementLayout::of(case),
    })
}

/// Construct a stealthy injection from an [`AttackSpec`].
///
/// The targeted angle entries are scaled by (1 + gamma); the slack bus is
/// rejected because its angle is pinned by convention and cannot carry a
/// state shift.
pub fn construct_attack(
    case: &GridCase,
    state: &StateVector,
    spec: &AttackSpec,
) -> Result<AttackVector> {
    if spec.target_buses.is_empty() {
        return Err(Error::Validation("attack target set is empty".into()));
    }
    if spec.intensity <= 0.0 || !spec.intensity.is_finite() {
        return Err(Error::Validation(format!(
            "attack intensity must be positive, got {}",
            spec.intensity
        )));
    }
    let n = case.n_bus();
    let mut c_theta = DVector::zeros(n);
    let mut c_v = DVector::zeros(n);
    for &ext in &spec.target_buses {
        let i = case
            .internal_index(ext)
            .ok_or_else(|| Error::Validation(format!("attack target: unknown bus {ext}")))?;
        if i == case.slack() {
            return Err(Error::Validation(format!(
                "attack target: bus {ext} is the slack (angle pinned)"
            )));
        }
        c_theta[i] = spec.intensity * state.theta[i];
        if spec.mode == AttackMode::AngleAndMagnitude {
            c_v[i] = spec.intensity * state.v[i];
        }
    }
    construct_attack_with_shift(case, state, c_theta, c_v)
}

/// z_a = z + a, elementwise in the shared layout.
pub fn apply_attack(z: &MeasurementVector, attack: &AttackVector) -> Result<MeasurementVector> {
    if z.layout != attack.layout {
        return Err(Error::Dimension(
            "attack vector layout does not match the measurement".into(),
        ));
    }
    let za = z.stacked() + &attack.a;
    MeasurementVector::from_stacked(z.layout.clone(), &za)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{bdd_detect, calibrate_tau, wls_estimate_ac, BddConfig, Verdict};
    use crate::grid::GridCase;
    use crate::powerflow::{measure, solve_power_flow, NoiseSpec};
    use approx::assert_abs_diff_eq;

    fn solved_ieee14() -> (GridCase, StateVector) {
        let case = GridCase::ieee14();
        let state = solve_power_flow(&case, &case.base_loads()).unwrap();
        (case, state)
    }

    #[test]
    fn zero_shift_gives_zero_injection() {
        let (case, state) = solved_ieee14();
        let n = case.n_bus();
        let att =
            construct_attack_with_shift(&case, &state, DVector::zeros(n), DVector::zeros(n))
                .unwrap();
        assert!(att.a.amax() == 0.0);
    }

    #[test]
    fn slack_target_is_rejected() {
        let (case, state) = solved_ieee14();
        let err = construct_attack(&case, &state, &AttackSpec::single(1, 0.3, 0)).unwrap_err();
        assert!(err.to_string().contains("slack"), "{err}");
    }

    #[test]
    fn injection_support_is_the_electrical_neighborhood() {
        let (case, state) = solved_ieee14();
        let att = construct_attack(&case, &state, &AttackSpec::single(9, 0.3, 0)).unwrap();
        let target = case.internal_index(9).unwrap();

        let mut touched_buses = vec![false; case.n_bus()];
        let mut touched_branches = vec![false; case.n_branch()];
        touched_buses[target] = true;
        for (k, br) in case.branches().iter().enumerate() {
            if br.from_bus == target || br.to_bus == target {
                touched_branches[k] = true;
                touched_buses[br.from_bus] = true;
                touched_buses[br.to_bus] = true;
            }
        }

        let n = case.n_bus();
        let nb = case.n_branch();
        let mut nonzero_somewhere = false;
        for i in 0..n {
            for (offset, label) in [(0usize, "P"), (n, "Q")] {
                let v = att.a[offset + i];
                if touched_buses[i] {
                    nonzero_somewhere |= v.abs() > 1e-9;
                } else {
                    assert!(
                        v.abs() <= 1e-12,
                        "{label} injection at bus {} should be untouched, got {v}",
                        case.external_id(i)
                    );
                }
            }
        }
        for k in 0..nb {
            for offset in [2 * n, 2 * n + nb] {
                let v = att.a[offset + k];
                if !touched_branches[k] {
                    assert!(v.abs() <= 1e-12, "flow {k} should be untouched, got {v}");
                }
            }
        }
        assert!(nonzero_somewhere);
    }

    #[test]
    fn residual_is_preserved_at_the_exact_state() {
        let (case, state) = solved_ieee14();
        let z = measure(&case, &state, &NoiseSpec::none());
        let att = construct_attack(&case, &state, &AttackSpec::single(3, 0.2, 0)).unwrap();
        let za = apply_attack(&z, &att).unwrap();

        let shifted = att.shifted_state(&state);
        let r_normal = (z.stacked() - evaluate_h(&case, &state).stacked()).norm();
        let r_attacked = (za.stacked() - evaluate_h(&case, &shifted).stacked()).norm();
        assert_abs_diff_eq!(r_normal, r_attacked, epsilon = 1e-10);
    }

    #[test]
    fn attacked_sample_passes_bdd_with_calibrated_tau() {
        let (case, state) = solved_ieee14();
        let r_diag = vec![1.0; MeasurementLayout::of(&case).dim()];
        let flat = StateVector::flat(&case);

        // calibrate on normal residuals at 1% noise
        let residuals: Vec<f64> = (0..200)
            .map(|k| {
                let z = measure(&case, &state, &NoiseSpec::uniform(0.01, 1000 + k));
                wls_estimate_ac(&case, &z, &r_diag, &flat).unwrap().residual_norm
            })
            .collect();
        let tau = calibrate_tau(&residuals, 0.999).unwrap();
        let cfg = BddConfig::fixed(tau).unwrap();

        let z = measure(&case, &state, &NoiseSpec::uniform(0.01, 7777));
        let att = construct_attack(&case, &state, &AttackSpec::single(2, 0.1, 0)).unwrap();
        let za = apply_attack(&z, &att).unwrap();
        let res = wls_estimate_ac(&case, &za, &r_diag, &flat).unwrap().residual_norm;
        assert_eq!(bdd_detect(res, &cfg), Verdict::Normal, "residual {res} vs tau {tau}");
    }

    #[test]
    fn apply_then_subtract_restores_the_measurement() {
        let (case, state) = solved_ieee14();
        let z = measure(&case, &state, &NoiseSpec::uniform(0.01, 5));
        let att = construct_attack(&case, &state, &AttackSpec::single(9, 0.3, 0)).unwrap();
        let za = apply_attack(&z, &att).unwrap();
        let mut neg = att.clone();
        neg.a = -neg.a;
        let back = apply_attack(&za, &neg).unwrap();
        assert_abs_diff_eq!(
            back.stacked().as_slice(),
            z.stacked().as_slice(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let (case, state) = solved_ieee14();
        let att = construct_attack(&case, &state, &AttackSpec::single(9, 0.3, 0)).unwrap();
        let other = GridCase::three_bus_demo();
        let z3 = measure(
            &other,
            &solve_power_flow(&other, &other.base_loads()).unwrap(),
            &NoiseSpec::none(),
        );
        assert!(matches!(apply_attack(&z3, &att), Err(Error::Dimension(_))));
    }

    #[test]
    fn injection_magnitude_grows_with_intensity() {
        let (case, state) = solved_ieee14();
        let mut last = 0.0;
        for gamma in [0.1, 0.2, 0.3] {
            let att = construct_attack(&case, &state, &AttackSpec::single(9, gamma, 0)).unwrap();
            let norm = att.a.norm();
            assert!(norm >= last, "norm {norm} decreased at gamma {gamma}");
            last = norm;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn magnitude_mode_touches_voltages() {
        let (case, state) = solved_ieee14();
        let mut spec = AttackSpec::single(9, 0.2, 0);
        spec.mode = AttackMode::AngleAndMagnitude;
        let att = construct_attack(&case, &state, &spec).unwrap();
        let i = case.internal_index(9).unwrap();
        assert!(att.c_v[i] != 0.0);
        assert!(att.c_theta[i] != 0.0);
    }
}
