//! AC power flow and the nonlinear measurement function h(x).
//!
//! The measurement model follows the standard pi-line formulation without
//! transformer taps: for a branch (i, j) with series admittance g + jb and
//! total charging susceptance b_sh,
//!
//! ```text
//! p_ij = Vi^2 g - Vi Vj (g cos(ti - tj) + b sin(ti - tj))
//! q_ij = -Vi^2 (b + b_sh/2) - Vi Vj (g sin(ti - tj) - b cos(ti - tj))
//! P_i  = sum of p_ij over branches incident to i (measured at i's end)
//! Q_i  = likewise for q_ij
//! ```
//!
//! With zero charging this is exactly the textbook injection/flow model. The
//! Newton-Raphson solver and the WLS estimator both evaluate h(x) and its
//! Jacobian through the same code path, so a solved state reproduces its own
//! measurements to solver precision.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BusKind, GridCase};

/// Newton-Raphson iteration cap.
pub const PF_MAX_ITER: usize = 50;
/// Interior convergence tolerance on the power-mismatch infinity norm.
pub const PF_TOL: f64 = 1e-10;

/// Bus voltage magnitudes and angles, internal bus order, slack angle pinned
/// to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub v: DVector<f64>,
    pub theta: DVector<f64>,
    /// Internal index of the reference (slack) bus.
    pub reference: usize,
}

impl StateVector {
    /// Flat start: unit magnitudes (setpoints at slack/PV buses), zero angles.
    pub fn flat(case: &GridCase) -> StateVector {
        let v = DVector::from_iterator(
            case.n_bus(),
            case.buses().iter().map(|b| b.v_setpoint.unwrap_or(1.0)),
        );
        StateVector {
            v,
            theta: DVector::zeros(case.n_bus()),
            reference: case.slack(),
        }
    }

    pub fn n_bus(&self) -> usize {
        self.v.len()
    }
}

/// Canonical measurement ordering: per-bus P injections, per-bus Q
/// injections, per-branch from-end p flows, per-branch from-end q flows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementLayout {
    pub n_bus: usize,
    pub n_branch: usize,
    pub case_hash: String,
}

impl MeasurementLayout {
    pub fn of(case: &GridCase) -> MeasurementLayout {
        MeasurementLayout {
            n_bus: case.n_bus(),
            n_branch: case.n_branch(),
            case_hash: case.layout_hash().to_string(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_bus + 2 * self.n_branch
    }
}

/// A measurement vector z in the canonical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub p_inj: DVector<f64>,
    pub q_inj: DVector<f64>,
    pub p_flow: DVector<f64>,
    pub q_flow: DVector<f64>,
    pub layout: MeasurementLayout,
}

impl MeasurementVector {
    /// Stack into a single vector [P; Q; p; q].
    pub fn stacked(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.layout.dim());
        let n = self.layout.n_bus;
        let b = self.layout.n_branch;
        out.rows_mut(0, n).copy_from(&self.p_inj);
        out.rows_mut(n, n).copy_from(&self.q_inj);
        out.rows_mut(2 * n, b).copy_from(&self.p_flow);
        out.rows_mut(2 * n + b, b).copy_from(&self.q_flow);
        out
    }

    pub fn from_stacked(layout: MeasurementLayout, z: &DVector<f64>) -> Result<MeasurementVector> {
        if z.len() != layout.dim() {
            return Err(Error::Dimension(format!(
                "stacked measurement length {} does not match layout dimension {}",
                z.len(),
                layout.dim()
            )));
        }
        let n = layout.n_bus;
        let b = layout.n_branch;
        Ok(MeasurementVector {
            p_inj: z.rows(0, n).into_owned(),
            q_inj: z.rows(n, n).into_owned(),
            p_flow: z.rows(2 * n, b).into_owned(),
            q_flow: z.rows(2 * n + b, b).into_owned(),
            layout,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// e_k drawn uniformly from [-sigma |z_k|, +sigma |z_k|].
    UniformBounded,
    /// e_k ~ Normal(0, (sigma |z_k|)^2).
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
    pub distribution: NoiseDistribution,
}

impl NoiseSpec {
    pub fn uniform(sigma: f64, seed: u64) -> NoiseSpec {
        NoiseSpec {
            sigma,
            seed,
            distribution: NoiseDistribution::UniformBounded,
        }
    }

    pub fn none() -> NoiseSpec {
        NoiseSpec::uniform(0.0, 0)
    }
}

/// Flow quantities and partial derivatives at one end of a branch.
struct FlowEval {
    p: f64,
    q: f64,
    dp_dti: f64,
    dp_dvi: f64,
    dp_dvj: f64,
    dq_dti: f64,
    dq_dvi: f64,
    dq_dvj: f64,
}

/// Evaluate the flow leaving bus i toward bus j, with i the metered end.
/// dp/dtj = -dp/dti and dq/dtj = -dq/dti always hold, so only the i-side
/// angle partials are returned.
fn eval_flow(vi: f64, vj: f64, ti: f64, tj: f64, g: f64, b: f64, bsh_half: f64) -> FlowEval {
    let dt = ti - tj;
    let (sin, cos) = dt.sin_cos();
    let gc_bs = g * cos + b * sin;
    let gs_bc = g * sin - b * cos;
    FlowEval {
        p: vi * vi * g - vi * vj * gc_bs,
        q: -vi * vi * (b + bsh_half) - vi * vj * gs_bc,
        dp_dti: vi * vj * gs_bc,
        dp_dvi: 2.0 * vi * g - vj * gc_bs,
        dp_dvj: -vi * gc_bs,
        dq_dti: -vi * vj * gc_bs,
        dq_dvi: -2.0 * vi * (b + bsh_half) - vj * gs_bc,
        dq_dvj: -vi * gs_bc,
    }
}

/// Per-branch flows at both ends: (p_from, q_from, p_to, q_to).
pub fn branch_flows_both(case: &GridCase, state: &StateVector) -> Vec<(f64, f64, f64, f64)> {
    case.branches()
        .iter()
        .map(|br| {
            let (g, b) = br.series_admittance();
            let bsh2 = br.b_shunt / 2.0;
            let (i, j) = (br.from_bus, br.to_bus);
            let f = eval_flow(state.v[i], state.v[j], state.theta[i], state.theta[j], g, b, bsh2);
            let t = eval_flow(state.v[j], state.v[i], state.theta[j], state.theta[i], g, b, bsh2);
            (f.p, f.q, t.p, t.q)
        })
        .collect()
}

/// Evaluate the exact measurement function h(x): injections and from-end
/// flows, no noise.
pub fn evaluate_h(case: &GridCase, state: &StateVector) -> MeasurementVector {
    assert_eq!(state.n_bus(), case.n_bus(), "state does not match case");
    let n = case.n_bus();
    let nb = case.n_branch();
    let mut p_inj = DVector::zeros(n);
    let mut q_inj = DVector::zeros(n);
    let mut p_flow = DVector::zeros(nb);
    let mut q_flow = DVector::zeros(nb);
    for (k, (pf, qf, pt, qt)) in branch_flows_both(case, state).into_iter().enumerate() {
        let br = &case.branches()[k];
        p_flow[k] = pf;
        q_flow[k] = qf;
        p_inj[br.from_bus] += pf;
        q_inj[br.from_bus] += qf;
        p_inj[br.to_bus] += pt;
        q_inj[br.to_bus] += qt;
    }
    MeasurementVector {
        p_inj,
        q_inj,
        p_flow,
        q_flow,
        layout: MeasurementLayout::of(case),
    }
}

/// Jacobian of the full stacked measurement function with respect to
/// [theta_0..theta_{n-1}, V_0..V_{n-1}] (all buses, slack angle included;
/// callers drop the columns they pin).
pub fn measurement_jacobian(case: &GridCase, state: &StateVector) -> DMatrix<f64> {
    let n = case.n_bus();
    let nb = case.n_branch();
    let m = 2 * n + 2 * nb;
    let mut jac = DMatrix::zeros(m, 2 * n);
    let th = |bus: usize| bus;
    let vm = |bus: usize| n + bus;

    for (k, br) in case.branches().iter().enumerate() {
        let (g, b) = br.series_admittance();
        let bsh2 = br.b_shunt / 2.0;
        let (i, j) = (br.from_bus, br.to_bus);
        let f = eval_flow(state.v[i], state.v[j], state.theta[i], state.theta[j], g, b, bsh2);
        let t = eval_flow(state.v[j], state.v[i], state.theta[j], state.theta[i], g, b, bsh2);

        // from-end flow rows
        let (rp, rq) = (2 * n + k, 2 * n + nb + k);
        jac[(rp, th(i))] += f.dp_dti;
        jac[(rp, th(j))] -= f.dp_dti;
        jac[(rp, vm(i))] += f.dp_dvi;
        jac[(rp, vm(j))] += f.dp_dvj;
        jac[(rq, th(i))] += f.dq_dti;
        jac[(rq, th(j))] -= f.dq_dti;
        jac[(rq, vm(i))] += f.dq_dvi;
        jac[(rq, vm(j))] += f.dq_dvj;

        // injection rows accumulate both ends
        jac[(i, th(i))] += f.dp_dti;
        jac[(i, th(j))] -= f.dp_dti;
        jac[(i, vm(i))] += f.dp_dvi;
        jac[(i, vm(j))] += f.dp_dvj;
        jac[(n + i, th(i))] += f.dq_dti;
        jac[(n + i, th(j))] -= f.dq_dti;
        jac[(n + i, vm(i))] += f.dq_dvi;
        jac[(n + i, vm(j))] += f.dq_dvj;

        jac[(j, th(j))] += t.dp_dti;
        jac[(j, th(i))] -= t.dp_dti;
        jac[(j, vm(j))] += t.dp_dvi;
        jac[(j, vm(i))] += t.dp_dvj;
        jac[(n + j, th(j))] += t.dq_dti;
        jac[(n + j, th(i))] -= t.dq_dti;
        jac[(n + j, vm(j))] += t.dq_dvi;
        jac[(n + j, vm(i))] += t.dq_dvj;
    }
    jac
}

/// Solve the AC power flow for the given per-bus loads (internal bus order).
///
/// Specified quantities: P at every non-slack bus (p_gen - p_load), Q at
/// every PQ bus (-q_load). Slack angle stays zero and PV magnitudes stay at
/// their setpoints. Flat start, full Newton iterations.
pub fn solve_power_flow(case: &GridCase, loads: &[(f64, f64)]) -> Result<StateVector> {
    solve_power_flow_counted(case, loads).map(|(state, _)| state)
}

/// Same as [`solve_power_flow`] but also reports how many Newton corrections
/// were applied (zero when the flat start already satisfies the tolerance).
pub fn solve_power_flow_counted(
    case: &GridCase,
    loads: &[(f64, f64)],
) -> Result<(StateVector, usize)> {
    if loads.len() != case.n_bus() {
        return Err(Error::Dimension(format!(
            "loads length {} does not match bus count {}",
            loads.len(),
            case.n_bus()
        )));
    }
    if loads.iter().any(|(p, q)| !p.is_finite() || !q.is_finite()) {
        return Err(Error::NonFinite("load profile".into()));
    }
    let n = case.n_bus();
    let slack = case.slack();

    let p_spec: Vec<f64> = case
        .buses()
        .iter()
        .zip(loads)
        .map(|(b, (pd, _))| b.p_gen - pd)
        .collect();
    let q_spec: Vec<f64> = loads.iter().map(|(_, qd)| -qd).collect();

    // unknowns: theta at non-slack buses, V at PQ buses
    let theta_vars: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let v_vars: Vec<usize> = (0..n)
        .filter(|&i| case.bus(i).kind == BusKind::Pq)
        .collect();
    // mismatch rows: P at non-slack, Q at PQ
    let p_rows = &theta_vars;
    let q_rows = &v_vars;

    let mut state = StateVector::flat(case);
    let n_unknown = theta_vars.len() + v_vars.len();

    for iter in 0..=PF_MAX_ITER {
        let h = evaluate_h(case, &state);
        let mut mismatch = DVector::zeros(n_unknown);
        for (r, &i) in p_rows.iter().enumerate() {
            mismatch[r] = p_spec[i] - h.p_inj[i];
        }
        for (r, &i) in q_rows.iter().enumerate() {
            mismatch[p_rows.len() + r] = q_spec[i] - h.q_inj[i];
        }
        let norm = mismatch.amax();
        if !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iter,
                mismatch: f64::NAN,
            });
        }
        if norm < PF_TOL {
            return Ok((state, iter));
        }
        if iter == PF_MAX_ITER {
            return Err(Error::NonConvergence {
                iterations: iter,
                mismatch: norm,
            });
        }

        let full = measurement_jacobian(case, &state);
        let mut jac = DMatrix::zeros(n_unknown, n_unknown);
        for (r, &i) in p_rows.iter().enumerate() {
            for (c, &tv) in theta_vars.iter().enumerate() {
                jac[(r, c)] = full[(i, tv)];
            }
            for (c, &vv) in v_vars.iter().enumerate() {
                jac[(r, theta_vars.len() + c)] = full[(i, n + vv)];
            }
        }
        for (r, &i) in q_rows.iter().enumerate() {
            for (c, &tv) in theta_vars.iter().enumerate() {
                jac[(p_rows.len() + r, c)] = full[(n + i, tv)];
            }
            for (c, &vv) in v_vars.iter().enumerate() {
                jac[(p_rows.len() + r, theta_vars.len() + c)] = full[(n + i, n + vv)];
            }
        }

        let step = jac
            .lu()
            .solve(&mismatch)
            .ok_or_else(|| Error::Singular("power-flow Jacobian".into()))?;
        for (c, &i) in theta_vars.iter().enumerate() {
            state.theta[i] += step[c];
        }
        for (c, &i) in v_vars.iter().enumerate() {
            state.v[i] += step[theta_vars.len() + c];
        }
        if state.v.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::NonConvergence {
                iterations: iter + 1,
                mismatch: norm,
            });
        }
    }
    unreachable!("loop returns or errors before falling through")
}

/// Apply measurement noise to an exact measurement vector.
///
/// Draws are made in stacked order from a ChaCha stream seeded by
/// `noise.seed`, so equal seeds give bit-identical vectors.
pub fn measure(case: &GridCase, state: &StateVector, noise: &NoiseSpec) -> MeasurementVector {
    assert!(noise.sigma >= 0.0, "noise sigma must be nonnegative");
    let clean = evaluate_h(case, state);
    if noise.sigma == 0.0 {
        return clean;
    }
    let mut z = clean.stacked();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    for k in 0..z.len() {
        let bound = noise.sigma * z[k].abs();
        if bound == 0.0 {
            continue;
        }
        let e = match noise.distribution {
            NoiseDistribution::UniformBounded => rng.random_range(-bound..=bound),
            NoiseDistribution::Gaussian => {
                let n = rand_distr::Normal::new(0.0, bound).expect("valid normal");
                rng.sample(n)
            }
        };
        z[k] += e;
    }
    MeasurementVector::from_stacked(clean.layout, &z).expect("layout preserved")
}

/// DC measurement matrix for a set of metered branches: one row per metered
/// active flow P_ij with +1/X at the from column and -1/X at the to column.
pub fn dc_measurement_matrix(case: &GridCase, meters: &[usize]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(meters.len(), case.n_bus());
    for (row, &k) in meters.iter().enumerate() {
        let br = &case.branches()[k];
        h[(row, br.from_bus)] = 1.0 / br.x;
        h[(row, br.to_bus)] = -1.0 / br.x;
    }
    h
}

/// DC matrix with every branch metered, in branch order.
pub fn dc_measurement_matrix_full(case: &GridCase) -> DMatrix<f64> {
    let meters: Vec<usize> = (0..case.n_branch()).collect();
    dc_measurement_matrix(case, &meters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{load_case, GridCase};
    use approx::assert_abs_diff_eq;

    fn two_bus_case(r: f64, x: f64, p_load: f64, q_load: f64) -> GridCase {
        let json = format!(
            r#"{{
                "id": "case2",
                "base_mva": 100.0,
                "buses": [
                    {{"index": 1, "kind": "slack", "p_load": 0.0, "q_load": 0.0, "p_gen": 0.0, "v_setpoint": 1.0}},
                    {{"index": 2, "kind": "pq", "p_load": {p_load}, "q_load": {q_load}, "p_gen": 0.0}}
                ],
                "branches": [
                    {{"from": 1, "to": 2, "r": {r}, "x": {x}, "b_shunt": 0.0}}
                ]
            }}"#
        );
        load_case(&json).unwrap()
    }

    #[test]
    fn flat_case_is_already_solved() {
        let case = GridCase::three_bus_demo();
        let loads = vec![(0.0, 0.0); 3];
        let (state, iterations) = solve_power_flow_counted(&case, &loads).unwrap();
        assert_abs_diff_eq!(state.v.as_slice(), [1.0, 1.0, 1.0].as_slice(), epsilon = 1e-15);
        assert_abs_diff_eq!(state.theta.as_slice(), [0.0; 3].as_slice(), epsilon = 1e-15);
        assert_eq!(iterations, 0);
    }

    #[test]
    fn two_bus_solution_matches_closed_form() {
        // lossless line: V2 sin(t2) = -P x, V2 cos(t2) = V2^2 + Q x has the
        // closed-form solution V2^2 = the larger root of
        // u^2 - (1 - 2 Q x) u + x^2 (P^2 + Q^2) = 0.
        let (p, q, x) = (0.5, 0.2, 0.1);
        let case = two_bus_case(0.0, x, p, q);
        let state = solve_power_flow(&case, &case.base_loads()).unwrap();

        let b = 1.0 - 2.0 * q * x;
        let u = (b + (b * b - 4.0 * x * x * (p * p + q * q)).sqrt()) / 2.0;
        let v2 = u.sqrt();
        let t2 = (-p * x / v2).asin();
        assert_abs_diff_eq!(state.v[1], v2, epsilon = 1e-9);
        assert_abs_diff_eq!(state.theta[1], t2, epsilon = 1e-9);
    }

    #[test]
    fn ieee14_solution_is_self_consistent() {
        let case = GridCase::ieee14();
        let loads = case.base_loads();
        let state = solve_power_flow(&case, &loads).unwrap();
        assert_eq!(state.theta[case.slack()], 0.0);
        for (i, bus) in case.buses().iter().enumerate() {
            if let (BusKind::Pv | BusKind::Slack, Some(vs)) = (bus.kind, bus.v_setpoint) {
                assert_abs_diff_eq!(state.v[i], vs, epsilon = 1e-15);
            }
        }
        let h = evaluate_h(&case, &state);
        for (i, bus) in case.buses().iter().enumerate() {
            if i != case.slack() {
                assert_abs_diff_eq!(h.p_inj[i], bus.p_gen - loads[i].0, epsilon = 1e-8);
            }
            if bus.kind == BusKind::Pq {
                assert_abs_diff_eq!(h.q_inj[i], -loads[i].1, epsilon = 1e-8);
            }
        }
    }

    /// Independent cross-check: a Gauss-Seidel sweep over the complex Y-bus,
    /// holding every non-slack bus at the P,Q injections of the Newton
    /// solution, must land on the same voltages.
    #[test]
    fn ieee14_newton_agrees_with_gauss_seidel_oracle() {
        use nalgebra::Complex;
        let case = GridCase::ieee14();
        let state = solve_power_flow(&case, &case.base_loads()).unwrap();
        let h = evaluate_h(&case, &state);
        let n = case.n_bus();

        let mut ybus = DMatrix::<Complex<f64>>::zeros(n, n);
        for br in case.branches() {
            let (g, b) = br.series_admittance();
            let ys = Complex::new(g, b);
            let ysh = Complex::new(0.0, br.b_shunt / 2.0);
            let (i, j) = (br.from_bus, br.to_bus);
            ybus[(i, i)] += ys + ysh;
            ybus[(j, j)] += ys + ysh;
            ybus[(i, j)] -= ys;
            ybus[(j, i)] -= ys;
        }

        let slack = case.slack();
        let mut v: Vec<Complex<f64>> = (0..n)
            .map(|i| {
                if i == slack {
                    Complex::from_polar(state.v[slack], 0.0)
                } else {
                    Complex::new(1.0, 0.0)
                }
            })
            .collect();
        let s: Vec<Complex<f64>> = (0..n).map(|i| Complex::new(h.p_inj[i], h.q_inj[i])).collect();

        for _ in 0..5000 {
            let mut delta: f64 = 0.0;
            for i in 0..n {
                if i == slack {
                    continue;
                }
                let mut acc = Complex::new(0.0, 0.0);
                for j in 0..n {
                    if j != i {
                        acc += ybus[(i, j)] * v[j];
                    }
                }
                let vi_new = ((s[i] / v[i]).conj() - acc) / ybus[(i, i)];
                delta = delta.max((vi_new - v[i]).norm());
                v[i] = vi_new;
            }
            if delta < 1e-12 {
                break;
            }
        }
        for i in 0..n {
            assert_abs_diff_eq!(v[i].norm(), state.v[i], epsilon = 1e-6);
            let ang = v[i].arg() - v[slack].arg();
            assert_abs_diff_eq!(ang, state.theta[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn infeasible_loading_reports_nonconvergence() {
        let case = GridCase::ieee14();
        let loads: Vec<(f64, f64)> = case.base_loads().iter().map(|(p, q)| (p * 100.0, q * 100.0)).collect();
        match solve_power_flow(&case, &loads) {
            Err(Error::NonConvergence { .. }) => {}
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn injections_are_signed_sums_of_flows() {
        let case = GridCase::ieee14();
        let state = solve_power_flow(&case, &case.base_loads()).unwrap();
        let h = evaluate_h(&case, &state);
        let both = branch_flows_both(&case, &state);
        let n = case.n_bus();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for (k, br) in case.branches().iter().enumerate() {
            let (pf, qf, pt, qt) = both[k];
            p[br.from_bus] += pf;
            q[br.from_bus] += qf;
            p[br.to_bus] += pt;
            q[br.to_bus] += qt;
            assert_abs_diff_eq!(h.p_flow[k], pf, epsilon = 1e-15);
            assert_abs_diff_eq!(h.q_flow[k], qf, epsilon = 1e-15);
        }
        for i in 0..n {
            assert_abs_diff_eq!(h.p_inj[i], p[i], epsilon = 1e-12);
            assert_abs_diff_eq!(h.q_inj[i], q[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn measurement_noise_is_bounded_and_deterministic() {
        let case = GridCase::ieee14();
        let state = solve_power_flow(&case, &case.base_loads()).unwrap();
        let clean = measure(&case, &state, &NoiseSpec::none());
        assert_eq!(clean, evaluate_h(&case, &state));

        let spec = NoiseSpec::uniform(0.01, 42);
        let a = measure(&case, &state, &spec);
        let b = measure(&case, &state, &spec);
        assert_eq!(a, b);
        let (za, zc) = (a.stacked(), clean.stacked());
        for k in 0..za.len() {
            assert!((za[k] - zc[k]).abs() <= 0.01 * zc[k].abs() + 1e-15);
        }
        let c = measure(&case, &state, &NoiseSpec::uniform(0.01, 43));
        assert_ne!(a, c);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let case = GridCase::ieee14();
        let mut state = solve_power_flow(&case, &case.base_loads()).unwrap();
        // move off the solution so nothing is special about the point
        for i in 0..case.n_bus() {
            state.theta[i] += 0.01 * (i as f64 - 3.0) / 10.0;
            state.v[i] += 0.005 * ((i % 3) as f64 - 1.0);
        }
        let jac = measurement_jacobian(&case, &state);
        let n = case.n_bus();
        let eps = 1e-7;
        for col in 0..2 * n {
            let mut plus = state.clone();
            let mut minus = state.clone();
            if col < n {
                plus.theta[col] += eps;
                minus.theta[col] -= eps;
            } else {
                plus.v[col - n] += eps;
                minus.v[col - n] -= eps;
            }
            let hp = evaluate_h(&case, &plus).stacked();
            let hm = evaluate_h(&case, &minus).stacked();
            for row in 0..hp.len() {
                let fd = (hp[row] - hm[row]) / (2.0 * eps);
                assert_abs_diff_eq!(jac[(row, col)], fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn dc_matrix_matches_published_three_bus_values() {
        let case = GridCase::three_bus_demo();
        let h = dc_measurement_matrix_full(&case);
        let expected = [
            [35.59, -35.59, 0.0],
            [32.89, 0.0, -32.89],
            [0.0, 92.59, -92.59],
        ];
        for r in 0..3 {
            for c in 0..3 {
                assert_abs_diff_eq!(h[(r, c)], expected[r][c], epsilon = 0.01);
            }
            assert_abs_diff_eq!(h.row(r).sum(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dc_matrix_matches_perturbed_instance() {
        // The fixed "real world" reactances of the worked example. The
        // published table rounds them to 0.0260/0.0287/0.0116; the matrix it
        // shows was computed before rounding, so the reciprocals of the
        // matrix entries are the faithful parameter values.
        let case = crate::estimation::three_bus_perturbed_instance();
        let xs: Vec<f64> = case.branches().iter().map(|b| b.x).collect();
        assert_abs_diff_eq!(xs[0], 0.0260, epsilon = 5e-5);
        assert_abs_diff_eq!(xs[1], 0.0287, epsilon = 5e-5);
        assert_abs_diff_eq!(xs[2], 0.0116, epsilon = 5e-5);
        let h = dc_measurement_matrix_full(&case);
        assert_abs_diff_eq!(h[(0, 0)], 38.49, epsilon = 0.01);
        assert_abs_diff_eq!(h[(1, 0)], 34.88, epsilon = 0.01);
        assert_abs_diff_eq!(h[(2, 1)], 86.20, epsilon = 0.01);
    }

    #[test]
    fn dc_matrix_unit_reactance_row() {
        let case = two_bus_case(0.0, 1.0, 0.0, 0.0);
        let h = dc_measurement_matrix_full(&case);
        assert_eq!(h.nrows(), 1);
        assert_eq!(h[(0, 0)], 1.0);
        assert_eq!(h[(0, 1)], -1.0);
    }
}
