//! Coupled Riccati recursions: backward optimal control of the reversed-chain
//! system, forward linear minimum mean-square filtering of the standard
//! jump-linear system, and the transpose/time-reversal map between them.
//!
//! Zero-probability modes are handled by exact-zero tests on the propagated
//! distributions: `P_i(t) = 0, M_i(t) = 0` when `Pr(theta(t) = i) = 0`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result, Violation};
use crate::family::{Mat, MatrixFamily};
use crate::linalg::{self, spd_solve};
use crate::model::{theta_distribution, validate_plant, ControlPlant, FilterPlant};
use crate::moments::{evaluate_cost, stage_weights, GainSchedule};
use crate::operators::{apply_d, mix_column};

/// Relative tolerance for declaring the control/filter correspondence verified.
pub const DUALITY_TOL: f64 = 1e-9;
/// Relative tolerance of the value-function identity.
pub const VALUE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    /// `p[t]` for `t = 0..=horizon`.
    pub p: Vec<MatrixFamily>,
    /// `M(t) = R(t)^{-1} B' D(P(t+1)) A`, `t = 0..horizon`.
    pub m: Vec<MatrixFamily>,
    /// Optimal feedback `K(t) = -M(t)` for `u(t) = K(t) x(t)`.
    pub gains: GainSchedule,
    /// `<P(0), (Delta, ..., Delta)>`.
    pub optimal_cost: f64,
}

/// Backward coupled Riccati recursion for the reversed-chain quadratic
/// regulator.
pub fn solve_trmjlq(plant: &ControlPlant) -> Result<ControlSolution> {
    plant.check_dimensions()?;
    let pi = theta_distribution(&plant.chain);
    let horizon = plant.chain.horizon();
    let modes = plant.modes();
    let (n, m) = (plant.state_dim(), plant.input_dim());

    let terminal = stage_weights(plant, None)?.scale_modes(pi.row(horizon))?;
    let mut p_rev = vec![terminal];
    let mut gains_rev = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let next = p_rev.last().expect("terminal pushed");
        let mut p_t = Vec::with_capacity(modes);
        let mut m_t = Vec::with_capacity(modes);
        for i in 0..modes {
            let w = pi.row(t)[i];
            if w == 0.0 {
                p_t.push(Mat::zeros(n, n));
                m_t.push(Mat::zeros(m, n));
                continue;
            }
            let (a, b, c, d) = (&plant.a[i], &plant.b[i], &plant.c[i], &plant.d[i]);
            let dp = mix_column(next, &plant.chain, i, n, n);
            let bt_dp = b.transpose() * &dp;
            let r = &bt_dp * b + d.transpose() * d * w;
            let bda = &bt_dp * a;
            let gain = spd_solve(&r, &bda).map_err(|condition| Error::Singular {
                what: "control weight R",
                t,
                mode: i + 1,
                condition,
            })?;
            let mut p_i = c.transpose() * c * w + a.transpose() * &dp * a - bda.transpose() * &gain;
            linalg::symmetrize_in_place(&mut p_i);
            p_t.push(p_i);
            m_t.push(gain);
        }
        p_rev.push(MatrixFamily::new(p_t)?);
        gains_rev.push(MatrixFamily::new(m_t)?);
    }
    p_rev.reverse();
    gains_rev.reverse();
    let feedback = gains_rev.iter().map(|m| m.scale(-1.0)).collect();
    let optimal_cost = p_rev[0].iter().map(|p| (p * &plant.delta).trace()).sum();
    Ok(ControlSolution {
        p: p_rev,
        m: gains_rev,
        gains: GainSchedule::new(feedback)?,
        optimal_cost,
    })
}

/// `pi_i(t) Q_i(K) + (A_i + B_i K)' D_i(P(t+1)) (A_i + B_i K)`: the matrix
/// minimized mode by mode at step `t`.
pub fn bellman_term(plant: &ControlPlant, sol: &ControlSolution, t: usize, i: usize, k: &Mat) -> Result<Mat> {
    let pi = theta_distribution(&plant.chain);
    let n = plant.state_dim();
    if k.shape() != (plant.input_dim(), n) {
        return Err(Error::dims("bellman gain", format!("{}x{n}", plant.input_dim()), format!("{:?}", k.shape())));
    }
    let w = pi.row(t)[i];
    let dp = mix_column(&sol.p[t + 1], &plant.chain, i, n, n);
    let acl = &plant.a[i] + &plant.b[i] * k;
    let dk = &plant.d[i] * k;
    let q = plant.c[i].transpose() * &plant.c[i] + dk.transpose() * dk;
    Ok(q * w + acl.transpose() * dp * acl)
}

/// Which `(t, i)` entries of a gain schedule a perturbation may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbSupport {
    /// Only where `Pr(theta(t) = i) > 0`.
    Reachable,
    /// Only where `Pr(theta(t) = i) = 0`.
    Unreachable,
}

/// Adds i.i.d. `N(0, scale^2)` noise to the selected gain entries.
pub fn perturb_schedule<R: Rng>(
    plant: &ControlPlant,
    gains: &GainSchedule,
    scale: f64,
    support: PerturbSupport,
    rng: &mut R,
) -> Result<GainSchedule> {
    let pi = theta_distribution(&plant.chain);
    let mut out = Vec::with_capacity(gains.len());
    for (t, fam) in gains.as_slice().iter().enumerate() {
        let mats = fam
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let reachable = pi.row(t)[i] > 0.0;
                let touch = match support {
                    PerturbSupport::Reachable => reachable,
                    PerturbSupport::Unreachable => !reachable,
                };
                if touch {
                    k.map(|x| x + scale * rng.sample::<f64, _>(StandardNormal))
                } else {
                    k.clone()
                }
            })
            .collect();
        out.push(MatrixFamily::new(mats)?);
    }
    GainSchedule::new(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueCheck {
    /// `|<P(0), Delta> - J(M)| / max(|<P(0), Delta>|, |J(M)|)`.
    pub identity_error: f64,
    /// Costs of the perturbed schedules.
    pub perturbed_costs: Vec<f64>,
    /// Largest `(optimal - slack) - J(perturbed)`; non-positive when no
    /// perturbation beats the optimum.
    pub worst_margin: f64,
}

impl ValueCheck {
    pub fn passed(&self) -> bool {
        self.identity_error <= VALUE_TOL && self.worst_margin <= 0.0
    }
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Checks the value identity and that 20 random perturbations of the
/// optimal gains (10 at scale 0.1, 10 at scale 1.0, reachable modes only)
/// never lower the cost.
pub fn verify_value_function(plant: &ControlPlant, sol: &ControlSolution, seed: u64) -> Result<ValueCheck> {
    let opt = sol.optimal_cost;
    let identity_error = relative_gap(opt, evaluate_cost(plant, &sol.gains)?);
    let slack = VALUE_TOL * (1.0 + opt.abs());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturbed_costs = Vec::with_capacity(20);
    for scale in [0.1, 1.0] {
        for _ in 0..10 {
            let k = perturb_schedule(plant, &sol.gains, scale, PerturbSupport::Reachable, &mut rng)?;
            perturbed_costs.push(evaluate_cost(plant, &k)?);
        }
    }
    let worst_margin = perturbed_costs
        .iter()
        .map(|c| (opt - slack) - c)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ValueCheck {
        identity_error,
        perturbed_costs,
        worst_margin,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSolution {
    /// `s[t] = E[e(t) e(t)' 1{eta(t) = i}]` for `t = 0..=horizon`.
    pub s: Vec<MatrixFamily>,
    /// Observer gains `K^f(t)`, `t = 0..=horizon`, each `n x s`.
    pub gains: Vec<MatrixFamily>,
}

pub fn solve_lmmse(plant: &FilterPlant) -> Result<FilterSolution> {
    solve_lmmse_with_initial(plant, None)
}

/// Forward coupled Riccati recursion of the LMMSE observer
/// `zhat(t+1) = F zhat(t) + K^f(t) (y(t) - L zhat(t))`, all matrices indexed
/// by `eta(t+1)`.
///
/// Noise and innovation weights at step `t` use `Pr(eta(t+1) = i)`, the
/// probability of the mode that indexes the matrices of that step. The
/// optional `initial` replaces `S_i(0) = Pr(eta(0) = i) Sigma`.
pub fn solve_lmmse_with_initial(plant: &FilterPlant, initial: Option<&MatrixFamily>) -> Result<FilterSolution> {
    plant.check_dimensions()?;
    let horizon = plant.chain.horizon();
    let modes = plant.modes();
    let (n, s_dim) = (plant.state_dim(), plant.output_dim());
    let upsilon = plant.chain.eta_rows(horizon + 1);

    let s0 = match initial {
        Some(init) => {
            init.check_same(&MatrixFamily::zeros(modes, n, n), "initial filter second moment")?;
            init.clone()
        }
        None => MatrixFamily::repeat(modes, plant.sigma.clone()).scale_modes(&upsilon[0])?,
    };
    let mut s = vec![s0];
    let mut gains = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let ds = apply_d(&s[t], &plant.chain)?;
        let mut s_next = Vec::with_capacity(modes);
        let mut k_t = Vec::with_capacity(modes);
        for i in 0..modes {
            let w = upsilon[t + 1][i];
            if w == 0.0 {
                s_next.push(Mat::zeros(n, n));
                k_t.push(Mat::zeros(n, s_dim));
                continue;
            }
            let (f, g, l, h) = (&plant.f[i], &plant.g[i], &plant.l[i], &plant.h[i]);
            let ld = l * &ds[i];
            let innovation = &ld * l.transpose() + h * h.transpose() * w;
            // K = F D L' Inn^{-1}, solved as Inn K' = L D F'
            let ldf = &ld * f.transpose();
            let k_t_i = spd_solve(&innovation, &ldf)
                .map_err(|condition| Error::Singular {
                    what: "innovation covariance",
                    t,
                    mode: i + 1,
                    condition,
                })?
                .transpose();
            let mut s_i = g * g.transpose() * w + f * &ds[i] * f.transpose() - &k_t_i * &ldf;
            linalg::symmetrize_in_place(&mut s_i);
            s_next.push(s_i);
            k_t.push(k_t_i);
        }
        gains.push(MatrixFamily::new(k_t)?);
        if t < horizon {
            s.push(MatrixFamily::new(s_next)?);
        }
    }
    Ok(FilterSolution { s, gains })
}

/// Filter problem obtained by transposing the control data.
#[derive(Debug, Clone, PartialEq)]
pub struct DualProblem {
    pub filter: FilterPlant,
    /// `S_i(0) = Pr(eta(0) = i) E_i'E_i` when `E` differs across modes.
    pub initial_override: Option<MatrixFamily>,
    /// Assumption violations of the dual plant.
    pub violations: Vec<Violation>,
}

/// `F = A'`, `G = C'`, `L = B'`, `H = D'`, `Sigma = E'E`, same chain.
///
/// With mode-dependent `E`, `Sigma` is the mixture
/// `sum_i Pr(eta(0) = i) E_i'E_i` and the exact per-mode initial condition is
/// carried in `initial_override`.
pub fn dualize(plant: &ControlPlant) -> Result<DualProblem> {
    plant.check_dimensions()?;
    let ete = stage_weights(plant, None)?;
    let eta0 = plant.chain.initial_eta();
    let (sigma, initial_override) = if plant.terminal_weight_is_uniform() {
        (ete[0].clone(), None)
    } else {
        let scaled = ete.scale_modes(eta0)?;
        let mut mix = scaled.iter().fold(Mat::zeros(plant.state_dim(), plant.state_dim()), |acc, m| acc + m);
        linalg::symmetrize_in_place(&mut mix);
        (mix, Some(scaled))
    };
    let filter = FilterPlant::new(
        plant.a.transpose(),
        plant.c.transpose(),
        plant.b.transpose(),
        plant.d.transpose(),
        sigma,
        plant.chain.clone(),
    )?;
    let violations = validate_plant(&filter);
    Ok(DualProblem {
        filter,
        initial_override,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    /// `max_{t,i} ||P_i(t) - S_i(horizon - t)||_F`
    pub riccati_deviation: f64,
    /// `max_{t<horizon, i} ||M_i(t) - K^f_i(horizon - 1 - t)'||_F`
    pub gain_deviation: f64,
    pub riccati_scale: f64,
    pub gain_scale: f64,
    pub control: ControlSolution,
    pub filter: FilterSolution,
}

impl DualityReport {
    pub fn riccati_relative(&self) -> f64 {
        self.riccati_deviation / (1.0 + self.riccati_scale)
    }

    pub fn gain_relative(&self) -> f64 {
        self.gain_deviation / (1.0 + self.gain_scale)
    }

    pub fn verified(&self) -> bool {
        self.riccati_relative() <= DUALITY_TOL && self.gain_relative() <= DUALITY_TOL
    }
}

/// Solves the control problem and its transposed filter problem and
/// compares `P(t)` with `S(horizon - t)` and `M(t)` with
/// `K^f(horizon - 1 - t)'`. The last filter gain `K^f(horizon)` has no
/// control counterpart.
pub fn check_duality(plant: &ControlPlant) -> Result<DualityReport> {
    let own = validate_plant(plant);
    if !own.is_empty() {
        return Err(Error::Assumptions(own));
    }
    let dual = dualize(plant)?;
    if !dual.violations.is_empty() {
        return Err(Error::Assumptions(dual.violations));
    }
    let control = solve_trmjlq(plant)?;
    let filter = solve_lmmse_with_initial(&dual.filter, dual.initial_override.as_ref())?;
    let horizon = plant.chain.horizon();

    let mut riccati_deviation: f64 = 0.0;
    let mut riccati_scale: f64 = 0.0;
    for t in 0..=horizon {
        riccati_deviation = riccati_deviation.max(control.p[t].max_mode_distance(&filter.s[horizon - t])?);
        riccati_scale = riccati_scale.max(control.p[t].iter().map(|m| m.norm()).fold(0.0, f64::max));
    }
    let mut gain_deviation: f64 = 0.0;
    let mut gain_scale: f64 = 0.0;
    for t in 0..horizon {
        let m = &control.m[t];
        let kf = filter.gains[horizon - 1 - t].transpose();
        gain_deviation = gain_deviation.max(m.max_mode_distance(&kf)?);
        gain_scale = gain_scale.max(m.iter().map(|x| x.norm()).fold(0.0, f64::max));
    }
    Ok(DualityReport {
        riccati_deviation,
        gain_deviation,
        riccati_scale,
        gain_scale,
        control,
        filter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarkovSpec;
    use crate::moments::evaluate_cost;

    fn scalars(v: &[f64]) -> MatrixFamily {
        MatrixFamily::new(v.iter().map(|x| Mat::from_element(1, 1, *x)).collect()).unwrap()
    }

    fn cols(v: &[[f64; 2]]) -> MatrixFamily {
        MatrixFamily::new(v.iter().map(|x| Mat::from_column_slice(2, 1, x)).collect()).unwrap()
    }

    fn plant(a: &[f64], b: &[f64], p: &[f64], eta0: &[f64], horizon: usize) -> ControlPlant {
        let n = a.len();
        let chain = MarkovSpec::new(Mat::from_row_slice(n, n, p), eta0.to_vec(), horizon).unwrap();
        ControlPlant::new(
            scalars(a),
            scalars(b),
            cols(&vec![[1.0, 0.0]; n]),
            cols(&vec![[0.0, 0.5]; n]),
            scalars(&vec![1.5; n]),
            Mat::from_element(1, 1, 2.0),
            chain,
        )
        .unwrap()
    }

    #[test]
    fn scalar_single_mode_matches_hand_recursion() {
        let pl = plant(&[1.2], &[0.7], &[1.0], &[1.0], 4);
        let sol = solve_trmjlq(&pl).unwrap();
        let (a, b, q, r) = (1.2, 0.7, 1.0, 0.25);
        let mut p = 1.5f64 * 1.5;
        for t in (0..4).rev() {
            let m = b * p * a / (b * p * b + r);
            p = q + a * p * a - a * p * b * m;
            assert!((sol.m[t][0][(0, 0)] - m).abs() < 1e-12);
            assert!((sol.gains.at(t)[0][(0, 0)] + m).abs() < 1e-12);
            assert!((sol.p[t][0][(0, 0)] - p).abs() < 1e-12 * p);
        }
        assert!((sol.optimal_cost - 2.0 * p).abs() < 1e-12 * p);
    }

    #[test]
    fn no_control_authority_gives_lyapunov_recursion() {
        let pl = plant(&[0.8, 1.1], &[0.0, 0.0], &[0.9, 0.1, 0.2, 0.8], &[0.3, 0.7], 5);
        let sol = solve_trmjlq(&pl).unwrap();
        assert!(sol.gains.as_slice().iter().all(|k| k.max_abs() == 0.0));
        let zero = GainSchedule::zeros(2, 1, 1, 5);
        assert!(relative_gap(sol.optimal_cost, evaluate_cost(&pl, &zero).unwrap()) < 1e-12);
    }

    #[test]
    fn unreachable_modes_get_exact_zeros() {
        let pl = plant(&[0.8, 1.1], &[1.0, 0.4], &[0.0, 1.0, 1.0, 0.0], &[1.0, 0.0], 5);
        let sol = solve_trmjlq(&pl).unwrap();
        let pi = theta_distribution(&pl.chain);
        let mut zeros = 0;
        for t in 0..5 {
            for i in 0..2 {
                if pi.row(t)[i] == 0.0 {
                    zeros += 1;
                    assert_eq!(sol.p[t][i].amax(), 0.0);
                    assert_eq!(sol.gains.at(t)[i].amax(), 0.0);
                } else {
                    assert!(sol.p[t][i][(0, 0)] > 0.0);
                }
            }
        }
        assert_eq!(zeros, 5);
    }

    #[test]
    fn zero_horizon_cost_is_terminal() {
        let pl = plant(&[0.8, 1.1], &[1.0, 0.4], &[0.9, 0.1, 0.2, 0.8], &[0.3, 0.7], 0);
        let sol = solve_trmjlq(&pl).unwrap();
        assert!(sol.gains.is_empty());
        assert!((sol.optimal_cost - 2.25 * 2.0).abs() < 1e-14);
        assert!(verify_value_function(&pl, &sol, 1).unwrap().passed());
    }

    #[test]
    fn perturbations_never_win() {
        let pl = plant(&[0.8, 1.3], &[1.0, -0.4], &[0.7, 0.3, 0.4, 0.6], &[0.5, 0.5], 6);
        let sol = solve_trmjlq(&pl).unwrap();
        let check = verify_value_function(&pl, &sol, 7).unwrap();
        assert_eq!(check.perturbed_costs.len(), 20);
        assert!(check.passed(), "{check:?}");
    }

    #[test]
    fn completed_square_is_minimal() {
        let pl = plant(&[0.8, 1.3], &[1.0, -0.4], &[0.7, 0.3, 0.4, 0.6], &[0.5, 0.5], 3);
        let sol = solve_trmjlq(&pl).unwrap();
        let base = bellman_term(&pl, &sol, 1, 1, &sol.gains.at(1)[1]).unwrap()[(0, 0)];
        for k in [-2.0, -0.1, 0.0, 0.3, 5.0] {
            let v = bellman_term(&pl, &sol, 1, 1, &Mat::from_element(1, 1, k)).unwrap()[(0, 0)];
            assert!(v >= base - 1e-12);
        }
    }

    #[test]
    fn filter_without_noise_stays_zero() {
        let ch = MarkovSpec::new(Mat::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]), vec![0.4, 0.6], 4).unwrap();
        let fp = FilterPlant::new(
            scalars(&[0.9, 1.1]),
            MatrixFamily::zeros(2, 1, 2),
            scalars(&[1.0, 0.5]),
            MatrixFamily::new(vec![Mat::from_row_slice(1, 2, &[0.0, 1.0]); 2]).unwrap(),
            Mat::zeros(1, 1),
            ch,
        )
        .unwrap();
        let sol = solve_lmmse(&fp).unwrap();
        assert_eq!(sol.s.len(), 5);
        assert_eq!(sol.gains.len(), 5);
        assert!(sol.s.iter().all(|f| f.max_abs() == 0.0));
        assert!(sol.gains.iter().all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn dual_of_valid_plant_is_valid() {
        let pl = plant(&[0.8, 1.3], &[1.0, -0.4], &[0.7, 0.3, 0.4, 0.6], &[0.5, 0.5], 3);
        let dual = dualize(&pl).unwrap();
        assert!(dual.violations.is_empty(), "{:?}", dual.violations);
        assert!(dual.initial_override.is_none());
        assert_eq!(dual.filter.f, pl.a.transpose());
        assert_eq!(dual.filter.l, pl.b.transpose());
        assert_eq!(dual.filter.sigma, Mat::from_element(1, 1, 2.25));
    }

    #[test]
    fn duality_holds_with_mode_dependent_terminal_weight() {
        let mut pl = plant(&[0.8, 1.3], &[1.0, -0.4], &[0.0, 1.0, 1.0, 0.0], &[1.0, 0.0], 5);
        pl.e = scalars(&[1.0, 3.0]);
        let rep = check_duality(&pl).unwrap();
        assert!(rep.verified(), "{} {}", rep.riccati_deviation, rep.gain_deviation);
        assert!(dualize(&pl).unwrap().initial_override.is_some());
    }

    #[test]
    fn duality_rejects_invalid_plant() {
        let mut pl = plant(&[0.8], &[1.0], &[1.0], &[1.0], 2);
        pl.d = cols(&[[0.0, 0.0]]);
        assert!(matches!(check_duality(&pl), Err(Error::Assumptions(_))));
    }

    #[test]
    fn singular_weight_is_a_hard_error() {
        let mut pl = plant(&[0.8], &[1.0], &[1.0], &[1.0], 2);
        pl.d = cols(&[[0.0, 0.0]]);
        pl.e = scalars(&[0.0]);
        match solve_trmjlq(&pl) {
            Err(Error::Singular { t, mode, .. }) => {
                assert_eq!((t, mode), (1, 1));
            }
            other => panic!("{other:?}"),
        }
    }
}
