//! Plants, the driving Markov chain and mode-distribution propagation.
//!
//! The chain `eta` runs forward over `0..=horizon`; the system is driven by
//! its time reversal `theta(t) = eta(horizon - t)`. Only the distribution of
//! `eta(0)` is an input, so `Pr(theta(t) = i)` is always derived.

use nalgebra::SVD;

use crate::error::{Error, Result, Violation};
use crate::family::{Mat, MatrixFamily};
use crate::linalg;

/// Tolerance on row sums and probability-vector sums of inputs.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Probabilities below this are stored as exact zeros.
pub const SNAP_ZERO: f64 = 1e-14;
/// Tolerance of the orthogonality assumptions `C'D = 0` and `G H' = 0`.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

fn snap(p: f64) -> f64 {
    if p.abs() < SNAP_ZERO {
        0.0
    } else {
        p
    }
}

fn probability_vector_violations(v: &[f64], what: &str, row: Option<usize>) -> Vec<Violation> {
    let mut out = Vec::new();
    let label = match row {
        Some(r) => format!("{what} row {}", r + 1),
        None => what.to_string(),
    };
    let push = |out: &mut Vec<Violation>, msg: String| {
        out.push(match row {
            Some(r) => Violation::at(r + 1, msg),
            None => Violation::global(msg),
        })
    };
    if let Some((j, x)) = v
        .iter()
        .enumerate()
        .find(|(_, x)| !x.is_finite() || **x < -STOCHASTIC_TOL || **x > 1.0 + STOCHASTIC_TOL)
    {
        push(&mut out, format!("{label} entry {} = {x} outside [0, 1]", j + 1));
    }
    let sum: f64 = v.iter().sum();
    // negated comparison also catches NaN entries
    if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
        push(&mut out, format!("{label} sums to {sum}, not 1"));
    }
    out
}

/// Clamps tiny negatives and snapped values to zero and rescales to unit sum.
fn normalized(v: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| snap(x.max(0.0))).collect();
    let sum: f64 = clipped.iter().sum();
    clipped.into_iter().map(|x| x / sum).collect()
}

/// Transition matrix of `eta`, distribution of `eta(0)` and the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSpec {
    transition: Mat,
    initial_eta: Vec<f64>,
    horizon: usize,
}

impl MarkovSpec {
    /// Validates and renormalizes. Inputs off by more than
    /// [`STOCHASTIC_TOL`] are rejected.
    pub fn new(transition: Mat, initial_eta: Vec<f64>, horizon: usize) -> Result<Self> {
        let raw = Self::new_unchecked(transition, initial_eta, horizon);
        let violations = raw.validate();
        if !violations.is_empty() {
            return Err(Error::Assumptions(violations));
        }
        let n = raw.modes();
        let mut transition = raw.transition;
        for i in 0..n {
            let row: Vec<f64> = transition.row(i).iter().copied().collect();
            for (j, p) in normalized(&row).into_iter().enumerate() {
                transition[(i, j)] = p;
            }
        }
        Ok(Self {
            transition,
            initial_eta: normalized(&raw.initial_eta),
            horizon,
        })
    }

    /// Stores the inputs verbatim; [`MarkovSpec::validate`] reports problems.
    pub fn new_unchecked(transition: Mat, initial_eta: Vec<f64>, horizon: usize) -> Self {
        Self {
            transition,
            initial_eta,
            horizon,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let n = self.transition.nrows();
        let mut out = Vec::new();
        if n == 0 || !self.transition.is_square() {
            out.push(Violation::global(format!(
                "transition matrix must be square and non-empty, got {}x{}",
                self.transition.nrows(),
                self.transition.ncols()
            )));
            return out;
        }
        for i in 0..n {
            let row: Vec<f64> = self.transition.row(i).iter().copied().collect();
            out.extend(probability_vector_violations(&row, "transition", Some(i)));
        }
        if self.initial_eta.len() != n {
            out.push(Violation::global(format!(
                "initial_eta has {} entries for {n} modes",
                self.initial_eta.len()
            )));
        } else {
            out.extend(probability_vector_violations(&self.initial_eta, "initial_eta", None));
        }
        out
    }

    pub fn modes(&self) -> usize {
        self.transition.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition(&self) -> &Mat {
        &self.transition
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.transition[(i, j)]
    }

    pub fn initial_eta(&self) -> &[f64] {
        &self.initial_eta
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn with_initial(&self, initial_eta: Vec<f64>) -> Result<Self> {
        Self::new(self.transition.clone(), initial_eta, self.horizon)
    }

    /// `Pr(eta(t) = .)` for `t = 0..=steps`, independent of the horizon.
    pub fn eta_rows(&self, steps: usize) -> Vec<Vec<f64>> {
        let n = self.modes();
        let mut rows = Vec::with_capacity(steps + 1);
        rows.push(self.initial_eta.iter().map(|&x| snap(x)).collect::<Vec<_>>());
        for t in 0..steps {
            let prev: &Vec<f64> = &rows[t];
            let mut next = vec![0.0; n];
            for (i, &pi) in prev.iter().enumerate() {
                if pi == 0.0 {
                    continue;
                }
                for (j, nj) in next.iter_mut().enumerate() {
                    *nj += pi * self.transition[(i, j)];
                }
            }
            rows.push(normalized(&next));
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Row `t` is the distribution of `eta(t)`.
    ForwardEta,
    /// Row `t` is the distribution of `theta(t) = eta(horizon - t)`.
    ReversedTheta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    rows: Vec<Vec<f64>>,
    orientation: Orientation,
}

impl DistributionTable {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }
}

/// Rows `initial_eta * P^t` for `t = 0..=horizon`.
pub fn propagate_eta(chain: &MarkovSpec) -> DistributionTable {
    DistributionTable {
        rows: chain.eta_rows(chain.horizon()),
        orientation: Orientation::ForwardEta,
    }
}

/// `pi(t) = upsilon(horizon - t)`.
pub fn theta_distribution(chain: &MarkovSpec) -> DistributionTable {
    let mut rows = chain.eta_rows(chain.horizon());
    rows.reverse();
    DistributionTable {
        rows,
        orientation: Orientation::ReversedTheta,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reversibility {
    Reversible { stationary: Vec<f64> },
    NotReversible { stationary: Vec<f64> },
    /// The eigenvalue-1 eigenspace has the given dimension (> 1).
    Indeterminate { dimension: usize },
}

impl Reversibility {
    pub fn is_reversible(&self) -> Option<bool> {
        match self {
            Reversibility::Reversible { .. } => Some(true),
            Reversibility::NotReversible { .. } => Some(false),
            Reversibility::Indeterminate { .. } => None,
        }
    }

    pub fn stationary(&self) -> Option<&[f64]> {
        match self {
            Reversibility::Reversible { stationary } | Reversibility::NotReversible { stationary } => {
                Some(stationary)
            }
            Reversibility::Indeterminate { .. } => None,
        }
    }
}

/// Stationary vector from the kernel of `P' - I`, then detailed balance
/// `pi_i p_ij = pi_j p_ji` checked within `tol`.
pub fn is_reversible(chain: &MarkovSpec, tol: f64) -> Reversibility {
    let n = chain.modes();
    let m = chain.transition().transpose() - Mat::identity(n, n);
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let kernel_tol = 1e-10 * n as f64;
    let kernel: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= kernel_tol)
        .map(|(k, _)| k)
        .collect();
    if kernel.len() != 1 {
        return Reversibility::Indeterminate {
            dimension: kernel.len(),
        };
    }
    let v = v_t.row(kernel[0]);
    let sum: f64 = v.iter().sum();
    let stationary: Vec<f64> = v.iter().map(|x| snap((x / sum).max(0.0))).collect();
    let balanced = (0..n).all(|i| {
        (0..n).all(|j| (stationary[i] * chain.p(i, j) - stationary[j] * chain.p(j, i)).abs() <= tol)
    });
    if balanced {
        Reversibility::Reversible { stationary }
    } else {
        Reversibility::NotReversible { stationary }
    }
}

/// Standing assumptions of a plant.
pub trait Plant {
    fn validate(&self) -> Vec<Violation>;
    fn chain(&self) -> &MarkovSpec;
}

/// Returns one entry per violated invariant; empty when the plant is valid.
pub fn validate_plant<P: Plant + ?Sized>(plant: &P) -> Vec<Violation> {
    plant.validate()
}

fn family_modes(out: &mut Vec<Violation>, name: &str, f: &MatrixFamily, modes: usize) {
    if f.modes() != modes {
        out.push(Violation::global(format!(
            "{name} has {} modes, chain has {modes}",
            f.modes()
        )));
    }
}

fn shape_violation(out: &mut Vec<Violation>, name: &str, f: &MatrixFamily, rows: usize, cols: usize) {
    if f.shape() != (rows, cols) {
        let (r, c) = f.shape();
        out.push(Violation::global(format!(
            "{name} is {r}x{c}, expected {rows}x{cols}"
        )));
    }
}

fn psd_violation(out: &mut Vec<Violation>, name: &str, m: &Mat) {
    let tol = STOCHASTIC_TOL * (1.0 + m.amax());
    if !linalg::is_psd(m, tol) {
        out.push(Violation::global(format!("{name} not symmetric PSD")));
    }
}

/// Data of the reversed-chain control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlant {
    pub a: MatrixFamily,
    pub b: MatrixFamily,
    pub c: MatrixFamily,
    pub d: MatrixFamily,
    pub e: MatrixFamily,
    pub delta: Mat,
    pub chain: MarkovSpec,
}

impl ControlPlant {
    /// Checks dimensions only; the orthogonality and positivity
    /// assumptions are reported by [`validate_plant`].
    pub fn new(
        a: MatrixFamily,
        b: MatrixFamily,
        c: MatrixFamily,
        d: MatrixFamily,
        e: MatrixFamily,
        delta: Mat,
        chain: MarkovSpec,
    ) -> Result<Self> {
        let plant = Self { a, b, c, d, e, delta, chain };
        plant.check_dimensions()?;
        Ok(plant)
    }

    pub fn state_dim(&self) -> usize {
        self.a.shape().0
    }

    pub fn input_dim(&self) -> usize {
        self.b.shape().1
    }

    pub fn output_dim(&self) -> usize {
        self.c.shape().0
    }

    pub fn modes(&self) -> usize {
        self.chain.modes()
    }

    fn structural(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n_modes = self.chain.modes();
        let (n, m, s) = (self.a.shape().0, self.b.shape().1, self.c.shape().0);
        for (name, f) in [("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d), ("E", &self.e)] {
            family_modes(&mut out, name, f, n_modes);
        }
        shape_violation(&mut out, "A", &self.a, n, n);
        shape_violation(&mut out, "B", &self.b, n, m);
        shape_violation(&mut out, "C", &self.c, s, n);
        shape_violation(&mut out, "D", &self.d, s, m);
        shape_violation(&mut out, "E", &self.e, n, n);
        if self.delta.shape() != (n, n) {
            out.push(Violation::global(format!(
                "Delta is {}x{}, expected {n}x{n}",
                self.delta.nrows(),
                self.delta.ncols()
            )));
        }
        out
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let v = self.structural();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Assumptions(v))
        }
    }

    /// `E_i = E_1` for every mode.
    pub fn terminal_weight_is_uniform(&self) -> bool {
        self.e.iter().all(|e| e == &self.e[0])
    }
}

impl Plant for ControlPlant {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.chain.validate();
        let structural = self.structural();
        if !structural.is_empty() {
            out.extend(structural);
            return out;
        }
        for i in 0..self.a.modes() {
            let cd = self.c[i].transpose() * &self.d[i];
            if cd.amax() > ORTHOGONALITY_TOL {
                out.push(Violation::at(
                    i + 1,
                    format!("C'D not zero at mode {} (max |entry| {:.3e})", i + 1, cd.amax()),
                ));
            }
            let dd = self.d[i].transpose() * &self.d[i];
            if !linalg::is_pd(&dd, ORTHOGONALITY_TOL * (1.0 + dd.amax())) {
                out.push(Violation::at(i + 1, format!("D'D not positive definite at mode {}", i + 1)));
            }
        }
        psd_violation(&mut out, "Delta", &self.delta);
        out
    }

    fn chain(&self) -> &MarkovSpec {
        &self.chain
    }
}

/// Data of the standard jump-linear filtering problem.
///
/// The noise cross-covariance assumption is `G_i H_i' = 0`, the transpose
/// image of `C_i' D_i = 0` on the control side.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPlant {
    pub f: MatrixFamily,
    pub g: MatrixFamily,
    pub l: MatrixFamily,
    pub h: MatrixFamily,
    pub sigma: Mat,
    pub chain: MarkovSpec,
}

impl FilterPlant {
    pub fn new(
        f: MatrixFamily,
        g: MatrixFamily,
        l: MatrixFamily,
        h: MatrixFamily,
        sigma: Mat,
        chain: MarkovSpec,
    ) -> Result<Self> {
        let plant = Self { f, g, l, h, sigma, chain };
        plant.check_dimensions()?;
        Ok(plant)
    }

    pub fn state_dim(&self) -> usize {
        self.f.shape().0
    }

    pub fn noise_dim(&self) -> usize {
        self.g.shape().1
    }

    pub fn output_dim(&self) -> usize {
        self.l.shape().0
    }

    pub fn modes(&self) -> usize {
        self.chain.modes()
    }

    fn structural(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n_modes = self.chain.modes();
        let (n, q, s) = (self.f.shape().0, self.g.shape().1, self.l.shape().0);
        for (name, fam) in [("F", &self.f), ("G", &self.g), ("L", &self.l), ("H", &self.h)] {
            family_modes(&mut out, name, fam, n_modes);
        }
        shape_violation(&mut out, "F", &self.f, n, n);
        shape_violation(&mut out, "G", &self.g, n, q);
        shape_violation(&mut out, "L", &self.l, s, n);
        shape_violation(&mut out, "H", &self.h, s, q);
        if self.sigma.shape() != (n, n) {
            out.push(Violation::global(format!(
                "Sigma is {}x{}, expected {n}x{n}",
                self.sigma.nrows(),
                self.sigma.ncols()
            )));
        }
        out
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let v = self.structural();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Assumptions(v))
        }
    }
}

impl Plant for FilterPlant {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.chain.validate();
        let structural = self.structural();
        if !structural.is_empty() {
            out.extend(structural);
            return out;
        }
        for i in 0..self.f.modes() {
            let gh = &self.g[i] * self.h[i].transpose();
            if gh.amax() > ORTHOGONALITY_TOL {
                out.push(Violation::at(
                    i + 1,
                    format!("GH' not zero at mode {} (max |entry| {:.3e})", i + 1, gh.amax()),
                ));
            }
            let hh = &self.h[i] * self.h[i].transpose();
            if !linalg::is_pd(&hh, ORTHOGONALITY_TOL * (1.0 + hh.amax())) {
                out.push(Violation::at(i + 1, format!("HH' not positive definite at mode {}", i + 1)));
            }
        }
        psd_violation(&mut out, "Sigma", &self.sigma);
        out
    }

    fn chain(&self) -> &MarkovSpec {
        &self.chain
    }
}
