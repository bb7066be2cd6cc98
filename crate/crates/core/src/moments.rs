//! Second-moment recursions and the quadratic cost of a gain schedule.

use std::io::Write;

use crate::error::{Error, Result};
use crate::family::{Mat, MatrixFamily};
use crate::model::{theta_distribution, ControlPlant, MarkovSpec};
use crate::operators::apply_u;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// `E[x x' | theta(t) = i]`
    Conditioned,
    /// `E[x x' 1{theta(t) = i}]`
    Unconditioned,
}

/// Second moments for `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory {
    pub values: Vec<MatrixFamily>,
    pub kind: MomentKind,
}

impl MomentTrajectory {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn at(&self, t: usize) -> &MatrixFamily {
        &self.values[t]
    }

    /// One row per `(t, mode)`, matrix entries flattened row-major.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        crate::export::write_family_series_csv(w, &self.values, 0)
    }
}

/// Mode-dependent feedback gains `K(0), ..., K(horizon - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    gains: Vec<MatrixFamily>,
}

impl GainSchedule {
    pub fn new(gains: Vec<MatrixFamily>) -> Result<Self> {
        if let Some(first) = gains.first() {
            for (t, g) in gains.iter().enumerate() {
                first.check_same(g, "gain schedule").map_err(|_| {
                    Error::dims(
                        "gain schedule",
                        format!("{} modes of {:?}", first.modes(), first.shape()),
                        format!("{} modes of {:?} at t={t}", g.modes(), g.shape()),
                    )
                })?;
            }
        }
        Ok(Self { gains })
    }

    pub fn zeros(modes: usize, inputs: usize, states: usize, horizon: usize) -> Self {
        Self {
            gains: vec![MatrixFamily::zeros(modes, inputs, states); horizon],
        }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn at(&self, t: usize) -> &MatrixFamily {
        &self.gains[t]
    }

    pub fn as_slice(&self) -> &[MatrixFamily] {
        &self.gains
    }

    pub fn into_inner(self) -> Vec<MatrixFamily> {
        self.gains
    }

    /// Checks length and shape against a plant.
    pub fn check_for(&self, plant: &ControlPlant) -> Result<()> {
        let horizon = plant.chain.horizon();
        if self.gains.len() != horizon {
            return Err(Error::dims("gain schedule length", horizon, self.gains.len()));
        }
        let want = (plant.input_dim(), plant.state_dim());
        for (t, g) in self.gains.iter().enumerate() {
            if g.modes() != plant.modes() || g.shape() != want {
                return Err(Error::dims(
                    "gain schedule",
                    format!("{} modes of {}x{}", plant.modes(), want.0, want.1),
                    format!("{} modes of {:?} at t={t}", g.modes(), g.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// `A_i + B_i K_i(t)`.
pub fn closed_loop_matrices(plant: &ControlPlant, k: &MatrixFamily) -> Result<MatrixFamily> {
    plant.a.add(&plant.b.mul(k)?)
}

/// `X(0) = (Delta, ..., Delta)`, `X(t+1) = U_A(X(t))`.
pub fn open_loop_moments(plant: &ControlPlant) -> Result<MomentTrajectory> {
    plant.check_dimensions()?;
    let mut values = Vec::with_capacity(plant.chain.horizon() + 1);
    values.push(MatrixFamily::repeat(plant.modes(), plant.delta.clone()));
    for t in 0..plant.chain.horizon() {
        let mut next = apply_u(&plant.a, &values[t], &plant.chain)?;
        next.symmetrize();
        values.push(next);
    }
    Ok(MomentTrajectory {
        values,
        kind: MomentKind::Conditioned,
    })
}

/// Same recursion with `A` replaced by `A + B K(t)` at step `t`.
pub fn closed_loop_moments(plant: &ControlPlant, k: &GainSchedule) -> Result<MomentTrajectory> {
    plant.check_dimensions()?;
    k.check_for(plant)?;
    let mut values = Vec::with_capacity(plant.chain.horizon() + 1);
    values.push(MatrixFamily::repeat(plant.modes(), plant.delta.clone()));
    for t in 0..plant.chain.horizon() {
        let acl = closed_loop_matrices(plant, k.at(t))?;
        let mut next = apply_u(&acl, &values[t], &plant.chain)?;
        next.symmetrize();
        values.push(next);
    }
    Ok(MomentTrajectory {
        values,
        kind: MomentKind::Conditioned,
    })
}

/// Coefficient matrices `c(t)[i, j] = p_ij pi_i(t+1) / pi_j(t)` of the
/// unconditioned recursion, `t = 0..horizon`. Entries with `pi_j(t) = 0`
/// are set to zero, since the matching `W_j(t)` vanishes.
pub fn w_coefficients(chain: &MarkovSpec) -> Vec<Mat> {
    let pi = theta_distribution(chain);
    let n = chain.modes();
    (0..chain.horizon())
        .map(|t| {
            let (now, next) = (pi.row(t), pi.row(t + 1));
            Mat::from_fn(n, n, |i, j| {
                if now[j] == 0.0 || next[i] == 0.0 {
                    0.0
                } else {
                    chain.p(i, j) * next[i] / now[j]
                }
            })
        })
        .collect()
}

/// `W_i(0) = pi_i(0) Delta`, `W_i(t+1) = sum_j c(t)[i,j] A_j W_j(t) A_j'`,
/// with `A` closed by `K(t)` when gains are given.
pub fn w_moments(plant: &ControlPlant, k: Option<&GainSchedule>) -> Result<MomentTrajectory> {
    plant.check_dimensions()?;
    if let Some(k) = k {
        k.check_for(plant)?;
    }
    let pi = theta_distribution(&plant.chain);
    let coeffs = w_coefficients(&plant.chain);
    let n = plant.state_dim();
    let modes = plant.modes();
    let mut values = Vec::with_capacity(plant.chain.horizon() + 1);
    values.push(MatrixFamily::repeat(modes, plant.delta.clone()).scale_modes(pi.row(0))?);
    for (t, c) in coeffs.iter().enumerate() {
        let acl = match k {
            Some(k) => closed_loop_matrices(plant, k.at(t))?,
            None => plant.a.clone(),
        };
        let prev: &MatrixFamily = &values[t];
        let conj: Vec<Mat> = (0..modes).map(|j| &acl[j] * &prev[j] * acl[j].transpose()).collect();
        let mut next = MatrixFamily::from_fn(modes, |i| {
            let mut acc = Mat::zeros(n, n);
            for (j, cj) in conj.iter().enumerate() {
                if c[(i, j)] != 0.0 {
                    acc += cj * c[(i, j)];
                }
            }
            acc
        })?;
        next.symmetrize();
        values.push(next);
    }
    Ok(MomentTrajectory {
        values,
        kind: MomentKind::Unconditioned,
    })
}

/// Running-stage weight `C'C + K'D'DK` (or `E'E` at the terminal time).
pub fn stage_weights(plant: &ControlPlant, k: Option<&MatrixFamily>) -> Result<MatrixFamily> {
    match k {
        Some(k) => MatrixFamily::from_fn(plant.modes(), |i| {
            let dk = &plant.d[i] * &k[i];
            plant.c[i].transpose() * &plant.c[i] + dk.transpose() * dk
        }),
        None => MatrixFamily::from_fn(plant.modes(), |i| plant.e[i].transpose() * &plant.e[i]),
    }
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// `sum_t <pi(t) Q(t), X(t)>` along the closed-loop conditioned moments.
pub fn evaluate_cost(plant: &ControlPlant, k: &GainSchedule) -> Result<f64> {
    let moments = closed_loop_moments(plant, k)?;
    let pi = theta_distribution(&plant.chain);
    let horizon = plant.chain.horizon();
    let mut total = KahanSum::default();
    for t in 0..=horizon {
        let q = if t < horizon {
            stage_weights(plant, Some(k.at(t)))?
        } else {
            stage_weights(plant, None)?
        };
        total.add(q.scale_modes(pi.row(t))?.inner(moments.at(t))?);
    }
    Ok(total.value())
}
