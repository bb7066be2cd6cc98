//! The mode-coupling operators and the mean-square stability test.
//!
//! For a chain with transition matrix `P = [p_ij]`:
//!
//! * `U_Z(Y)_i = sum_j p_ij Z_j Y_j Z_j'` propagates conditioned second moments,
//! * `D(Y)_i   = sum_j p_ji Y_j` mixes along column `i` of `P`,
//! * `V_Z(Y)_i = Z_i' D(Y)_i Z_i` is the adjoint of `U_Z` under `<.,.>`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::family::{Mat, MatrixFamily};
use crate::model::MarkovSpec;

/// Above this many unknowns (`N n^2`) the spectral radius comes from power
/// iteration rather than a dense eigendecomposition.
pub const DENSE_LIMIT: usize = 400;
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;
/// `rho < 1 - STABILITY_MARGIN` is required for mean-square stability.
pub const STABILITY_MARGIN: f64 = 1e-12;

fn check_square_pair(z: &MatrixFamily, y: &MatrixFamily, chain: &MarkovSpec) -> Result<()> {
    z.check_modes(chain.modes(), "operator argument Z")?;
    y.check_modes(chain.modes(), "operator argument Y")?;
    if !y.is_square() {
        let (r, c) = y.shape();
        return Err(Error::dims("operator argument Y", "square", format!("{r}x{c}")));
    }
    if z.shape().1 != y.shape().0 {
        return Err(Error::dims("operator argument Z", format!("{} columns", y.shape().0), z.shape().1));
    }
    Ok(())
}

/// `result_i = sum_j p_ij Z_j Y_j Z_j'`.
pub fn apply_u(z: &MatrixFamily, y: &MatrixFamily, chain: &MarkovSpec) -> Result<MatrixFamily> {
    check_square_pair(z, y, chain)?;
    let conj: Vec<Mat> = z.iter().zip(y).map(|(zj, yj)| zj * yj * zj.transpose()).collect();
    let k = z.shape().0;
    MatrixFamily::from_fn(chain.modes(), |i| {
        let mut acc = Mat::zeros(k, k);
        for (j, cj) in conj.iter().enumerate() {
            let p = chain.p(i, j);
            if p != 0.0 {
                acc += cj * p;
            }
        }
        acc
    })
}

/// `result_i = sum_j p_ji Y_j`.
pub fn apply_d(y: &MatrixFamily, chain: &MarkovSpec) -> Result<MatrixFamily> {
    y.check_modes(chain.modes(), "operator D")?;
    let (r, c) = y.shape();
    MatrixFamily::from_fn(chain.modes(), |i| mix_column(y, chain, i, r, c))
}

/// `D_i(Y)` alone.
pub(crate) fn mix_column(y: &MatrixFamily, chain: &MarkovSpec, i: usize, r: usize, c: usize) -> Mat {
    let mut acc = Mat::zeros(r, c);
    for (j, yj) in y.iter().enumerate() {
        let p = chain.p(j, i);
        if p != 0.0 {
            acc += yj * p;
        }
    }
    acc
}

/// `result_i = Z_i' D_i(Y) Z_i`.
pub fn apply_v(z: &MatrixFamily, y: &MatrixFamily, chain: &MarkovSpec) -> Result<MatrixFamily> {
    z.check_modes(chain.modes(), "operator argument Z")?;
    y.check_modes(chain.modes(), "operator argument Y")?;
    if !y.is_square() || z.shape().0 != y.shape().0 {
        return Err(Error::dims(
            "operator V",
            format!("Y square with {} rows", z.shape().0),
            format!("{}x{}", y.shape().0, y.shape().1),
        ));
    }
    let d = apply_d(y, chain)?;
    MatrixFamily::from_fn(chain.modes(), |i| z[i].transpose() * &d[i] * &z[i])
}

pub fn inner_product(y: &MatrixFamily, z: &MatrixFamily) -> Result<f64> {
    y.inner(z)
}

/// Dense matrix of `U_A` acting on column-stacked families.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub dense: Mat,
    /// (modes, state dimension)
    pub block_dims: (usize, usize),
}

/// Block `(i, j)` is `p_ij (A_j kron A_j)`.
pub fn build_u_matrix(a: &MatrixFamily, chain: &MarkovSpec) -> Result<OperatorMatrix> {
    a.check_modes(chain.modes(), "operator matrix")?;
    if !a.is_square() {
        return Err(Error::dims("operator matrix", "square A", format!("{:?}", a.shape())));
    }
    let modes = chain.modes();
    let n = a.shape().0;
    let b = n * n;
    let kron: Vec<Mat> = a.iter().map(|aj| aj.kronecker(aj)).collect();
    let mut dense = Mat::zeros(modes * b, modes * b);
    for i in 0..modes {
        for (j, kj) in kron.iter().enumerate() {
            let p = chain.p(i, j);
            if p != 0.0 {
                dense.view_mut((i * b, j * b), (b, b)).copy_from(&(kj * p));
            }
        }
    }
    Ok(OperatorMatrix {
        dense,
        block_dims: (modes, n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusMethod {
    DenseEigen,
    PowerIteration,
}

impl std::fmt::Display for RadiusMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RadiusMethod::DenseEigen => "dense eigendecomposition",
            RadiusMethod::PowerIteration => "power iteration",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    pub value: f64,
    pub method: RadiusMethod,
    /// False only when power iteration hit its iteration cap; `value` is then
    /// the best available estimate.
    pub converged: bool,
    pub iterations: usize,
}

pub fn spectral_radius(op: &OperatorMatrix) -> SpectralRadius {
    let (modes, n) = op.block_dims;
    if modes * n * n <= DENSE_LIMIT {
        dense_radius(&op.dense)
    } else {
        let seed = MatrixFamily::identity(modes, n).vectorize();
        power_iteration(seed, |x| &op.dense * x)
    }
}

fn dense_radius(m: &Mat) -> SpectralRadius {
    let value = if m.nrows() == 0 {
        0.0
    } else {
        m.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    };
    SpectralRadius {
        value,
        method: RadiusMethod::DenseEigen,
        converged: true,
        iterations: 0,
    }
}

/// Normalized power iteration from `seed`. When the norm ratio fails to
/// settle (peripheral eigenvalues of equal modulus), the estimate falls back
/// to the geometric mean growth over the second half of the run.
fn power_iteration(seed: DVector<f64>, mut apply: impl FnMut(&DVector<f64>) -> DVector<f64>) -> SpectralRadius {
    let mut x = seed;
    let norm = x.norm();
    if norm == 0.0 {
        return SpectralRadius {
            value: 0.0,
            method: RadiusMethod::PowerIteration,
            converged: true,
            iterations: 0,
        };
    }
    x /= norm;
    let mut prev = f64::NAN;
    let mut log_sum = 0.0;
    let mut log_count = 0usize;
    for k in 1..=POWER_MAX_ITER {
        let y = apply(&x);
        let ratio = y.norm();
        if ratio == 0.0 {
            return SpectralRadius {
                value: 0.0,
                method: RadiusMethod::PowerIteration,
                converged: true,
                iterations: k,
            };
        }
        if (ratio - prev).abs() <= POWER_TOL * ratio {
            return SpectralRadius {
                value: ratio,
                method: RadiusMethod::PowerIteration,
                converged: true,
                iterations: k,
            };
        }
        if k > POWER_MAX_ITER / 2 {
            log_sum += ratio.ln();
            log_count += 1;
        }
        prev = ratio;
        x = y / ratio;
    }
    SpectralRadius {
        value: (log_sum / log_count as f64).exp(),
        method: RadiusMethod::PowerIteration,
        converged: false,
        iterations: POWER_MAX_ITER,
    }
}

/// Power iteration applying `U_A` mode-wise, without the dense matrix.
pub fn spectral_radius_matrix_free(a: &MatrixFamily, chain: &MarkovSpec) -> Result<SpectralRadius> {
    let modes = chain.modes();
    let n = a.shape().0;
    let seed = MatrixFamily::identity(modes, n);
    apply_u(a, &seed, chain)?;
    Ok(power_iteration(seed.vectorize(), |v| {
        let y = MatrixFamily::from_vector(v, modes, n, n).expect("shape fixed above");
        apply_u(a, &y, chain).expect("shape fixed above").vectorize()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub radius: SpectralRadius,
}

/// Mean-square stable iff the spectral radius of `U_A` is below one.
pub fn is_ms_stable(a: &MatrixFamily, chain: &MarkovSpec) -> Result<StabilityVerdict> {
    let n = a.shape().0;
    let radius = if chain.modes() * n * n <= DENSE_LIMIT {
        spectral_radius(&build_u_matrix(a, chain)?)
    } else {
        spectral_radius_matrix_free(a, chain)?
    };
    Ok(StabilityVerdict {
        stable: radius.value < 1.0 - STABILITY_MARGIN,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(v: &[f64]) -> MatrixFamily {
        MatrixFamily::new(v.iter().map(|x| Mat::from_element(1, 1, *x)).collect()).unwrap()
    }

    fn chain(p: &[f64], horizon: usize) -> MarkovSpec {
        let n = (p.len() as f64).sqrt() as usize;
        let mut eta0 = vec![0.0; n];
        eta0[0] = 1.0;
        MarkovSpec::new(Mat::from_row_slice(n, n, p), eta0, horizon).unwrap()
    }

    #[test]
    fn u_examples() {
        let one = chain(&[1.0], 1);
        let z = MatrixFamily::new(vec![Mat::from_row_slice(2, 2, &[1., 2., 0., 1.])]).unwrap();
        let y = MatrixFamily::new(vec![Mat::from_row_slice(2, 2, &[2., 1., 1., 3.])]).unwrap();
        let r = apply_u(&z, &y, &one).unwrap();
        assert_eq!(r[0], &z[0] * &y[0] * z[0].transpose());

        let half = chain(&[0.5, 0.5, 0.5, 0.5], 1);
        let r = apply_u(&scalars(&[2., 3.]), &scalars(&[1., 1.]), &half).unwrap();
        assert_eq!(r[0][(0, 0)], 6.5);
        assert_eq!(r[1][(0, 0)], 6.5);

        let ch = chain(&[0.9, 0.1, 0.2, 0.8], 1);
        let r = apply_u(&scalars(&[1., 1.]), &scalars(&[1., 2.]), &ch).unwrap();
        assert!((r[0][(0, 0)] - 1.1).abs() < 1e-15);
        assert!((r[1][(0, 0)] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn d_examples() {
        let ch = chain(&[0.9, 0.1, 0.2, 0.8], 1);
        let r = apply_d(&scalars(&[1., 2.]), &ch).unwrap();
        assert!((r[0][(0, 0)] - 1.3).abs() < 1e-15);
        assert!((r[1][(0, 0)] - 1.7).abs() < 1e-15);

        let swap = chain(&[0., 1., 1., 0.], 1);
        let r = apply_d(&scalars(&[5., 7.]), &swap).unwrap();
        assert_eq!(r, scalars(&[7., 5.]));

        let ds = chain(&[0.3, 0.7, 0.7, 0.3], 1);
        let r = apply_d(&scalars(&[4., 4.]), &ds).unwrap();
        assert!(r.iter().all(|m| (m[(0, 0)] - 4.0).abs() < 1e-15));
    }

    #[test]
    fn v_with_identity_is_d() {
        let ch = chain(&[0.9, 0.1, 0.2, 0.8], 1);
        let y = scalars(&[1., 2.]);
        assert_eq!(apply_v(&scalars(&[1., 1.]), &y, &ch).unwrap(), apply_d(&y, &ch).unwrap());
        let one = chain(&[1.0], 1);
        let r = apply_v(&scalars(&[3.]), &scalars(&[2.]), &one).unwrap();
        assert_eq!(r[0][(0, 0)], 18.0);
    }

    #[test]
    fn scalar_adjointness() {
        let ch = chain(&[0.5, 0.5, 0.5, 0.5], 1);
        let z = scalars(&[2., 3.]);
        let x = scalars(&[1.5, -0.5]);
        let y = scalars(&[0.25, 4.0]);
        let lhs = y.inner(&apply_u(&z, &x, &ch).unwrap()).unwrap();
        let rhs = apply_v(&z, &y, &ch).unwrap().inner(&x).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ch = chain(&[1.0], 1);
        let z = MatrixFamily::identity(1, 2);
        let y = MatrixFamily::identity(1, 3);
        assert!(matches!(apply_u(&z, &y, &ch), Err(Error::DimensionMismatch { .. })));
        let two = chain(&[0.5, 0.5, 0.5, 0.5], 1);
        assert!(apply_d(&z, &two).is_err());
    }

    #[test]
    fn radius_examples() {
        let one = chain(&[1.0], 1);
        let r = spectral_radius(&build_u_matrix(&scalars(&[0.5]), &one).unwrap());
        assert!((r.value - 0.25).abs() < 1e-15);
        assert_eq!(r.method, RadiusMethod::DenseEigen);

        let ch = chain(&[0.9, 0.1, 0.2, 0.8], 1);
        let r = spectral_radius(&build_u_matrix(&MatrixFamily::identity(2, 2), &ch).unwrap());
        assert!((r.value - 1.0).abs() < 1e-12);

        let half = chain(&[0.5, 0.5, 0.5, 0.5], 1);
        let op = build_u_matrix(&scalars(&[0.9, 1.2]), &half).unwrap();
        let expected = Mat::from_row_slice(2, 2, &[0.405, 0.72, 0.405, 0.72]);
        assert!((&op.dense - expected).amax() < 1e-15);
        assert!((spectral_radius(&op).value - 1.125).abs() < 1e-12);

        let zero = build_u_matrix(&MatrixFamily::zeros(2, 2, 2), &half).unwrap();
        assert_eq!(zero.dense.amax(), 0.0);
    }

    #[test]
    fn stability_examples() {
        let v = is_ms_stable(&scalars(&[0.5]), &chain(&[1.0], 1)).unwrap();
        assert!(v.stable);
        assert!((v.radius.value - 0.25).abs() < 1e-15);

        let id = chain(&[1., 0., 0., 1.], 1);
        let a = MatrixFamily::new(vec![Mat::identity(2, 2) * 0.5, Mat::identity(2, 2) * 2.0]).unwrap();
        assert!(!is_ms_stable(&a, &id).unwrap().stable);

        let half = chain(&[0.5, 0.5, 0.5, 0.5], 1);
        assert!(!is_ms_stable(&scalars(&[0.9, 1.2]), &half).unwrap().stable);
    }

    #[test]
    fn power_iteration_matches_dense() {
        let ch = chain(&[0.2, 0.8, 0.0, 0.1, 0.3, 0.6, 0.5, 0.0, 0.5], 1);
        let a = MatrixFamily::new(vec![
            Mat::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.7]),
            Mat::from_row_slice(2, 2, &[0.9, 0.0, 0.4, 0.2]),
            Mat::from_row_slice(2, 2, &[-0.3, 0.6, 0.1, 0.8]),
        ])
        .unwrap();
        let dense = spectral_radius(&build_u_matrix(&a, &ch).unwrap());
        let free = spectral_radius_matrix_free(&a, &ch).unwrap();
        assert!(free.converged);
        assert_eq!(free.method, RadiusMethod::PowerIteration);
        assert!((dense.value - free.value).abs() < 1e-8 * dense.value);
    }

    #[test]
    fn large_operator_uses_power_iteration() {
        // N n^2 = 2 * 16^2 = 512 > DENSE_LIMIT
        let ch = chain(&[0.6, 0.4, 0.3, 0.7], 1);
        let a = MatrixFamily::new(vec![Mat::identity(16, 16) * 0.5, Mat::identity(16, 16) * 0.8]).unwrap();
        let op = build_u_matrix(&a, &ch).unwrap();
        let r = spectral_radius(&op);
        assert_eq!(r.method, RadiusMethod::PowerIteration);
        // scalar-multiple-of-identity family: reduces to the 2x2 weighted matrix
        let small = spectral_radius(&build_u_matrix(&scalars(&[0.5, 0.8]), &ch).unwrap());
        assert!((r.value - small.value).abs() < 1e-8);
        let v = is_ms_stable(&a, &ch).unwrap();
        assert!(v.stable);
        assert_eq!(v.radius.method, RadiusMethod::PowerIteration);
    }
}
