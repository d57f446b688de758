//! Exact transition and resolvent computations for finite-state models:
//! the semigroup p_t, the 1-resolvent U^1 = (I - G)^{-1}, and the stationary
//! measure. These are the inputs the splitting construction consumes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::models::CtmcModel;

/// Matrix exponential by scaling-and-squaring with a fixed-order [6/6] Pade
/// approximant. Accurate to ~1e-14 relative for the small dense generators
/// used here.
pub fn matrix_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix_exp needs a square matrix");
    // 1-norm (max column sum).
    let mut norm: f64 = 0.0;
    for j in 0..n {
        let col_sum: f64 = (0..n).map(|i| a[(i, j)].abs()).sum();
        norm = norm.max(col_sum);
    }
    let theta = 0.25;
    let s = if norm > theta {
        ((norm / theta).log2().ceil() as i32).max(0)
    } else {
        0
    };
    let b = a / 2f64.powi(s);

    // [6/6] Pade coefficients c_j = (12-j)! 6! / (12! j! (6-j)!).
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let id = DMatrix::<f64>::identity(n, n);
    let b2 = &b * &b;
    let b4 = &b2 * &b2;
    let u = &b * (&id * C[1] + &b2 * C[3] + &b4 * C[5]);
    let v = &id * C[0] + &b2 * C[2] + &b4 * C[4] + &b4 * &b2 * C[6];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for scaled generators");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Transition matrix P_t = exp(t G); rows sum to one.
pub fn transition_matrix(model: &CtmcModel, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidQuery(format!("time {t} must be >= 0")));
    }
    if t == 0.0 {
        let n = model.n_states();
        return Ok(DMatrix::identity(n, n));
    }
    Ok(matrix_exp(&(model.generator() * t)))
}

/// The 1-resolvent U^1(x, {y}) of the skeleton chain sampled at unit-rate
/// exponential times; with the counting reference measure the kernel and its
/// density u^1(x, y) coincide.
#[derive(Debug, Clone)]
pub struct ResolventKernel {
    u1: DMatrix<f64>,
    model_hash: String,
}

impl ResolventKernel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u1
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.u1[(x, y)]
    }

    pub fn row(&self, x: usize) -> Vec<f64> {
        (0..self.u1.ncols()).map(|y| self.u1[(x, y)]).collect()
    }

    pub fn n_states(&self) -> usize {
        self.u1.nrows()
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }
}

/// Compute U^1 = (I - G)^{-1} by a direct linear solve and verify it is a
/// strictly positive stochastic matrix.
pub fn resolvent_kernel(model: &CtmcModel) -> Result<ResolventKernel> {
    let n = model.n_states();
    let m = DMatrix::identity(n, n) - model.generator();
    let u1 = m
        .lu()
        .solve(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numeric("(I - G) is singular".into()))?;
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = u1[(i, j)];
            if v <= 0.0 {
                return Err(Error::Numeric(format!(
                    "resolvent entry ({i},{j}) = {v} not positive; chain should be irreducible"
                )));
            }
            row_sum += v;
        }
        if (row_sum - 1.0).abs() > 1e-10 {
            return Err(Error::Numeric(format!(
                "resolvent row {i} sums to {row_sum}"
            )));
        }
    }
    Ok(ResolventKernel {
        u1,
        model_hash: model.content_hash(),
    })
}

/// How a stationary measure is normalized.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Normalization {
    /// Total mass one.
    Probability,
    /// Total mass m = E(R_2 - R_1); the measure matching the cycle formula
    /// mu(f) = E integral over one life cycle of f.
    Cycle { total_mass: f64 },
}

#[derive(Debug, Clone)]
pub struct StationaryMeasure {
    weights: Vec<f64>,
    normalization: Normalization,
}

impl StationaryMeasure {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Integral of a per-state table against the measure.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Rescale to total mass `m`, the cycle normalization.
    pub fn cycle_normalized(&self, total_mass: f64) -> StationaryMeasure {
        let sum: f64 = self.weights.iter().sum();
        StationaryMeasure {
            weights: self.weights.iter().map(|w| w / sum * total_mass).collect(),
            normalization: Normalization::Cycle { total_mass },
        }
    }
}

/// Probability-normalized left null vector of the generator.
pub fn stationary_measure(model: &CtmcModel) -> Result<StationaryMeasure> {
    let n = model.n_states();
    // Solve mu G = 0 with the normalization row sum(mu) = 1: replace the
    // first column of G^T by ones.
    let mut a = model.generator().transpose();
    for j in 0..n {
        a[(0, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[0] = 1.0;
    let w = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("stationary system is singular".into()))?;
    let mut weights: Vec<f64> = w.iter().copied().collect();
    for v in &mut weights {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::Numeric(format!("negative stationary weight {v}")));
            }
            *v = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    for v in &mut weights {
        *v /= total;
    }
    // Validate mu G = 0.
    for j in 0..n {
        let dot: f64 = (0..n).map(|i| weights[i] * model.generator()[(i, j)]).sum();
        if dot.abs() > 1e-10 {
            return Err(Error::Numeric(format!(
                "stationary residual {dot} at column {j}"
            )));
        }
    }
    Ok(StationaryMeasure {
        weights,
        normalization: Normalization::Probability,
    })
}
