use crate::error::{Error, Result};
use crate::matrix::TransitionMatrix;
use crate::profile::DeviceProfile;

/// Residual tolerance on `|pi P - pi|_inf` for an accepted solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Pivot threshold below which the linear system is treated as
/// rank-deficient. Transition-matrix entries are O(1), so an absolute
/// threshold is appropriate.
const SINGULAR_TOLERANCE: f64 = 1e-12;

/// A probability vector known to be nonnegative and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution(Vec<f64>);

impl StationaryDistribution {
    /// Wraps a probability vector, checking nonnegativity and that the sum
    /// is one within 1e-9.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Dimension("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "probs",
                "entries must be finite and nonnegative",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("probs", format!("sum is {sum}, expected 1")));
        }
        Ok(StationaryDistribution(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

impl std::ops::Deref for StationaryDistribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Solves `pi P = pi`, `sum(pi) = 1` exactly (up to floating point) by
/// Gaussian elimination with partial pivoting on `(P^T - I)` with the last
/// equation replaced by the normalization constraint.
///
/// The rows of `(P^T - I)` always sum to the zero vector, so dropping one
/// equation loses nothing when the stationary distribution is unique; if the
/// chain has more than one closed communicating class the reduced system is
/// singular and the solve reports [`Error::NonUniqueStationary`].
///
/// Direct elimination rather than fixed-point iteration keeps periodic
/// chains (where the power sequence oscillates and never converges) and
/// stiff, slowly mixing chains exact.
pub fn steady_state(matrix: &TransitionMatrix) -> Result<StationaryDistribution> {
    matrix.validate().map_err(Error::InvalidMatrix)?;
    let n = matrix.n();

    // A x = b with A = (P^T - I), last row overwritten with ones.
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = matrix.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    b[n - 1] = 1.0;

    // Forward elimination with partial pivoting.
    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&r, &s| {
                a[r * n + k]
                    .abs()
                    .partial_cmp(&a[s * n + k].abs())
                    .expect("entries are finite")
            })
            .expect("nonempty range");
        if a[pivot_row * n + k].abs() < SINGULAR_TOLERANCE {
            return Err(Error::NonUniqueStationary);
        }
        if pivot_row != k {
            for c in 0..n {
                a.swap(k * n + c, pivot_row * n + c);
            }
            b.swap(k, pivot_row);
        }
        let pivot = a[k * n + k];
        for r in k + 1..n {
            let f = a[r * n + k] / pivot;
            if f != 0.0 {
                for c in k..n {
                    a[r * n + c] -= f * a[k * n + c];
                }
                b[r] -= f * b[k];
            }
        }
    }

    // Back substitution.
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..n {
            s -= a[k * n + c] * x[c];
        }
        x[k] = s / a[k * n + k];
    }

    // Roundoff can leave harmless negative dust on transient states; real
    // negative mass means the system was near-singular after all.
    for v in x.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-9 {
                return Err(Error::NonUniqueStationary);
            }
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    for v in x.iter_mut() {
        *v /= total;
    }

    let residual = (0..n)
        .map(|j| {
            let pj: f64 = (0..n).map(|i| x[i] * matrix.get(i, j)).sum();
            (pj - x[j]).abs()
        })
        .fold(0.0f64, f64::max);
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::ResidualTooLarge { residual });
    }

    StationaryDistribution::from_probs(x)
}

/// Long-run mean power draw in watts: the stationary-weighted average of the
/// profile's per-state power. Linear in the power vector.
pub fn expected_power(pi: &StationaryDistribution, profile: &DeviceProfile) -> Result<f64> {
    if pi.n() != profile.n() {
        return Err(Error::Dimension(format!(
            "distribution has {} states, profile has {}",
            pi.n(),
            profile.n()
        )));
    }
    Ok(pi
        .probs()
        .iter()
        .zip(profile.state_power())
        .map(|(p, w)| p * w)
        .sum())
}
