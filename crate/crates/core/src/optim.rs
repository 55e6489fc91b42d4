//! Simplex weights, projected ascent and parameter aggregation.
//!
//! The adversary in the minimax procedures maintains a weight vector on a
//! probability simplex, optionally with a small floor `eps` on every
//! coordinate. [`project_simplex`] computes the exact Euclidean projection
//! onto that set with the classic sort-and-threshold scheme, and
//! [`pga_step`] wraps one projected gradient-ascent update.

use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::scalar::Scalar;

/// Tolerance on the coordinate sum when validating a simplex vector.
fn simplex_sum_tolerance<S: Scalar>() -> S {
    S::c(1e-9).max(S::epsilon() * S::c(64.0))
}

/// A point on the probability simplex: non-negative coordinates summing to
/// one (within a small tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> SimplexWeights<S> {
    /// Validates and wraps an explicit weight vector.
    pub fn from_values(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("simplex weights must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < S::zero()) {
            return Err(Error::invalid(
                "simplex weights must be finite and non-negative",
            ));
        }
        let sum: S = values.iter().copied().sum();
        if (sum - S::one()).abs() > simplex_sum_tolerance::<S>() {
            return Err(Error::invalid(format!(
                "simplex weights must sum to 1, got {sum}"
            )));
        }
        Ok(SimplexWeights { values })
    }

    /// Uniform distribution over `dim` coordinates.
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("simplex dimension must be positive"));
        }
        let w = S::one() / S::c(dim as f64);
        Ok(SimplexWeights {
            values: vec![w; dim],
        })
    }

    /// Empirical distribution from non-negative counts (at least one must be
    /// positive). This is how data priors like group frequencies are built.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("count vector must not be empty"));
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("count vector must have a positive total"));
        }
        let t = S::c(total as f64);
        Ok(SimplexWeights {
            values: counts.iter().map(|&c| S::c(c as f64) / t).collect(),
        })
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Coordinate values.
    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Single coordinate.
    pub fn get(&self, index: usize) -> S {
        self.values[index]
    }

    /// Copies the coordinates into an owned vector.
    pub fn to_vec(&self) -> Vec<S> {
        self.values.clone()
    }

    /// `sum_i |self_i - other_i|`.
    pub fn l1_distance(&self, other: &SimplexWeights<S>) -> Result<S> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "simplex dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut acc = S::zero();
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            acc += (*a - *b).abs();
        }
        Ok(acc)
    }
}

/// Euclidean projection of `point` onto `{x : x_i >= eps, sum_i x_i = 1}`.
///
/// Uses the exact sort-and-threshold construction (no iterative
/// approximation): with the substitution `x = eps + (1 - dim * eps) * y` the
/// problem reduces to projecting onto the standard simplex, where the
/// threshold is found from the sorted coordinates in closed form.
///
/// `eps` must satisfy `0 <= eps` and `dim * eps <= 1`; when `dim * eps == 1`
/// the feasible set is the single point `(eps, ..., eps)`.
pub fn project_simplex<S: Scalar>(point: &[S], eps: S) -> Result<SimplexWeights<S>> {
    if point.is_empty() {
        return Err(Error::invalid("cannot project an empty vector"));
    }
    if point.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot project a non-finite vector"));
    }
    if !eps.is_finite() || eps < S::zero() {
        return Err(Error::invalid("simplex floor must be finite and >= 0"));
    }
    let dim = point.len();
    let mass = S::one() - S::c(dim as f64) * eps;
    if mass < S::zero() {
        return Err(Error::invalid(format!(
            "simplex floor {eps} is infeasible for dimension {dim}"
        )));
    }
    if mass == S::zero() {
        return Ok(SimplexWeights {
            values: vec![eps; dim],
        });
    }

    // Shifted problem: project (point - eps) / mass onto the standard simplex.
    let shifted: Vec<S> = point.iter().map(|&v| (v - eps) / mass).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite values compare"));

    let mut cumulative = S::zero();
    let mut threshold = S::zero();
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - S::one()) / S::c((j + 1) as f64);
        if u - candidate > S::zero() {
            threshold = candidate;
        }
    }

    let values: Vec<S> = shifted
        .iter()
        .map(|&u| eps + mass * (u - threshold).max(S::zero()))
        .collect();
    Ok(SimplexWeights { values })
}

/// One projected gradient-ascent step on the simplex:
/// `project_simplex(weights + step_size * gradient, eps)`.
pub fn pga_step<S: Scalar>(
    weights: &SimplexWeights<S>,
    gradient: &[S],
    step_size: S,
    eps: S,
) -> Result<SimplexWeights<S>> {
    if gradient.len() != weights.dim() {
        return Err(Error::invalid(format!(
            "gradient has {} entries for {} weights",
            gradient.len(),
            weights.dim()
        )));
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(
            "non-finite gradient in projected ascent step".into(),
        ));
    }
    if !step_size.is_finite() || step_size < S::zero() {
        return Err(Error::invalid("ascent step size must be finite and >= 0"));
    }
    let moved: Vec<S> = weights
        .values()
        .iter()
        .zip(gradient.iter())
        .map(|(&w, &g)| w + step_size * g)
        .collect();
    project_simplex(&moved, eps)
}

/// Per-group importance weights `w_a = mu_a / rho_a`.
///
/// `rho` is the data prior; every prior entry must be strictly positive,
/// otherwise the ratio is undefined and an error is returned.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> ImportanceWeights<S> {
    /// Number of groups.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Weight values.
    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Single weight.
    pub fn get(&self, index: usize) -> S {
        self.values[index]
    }

    /// Wraps raw non-negative ratios (used when the caller has already
    /// formed per-cell weights itself).
    pub fn from_values(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("importance weights must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < S::zero()) {
            return Err(Error::invalid(
                "importance weights must be finite and non-negative",
            ));
        }
        Ok(ImportanceWeights { values })
    }
}

/// Ratio of adversary weights to the data prior: `w_a = mu_a / rho_a`.
pub fn importance_weights<S: Scalar>(
    mu: &SimplexWeights<S>,
    rho: &SimplexWeights<S>,
) -> Result<ImportanceWeights<S>> {
    if mu.dim() != rho.dim() {
        return Err(Error::invalid(format!(
            "weight/prior dimension mismatch: {} vs {}",
            mu.dim(),
            rho.dim()
        )));
    }
    let mut values = Vec::with_capacity(mu.dim());
    for (index, (&m, &r)) in mu.values().iter().zip(rho.values().iter()).enumerate() {
        if r <= S::zero() {
            return Err(Error::invalid(format!(
                "prior entry {index} is zero; importance weight undefined"
            )));
        }
        values.push(m / r);
    }
    Ok(ImportanceWeights { values })
}

/// Weighted sum of parameter vectors: `sum_i weights_i * updates_i`.
///
/// Callers pass updates in ascending client order so the floating-point
/// reduction is reproducible. Weights must be finite and non-negative; they
/// are not required to sum to one.
pub fn aggregate_params<S: Scalar>(
    updates: &[ParamVector<S>],
    weights: &[S],
) -> Result<ParamVector<S>> {
    if updates.is_empty() {
        return Err(Error::invalid("cannot aggregate zero parameter vectors"));
    }
    if updates.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} updates but {} aggregation weights",
            updates.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < S::zero()) {
        return Err(Error::invalid(
            "aggregation weights must be finite and non-negative",
        ));
    }
    let len = updates[0].len();
    let mut acc = ParamVector::zeros(len);
    for (update, &w) in updates.iter().zip(weights.iter()) {
        acc.scaled_add(w, update)?;
    }
    Ok(acc)
}
