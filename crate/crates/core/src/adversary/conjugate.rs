//! The generative-adversarial cost regularizer and its convex conjugate.
//!
//! ```text
//! g(x)      = −x − log(1 − eˣ)    for x < 0, +∞ otherwise
//! ψ_GA(c)   = E_expert[g(c(s, s'))] for c < 0 everywhere, +∞ otherwise
//! ψ*_GA(ρ_π − ρ_E) = Σ max_D ρ_π log D + ρ_E log(1 − D)
//! ```
//!
//! Substituting `D = eᶜ` shows that each entry of the conjugate sup is
//! `a c + b log(1 − eᶜ)` with `a = ρ_π`, `b = ρ_E`, maximized at
//! `D* = a / (a + b)`. The conjugate identity holds when the regularizer
//! weights `g` by the raw expert masses `b`; [`psi_ga`] uses the
//! expert distribution (masses rescaled to one), which is the same thing
//! for unit-mass occupancies.

use super::AdversaryError;
use crate::numkit::DenseMatrix;

/// Real number or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    PosInfinity,
}

impl Extended {
    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::PosInfinity)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::PosInfinity => None,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::PosInfinity => f64::INFINITY,
        }
    }
}

/// `g(x) = −x − log(1 − eˣ)` on `x < 0`.
pub fn g_fn(x: f64) -> Extended {
    if x < 0.0 {
        // −ln(1 − eˣ) = −ln(−expm1(x)), accurate for x near 0⁻.
        Extended::Finite(-x - (-x.exp_m1()).ln())
    } else {
        Extended::PosInfinity
    }
}

/// Tabular cost over `(s, s')` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    values: DenseMatrix,
}

impl CostFunction {
    pub fn new(values: DenseMatrix) -> Result<Self, AdversaryError> {
        if values.rows() != values.cols() {
            return Err(AdversaryError::Support("cost matrix must be square".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        let values = DenseMatrix::from_vec(n, n, vec![value; n * n]).expect("finite constant");
        Self { values }
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn n_states(&self) -> usize {
        self.values.rows()
    }

    /// Every entry strictly negative (the domain where `ψ_GA` is finite).
    pub fn in_domain(&self) -> bool {
        self.values.data().iter().all(|&c| c < 0.0)
    }
}

fn check_pair(a: &DenseMatrix, b: &DenseMatrix) -> Result<(), AdversaryError> {
    check_shapes(a, b)?;
    if a.data().iter().chain(b.data()).any(|&m| m < 0.0) {
        return Err(AdversaryError::NegativeMass);
    }
    Ok(())
}

fn check_shapes(a: &DenseMatrix, b: &DenseMatrix) -> Result<(), AdversaryError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(AdversaryError::Support(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// `Σ ρ_E(s, s') g(c(s, s'))` with raw expert masses.
pub fn psi_ga_weighted(c: &CostFunction, rho_e: &DenseMatrix) -> Result<Extended, AdversaryError> {
    check_shapes(c.values(), rho_e)?;
    if rho_e.data().iter().any(|&m| m < 0.0) {
        return Err(AdversaryError::NegativeMass);
    }
    if !c.in_domain() {
        return Ok(Extended::PosInfinity);
    }
    let mut total = 0.0;
    for (&ci, &w) in c.values().data().iter().zip(rho_e.data()) {
        if w > 0.0 {
            total += w * g_fn(ci).finite().expect("negative cost");
        }
    }
    Ok(Extended::Finite(total))
}

/// `ψ_GA(c)`: the expectation of `g(c)` under the expert's normalized
/// transition distribution; `+∞` unless `c < 0` everywhere.
pub fn psi_ga(c: &CostFunction, rho_e: &DenseMatrix) -> Result<Extended, AdversaryError> {
    let mass: f64 = rho_e.data().iter().sum();
    if !(mass > 0.0) {
        return Err(AdversaryError::Support("expert occupancy has zero mass".into()));
    }
    Ok(match psi_ga_weighted(c, rho_e)? {
        Extended::Finite(v) => Extended::Finite(v / mass),
        inf => inf,
    })
}

/// `a log(a/(a+b)) + b log(b/(a+b))` with `0 log 0 = 0`.
fn entry_value(a: f64, b: f64) -> f64 {
    let s = a + b;
    let mut v = 0.0;
    if a > 0.0 {
        v += a * (a / s).ln();
    }
    if b > 0.0 {
        v += b * (b / s).ln();
    }
    v
}

/// Closed-form conjugate using the per-entry maximizer `D* = a / (a + b)`.
pub fn psi_ga_conjugate_closed(
    rho_pi: &DenseMatrix,
    rho_e: &DenseMatrix,
) -> Result<f64, AdversaryError> {
    check_pair(rho_pi, rho_e)?;
    Ok(rho_pi
        .data()
        .iter()
        .zip(rho_e.data())
        .map(|(&a, &b)| entry_value(a, b))
        .sum())
}

/// Per-entry optimal discriminator `D*(s, s') = a / (a + b)` (0.5 where
/// both masses vanish).
pub fn optimal_discriminator(rho_pi: &DenseMatrix, rho_e: &DenseMatrix) -> Result<DenseMatrix, AdversaryError> {
    check_pair(rho_pi, rho_e)?;
    let data = rho_pi
        .data()
        .iter()
        .zip(rho_e.data())
        .map(|(&a, &b)| if a + b > 0.0 { a / (a + b) } else { 0.5 })
        .collect();
    Ok(DenseMatrix::from_vec(rho_pi.rows(), rho_pi.cols(), data).expect("finite ratios"))
}

/// Cost `c* = log D*`, with `D*` kept inside `[1e-12, 1 − 1e-12]` so the cost
/// stays finite and strictly negative.
pub fn analytic_optimal_cost(
    rho_pi: &DenseMatrix,
    rho_e: &DenseMatrix,
) -> Result<CostFunction, AdversaryError> {
    const EDGE: f64 = 1e-12;
    let d = optimal_discriminator(rho_pi, rho_e)?;
    let data = d
        .data()
        .iter()
        .map(|&p| p.clamp(EDGE, 1.0 - EDGE).ln())
        .collect();
    CostFunction::new(DenseMatrix::from_vec(d.rows(), d.cols(), data).expect("finite logs"))
}

/// Grid search of `a log D + b log(1 − D)` over `D = k / m`,
/// `k = 1..m−1`, `m = round(1 / resolution)`, per entry.
pub fn psi_ga_conjugate_numeric(
    rho_pi: &DenseMatrix,
    rho_e: &DenseMatrix,
    resolution: f64,
) -> Result<f64, AdversaryError> {
    check_pair(rho_pi, rho_e)?;
    if !(resolution > 0.0 && resolution < 0.5) {
        return Err(AdversaryError::Support(format!(
            "grid resolution must lie in (0, 0.5), got {resolution}"
        )));
    }
    let m = (1.0 / resolution).round() as u64;
    let mut total = 0.0;
    for (&a, &b) in rho_pi.data().iter().zip(rho_e.data()) {
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for k in 1..m {
            let d = k as f64 / m as f64;
            let v = a * d.ln() + b * (-d).ln_1p();
            if v > best {
                best = v;
            }
        }
        total += best;
    }
    Ok(total)
}

/// Outcome of checking the conjugate against its sup-definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyReport {
    pub closed_form: f64,
    /// Best `⟨ρ_π − ρ_E, c⟩ − ψ(c)` over the supplied samples.
    pub best_sample: f64,
    /// Samples whose objective exceeded the closed form (beyond rounding).
    pub violations: usize,
    pub samples: usize,
    /// Objective after local ascent started from the best sample.
    pub ascent_value: f64,
}

impl ConjugacyReport {
    pub fn ascent_gap(&self) -> f64 {
        (self.closed_form - self.ascent_value).abs()
    }

    pub fn passed(&self, ascent_tol: f64) -> bool {
        self.violations == 0 && self.ascent_gap() <= ascent_tol
    }
}

/// `⟨ρ_π − ρ_E, c⟩ − Σ ρ_E g(c)`, the objective inside the conjugate's sup.
pub fn conjugate_objective(
    rho_pi: &DenseMatrix,
    rho_e: &DenseMatrix,
    c: &CostFunction,
) -> Result<f64, AdversaryError> {
    check_pair(rho_pi, rho_e)?;
    let reg = psi_ga_weighted(c, rho_e)?;
    let Extended::Finite(reg) = reg else {
        return Ok(f64::NEG_INFINITY);
    };
    let inner: f64 = rho_pi
        .data()
        .iter()
        .zip(rho_e.data())
        .zip(c.values().data())
        .map(|((&a, &b), &ci)| (a - b) * ci)
        .sum();
    Ok(inner - reg)
}

/// Checks `sup_c ⟨ρ_π − ρ_E, c⟩ − ψ(c) ≤ ψ*` on every sample and runs a
/// per-entry Newton ascent from the best sample toward the supremum.
///
/// The ascent works in logit space `c = log σ(u)`, where each entry's
/// objective `a log σ(u) + b log(1 − σ(u))` is concave.
pub fn conjugacy_definition_check(
    rho_pi: &DenseMatrix,
    rho_e: &DenseMatrix,
    cost_samples: &[CostFunction],
) -> Result<ConjugacyReport, AdversaryError> {
    check_pair(rho_pi, rho_e)?;
    if cost_samples.is_empty() {
        return Err(AdversaryError::Support("need at least one cost sample".into()));
    }
    let closed = psi_ga_conjugate_closed(rho_pi, rho_e)?;
    let scale: f64 = rho_pi.data().iter().chain(rho_e.data()).sum::<f64>().max(1.0);
    let tol = 1e-12 * scale;
    let mut best: Option<(f64, &CostFunction)> = None;
    let mut violations = 0;
    for c in cost_samples {
        let v = conjugate_objective(rho_pi, rho_e, c)?;
        if v > closed + tol {
            violations += 1;
        }
        if best.is_none_or(|(bv, _)| v > bv) {
            best = Some((v, c));
        }
    }
    let (best_value, start) = best.unwrap();

    let mut ascended = Vec::with_capacity(start.values().data().len());
    for ((&a, &b), &c0) in rho_pi
        .data()
        .iter()
        .zip(rho_e.data())
        .zip(start.values().data())
    {
        let c0 = c0.min(-1e-12);
        // u = logit(eᶜ) = c − log(1 − eᶜ)
        let mut u = c0 - (-c0.exp_m1()).ln();
        if a + b > 0.0 {
            for _ in 0..200 {
                let s = crate::numkit::sigmoid(u);
                let grad = a - (a + b) * s;
                let hess = -(a + b) * s * (1.0 - s);
                let step = if hess < -1e-300 { -grad / hess } else { grad.signum() };
                u += step.clamp(-4.0, 4.0);
                if grad.abs() < 1e-14 * (a + b) {
                    break;
                }
            }
        }
        let log_sigmoid = if u > 0.0 {
            -(-u).exp().ln_1p()
        } else {
            u - u.exp().ln_1p()
        };
        ascended.push(log_sigmoid.min(-f64::MIN_POSITIVE));
    }
    let ascended = CostFunction::new(
        DenseMatrix::from_vec(rho_pi.rows(), rho_pi.cols(), ascended)
            .map_err(|e| AdversaryError::Support(e.to_string()))?,
    )?;
    let ascent_value = conjugate_objective(rho_pi, rho_e, &ascended)?.max(best_value);
    Ok(ConjugacyReport {
        closed_form: closed,
        best_sample: best_value,
        violations,
        samples: cost_samples.len(),
        ascent_value,
    })
}
