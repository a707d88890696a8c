//! Discrete fiber-averaging: atomic vertical measures weighted by
//! Im Π(λ_j + i), the averaged horizontal form, and the cot-chain bounds that
//! keep its angle below θ₀ (with a truncated variant for mass replaced by the
//! reference slope K).

use crate::hermitian::{arccot, AngleBudget, HermitianError, RelativePair};
use crate::sweeps;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FiberError {
    #[error("bad fiber measure: {0}")]
    BadMeasure(String),
    #[error(transparent)]
    Hermitian(#[from] HermitianError),
}

/// One atom of the measure: a horizontal Hermitian form ω̃, the vertical
/// relative eigenvalues λ ∈ ℝ^m, and a positive weight.  `truncated` marks
/// atoms whose horizontal data is replaced by K·χ̂ in the truncated average.
#[derive(Debug, Clone)]
pub struct FiberAtom {
    pub horizontal: DMatrix<Complex64>,
    pub vertical: Vec<f64>,
    pub weight: f64,
    pub truncated: bool,
}

impl FiberAtom {
    /// Vertical angle Q(λ) = Σ arccot λ_j.
    pub fn vertical_angle(&self) -> f64 {
        self.vertical.iter().map(|&l| arccot(l)).sum()
    }

    /// |Π(λ_j + i)| e^{iQ} as a complex number; its imaginary part is the
    /// vertical density weight.
    pub fn vertical_product(&self) -> Complex64 {
        self.vertical
            .iter()
            .fold(Complex64::new(1.0, 0.0), |p, &l| p * Complex64::new(l, 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct FiberMeasure {
    pub atoms: Vec<FiberAtom>,
    pub chi_hat: DMatrix<Complex64>,
    pub budget: AngleBudget,
}

impl FiberMeasure {
    fn validate(&self) -> Result<(), FiberError> {
        if self.atoms.is_empty() {
            return Err(FiberError::BadMeasure("no atoms".into()));
        }
        let m = self.budget.fiber_dim;
        let h = self.chi_hat.nrows();
        for (i, a) in self.atoms.iter().enumerate() {
            if !(a.weight > 0.0) {
                return Err(FiberError::BadMeasure(format!(
                    "atom {i} has nonpositive weight {}",
                    a.weight
                )));
            }
            if a.vertical.len() != m {
                return Err(FiberError::BadMeasure(format!(
                    "atom {i} has {} vertical eigenvalues, fiber dimension is {m}",
                    a.vertical.len()
                )));
            }
            if a.horizontal.nrows() != h || a.horizontal.ncols() != h {
                return Err(FiberError::BadMeasure(format!(
                    "atom {i} horizontal size mismatch"
                )));
            }
            if a.vertical_product().im <= 0.0 {
                return Err(FiberError::BadMeasure(format!(
                    "atom {i} has nonpositive vertical density Im Π(λ+i)"
                )));
            }
        }
        Ok(())
    }

    /// 𝒱 = Σ w·Im Π(λ+i).
    pub fn total_mass(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * a.vertical_product().im)
            .sum()
    }

    /// Aggregate vertical phase arg(Σ w·Π(λ+i)); the mass normalization of
    /// the averaging lemma asks this to be ≥ ζ_K.
    pub fn aggregate_phase(&self) -> f64 {
        let z = self
            .atoms
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, a| {
                acc + a.vertical_product().scale(a.weight)
            });
        z.arg()
    }

    /// Whether every atom obeys the product budget
    /// Q_{χ̂}(ω̃) + Q(λ) ≤ θ̃₀ and the aggregate phase is ≥ ζ_K.
    pub fn satisfies_budget(&self, tol: f64) -> Result<bool, FiberError> {
        self.validate()?;
        let h = self.chi_hat.nrows();
        let tt0 = self.budget.theta_tilde0();
        for a in &self.atoms {
            let pair = RelativePair::new(self.chi_hat.clone(), a.horizontal.clone())?;
            let qh = pair.angle_q(h)?;
            if qh + a.vertical_angle() > tt0 + tol {
                return Ok(false);
            }
        }
        Ok(self.aggregate_phase() >= self.budget.zeta_k() - tol)
    }

    /// Normalized truncated mass fraction (Σ_trunc w·Im Π)/𝒱.
    pub fn truncated_fraction(&self) -> f64 {
        let trunc: f64 = self
            .atoms
            .iter()
            .filter(|a| a.truncated)
            .map(|a| a.weight * a.vertical_product().im)
            .sum();
        trunc / self.total_mass()
    }
}

/// The averaged horizontal form 𝒱^{−1}·Σ w·Im Π(λ+i)·ω̃.
///
/// Contract (verified by the randomized oracles below): when every atom obeys
/// the product budget and the aggregate vertical phase is ≥ ζ_K, the average
/// satisfies Q_{χ̂}(result) ≤ θ₀.
pub fn fiber_average(mu: &FiberMeasure) -> Result<DMatrix<Complex64>, FiberError> {
    mu.validate()?;
    let h = mu.chi_hat.nrows();
    let mut acc = DMatrix::<Complex64>::zeros(h, h);
    let mut mass = 0.0f64;
    for a in &mu.atoms {
        let w = a.weight * a.vertical_product().im;
        acc += a.horizontal.map(|v| v * Complex64::new(w, 0.0));
        mass += w;
    }
    Ok(acc.map(|v| v / Complex64::new(mass, 0.0)))
}

/// Angle of the average: Q_{χ̂}(fiber_average(μ)).
pub fn average_angle(mu: &FiberMeasure) -> Result<f64, FiberError> {
    let avg = fiber_average(mu)?;
    let h = mu.chi_hat.nrows();
    let pair = RelativePair::new(mu.chi_hat.clone(), avg)?;
    Ok(pair.angle_q(h)?)
}

/// Truncated average: atoms flagged `truncated` contribute K·χ̂ in place of
/// their horizontal form.  Returns Q_{χ̂} of the truncated average; the
/// cot-bound it must satisfy is [`truncated_lower_bound`].
pub fn truncated_fiber_bound(
    mu: &FiberMeasure,
    replaced_mass_fraction: f64,
) -> Result<f64, FiberError> {
    mu.validate()?;
    if !(0.0..=1.0).contains(&replaced_mass_fraction) {
        return Err(FiberError::BadMeasure(format!(
            "fraction {replaced_mass_fraction} outside [0,1]"
        )));
    }
    let actual = mu.truncated_fraction();
    if (actual - replaced_mass_fraction).abs() > 1e-6 {
        return Err(FiberError::BadMeasure(format!(
            "declared fraction {replaced_mass_fraction} does not match the flagged mass {actual}"
        )));
    }
    let h = mu.chi_hat.nrows();
    let kchi = mu
        .chi_hat
        .map(|v| v * Complex64::new(mu.budget.k_slope, 0.0));
    let mut acc = DMatrix::<Complex64>::zeros(h, h);
    let mut mass = 0.0f64;
    for a in &mu.atoms {
        let w = a.weight * a.vertical_product().im;
        let horiz = if a.truncated { &kchi } else { &a.horizontal };
        acc += horiz.map(|v| v * Complex64::new(w, 0.0));
        mass += w;
    }
    let omega = acc.map(|v| v / Complex64::new(mass, 0.0));
    let pair = RelativePair::new(mu.chi_hat.clone(), omega)?;
    Ok(pair.angle_q(h)?)
}

/// Right-hand side of the truncated cot-bound: the truncated average must
/// satisfy cot(Q) − cot(θ̃₀) ≥ this value.
pub fn truncated_lower_bound(budget: &AngleBudget, fraction: f64) -> f64 {
    let ct0 = budget.theta0.tan().recip();
    let ctt = budget.theta_tilde0().tan().recip();
    let c = ct0 - ctt;
    1.0 / (1.0 / c + c / (1.0 + ctt * ctt) * fraction)
}

/// Draws a measure satisfying the budget with mixed vertical phases: some
/// atoms sit below ζ_K (so their horizontal angle may exceed θ₀) and a
/// balancing atom pushes the aggregate phase back above ζ_K.
pub fn random_fiber_measure(
    budget: &AngleBudget,
    chi_hat: &DMatrix<Complex64>,
    rng: &mut ChaCha8Rng,
) -> FiberMeasure {
    let zeta = budget.zeta_k();
    let tt0 = budget.theta_tilde0();
    let num = rng.gen_range(2..=6);
    let mut atoms = Vec::with_capacity(num + 1);
    for _ in 0..num {
        let qv: f64 = rng.gen_range(0.3 * zeta..0.95 * tt0);
        atoms.push(random_atom(budget, chi_hat, qv, rng));
    }
    // Balance the aggregate phase above ζ_K by growing one high-phase atom.
    let qv_balance = zeta + 0.5 * (tt0 - zeta).min(zeta);
    let mut balance = random_atom(budget, chi_hat, qv_balance, rng);
    let mut mu = FiberMeasure {
        atoms: atoms.clone(),
        chi_hat: chi_hat.clone(),
        budget: *budget,
    };
    for _ in 0..80 {
        if mu.aggregate_phase() >= zeta {
            break;
        }
        balance.weight *= 2.0;
        let mut with = atoms.clone();
        with.push(balance.clone());
        mu = FiberMeasure {
            atoms: with,
            chi_hat: chi_hat.clone(),
            budget: *budget,
        };
    }
    debug_assert!(mu.aggregate_phase() >= zeta);
    mu
}

/// One atom with vertical angle exactly `qv` and horizontal angle a random
/// fraction of the remaining budget θ̃₀ − qv.
fn random_atom(
    budget: &AngleBudget,
    chi_hat: &DMatrix<Complex64>,
    qv: f64,
    rng: &mut ChaCha8Rng,
) -> FiberAtom {
    let m = budget.fiber_dim;
    let h = chi_hat.nrows();
    let vertical = split_angle(qv, m, rng);
    let frac: f64 = rng.gen_range(0.2..0.99);
    let qh = frac * (budget.theta_tilde0() - qv);
    let horiz_eigs = split_angle(qh, h, rng)
        .iter()
        .map(|&a| a.tan().recip())
        .collect::<Vec<_>>();
    let b_id = sweeps::hermitian_with_eigenvalues(&horiz_eigs, rng);
    let horizontal = sweeps::congruence_transport(&b_id, chi_hat);
    FiberAtom {
        horizontal,
        vertical: vertical.iter().map(|&a| a.tan().recip()).collect(),
        weight: rng.gen_range(0.1..2.0),
        truncated: false,
    }
}

/// Random positive parts of `total` (< π each), as angles.
fn split_angle(total: f64, parts: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u: Vec<f64> = (0..parts).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = u.iter().sum();
    for v in &mut u {
        *v *= total / s;
    }
    u
}
