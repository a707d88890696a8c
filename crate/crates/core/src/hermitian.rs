//! Lagrangian angle functionals on Hermitian pairs.
//!
//! For a positive definite Hermitian `A` and Hermitian `B`, let `λ₁ ≤ … ≤ λₙ`
//! be the eigenvalues of `A⁻¹B`. The functional `Q_{A,k,n}(B)` is the maximum
//! of `Σ_{j∈J} arccot(λ_j)` over index subsets `|J| = k`, and `P_{A,k,n}` is
//! the same with cardinality `k−1` (with `P₁ ≡ 0`). Since `arccot` is strictly
//! decreasing, the maximum is attained on the `k` smallest eigenvalues.
//!
//! The cone `Γ(θ₀, Θ₀)` collects pairs with `P(n) < θ₀` and `Q(n) < Θ₀`;
//! `cot ∘ Q` is concave on `Γ`, which is what every averaging argument in this
//! crate leans on.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use thiserror::Error;

/// Tolerance used when checking Hermitian symmetry of inputs.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HermitianError {
    #[error("metric matrix is not positive definite (min eigenvalue {min_eig})")]
    MetricNotPositive { min_eig: f64 },
    #[error("matrix is not Hermitian (asymmetry {asym})")]
    NotHermitian { asym: f64 },
    #[error("subset order k={k} out of range 1..={n}")]
    BadOrder { k: usize, n: usize },
    #[error("random frame could not be orthonormalized")]
    DegenerateFrame,
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("sigma {sigma} is not below the calibrated sigma0 {sigma0}")]
    OutsideCalibration { sigma: f64, sigma0: f64 },
}

/// The branch of arccot mapping ℝ onto (0, π), continuous and strictly
/// decreasing across λ = 0. (`atan(1/λ)` would jump at the origin.)
#[inline]
pub fn arccot(lambda: f64) -> f64 {
    PI / 2.0 - lambda.atan()
}

/// A positive definite Hermitian "metric" `A` together with a Hermitian `B`.
/// Carrier of every angle functional in this module.
#[derive(Debug, Clone)]
pub struct RelativePair {
    metric: DMatrix<Complex64>,
    form: DMatrix<Complex64>,
}

fn hermitian_asymmetry(m: &DMatrix<Complex64>) -> f64 {
    let diff = m - m.adjoint();
    diff.norm()
}

fn check_hermitian(m: &DMatrix<Complex64>) -> Result<(), HermitianError> {
    let asym = hermitian_asymmetry(m);
    let scale = m.norm().max(1.0);
    if asym > HERMITIAN_TOL * scale {
        return Err(HermitianError::NotHermitian { asym });
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    // Symmetrize first so tiny asymmetries cannot leak imaginary parts.
    let h = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Hermitian eigendecomposition returning (ascending eigenvalues, unitary of
/// matching eigenvectors as columns).
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let h = (m + m.adjoint()).scale(0.5);
    let se = nalgebra::linalg::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let n = idx.len();
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<Complex64>::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// `A^{-1/2}` via the Hermitian square-root congruence. Fails if `A` is not
/// positive definite.
pub fn inv_sqrt(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>, HermitianError> {
    let (vals, vecs) = hermitian_eigen(a);
    let min_eig = vals[0];
    if min_eig <= 0.0 {
        return Err(HermitianError::MetricNotPositive { min_eig });
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| Complex64::new(1.0 / v.sqrt(), 0.0)),
    ));
    Ok(&vecs * d * vecs.adjoint())
}

impl RelativePair {
    pub fn new(
        metric: DMatrix<Complex64>,
        form: DMatrix<Complex64>,
    ) -> Result<Self, HermitianError> {
        assert_eq!(metric.nrows(), metric.ncols());
        assert_eq!(form.nrows(), form.ncols());
        assert_eq!(metric.nrows(), form.nrows());
        check_hermitian(&metric)?;
        check_hermitian(&form)?;
        let min_eig = hermitian_eigenvalues(&metric)[0];
        if min_eig <= 0.0 {
            return Err(HermitianError::MetricNotPositive { min_eig });
        }
        Ok(Self { metric, form })
    }

    /// Pair with identity metric.
    pub fn with_identity_metric(form: DMatrix<Complex64>) -> Result<Self, HermitianError> {
        let n = form.nrows();
        Self::new(DMatrix::identity(n, n), form)
    }

    /// Real-entried convenience constructor.
    pub fn from_real(metric: &DMatrix<f64>, form: &DMatrix<f64>) -> Result<Self, HermitianError> {
        let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        Self::new(to_c(metric), to_c(form))
    }

    pub fn dim(&self) -> usize {
        self.metric.nrows()
    }

    pub fn metric(&self) -> &DMatrix<Complex64> {
        &self.metric
    }

    pub fn form(&self) -> &DMatrix<Complex64> {
        &self.form
    }

    /// Ascending eigenvalues of `A⁻¹B`, computed through the congruence
    /// `A^{-1/2} B A^{-1/2}` (same spectrum, Hermitian and stable).
    pub fn eigenvalues_rel(&self) -> Result<Vec<f64>, HermitianError> {
        let s = inv_sqrt(&self.metric)?;
        let reduced = &s * &self.form * &s;
        Ok(hermitian_eigenvalues(&reduced))
    }

    /// `Q_{A,k,n}(B)`: the largest sum of `k` arccot values, i.e. the arccot
    /// sum over the `k` smallest relative eigenvalues.
    pub fn angle_q(&self, k: usize) -> Result<f64, HermitianError> {
        let n = self.dim();
        if k == 0 || k > n {
            return Err(HermitianError::BadOrder { k, n });
        }
        let ev = self.eigenvalues_rel()?;
        Ok(ev[..k].iter().map(|&l| arccot(l)).sum())
    }

    /// `P_{A,k,n}(B)`: `Q` at cardinality `k−1`, with `P₁ ≡ 0`.
    pub fn angle_p(&self, k: usize) -> Result<f64, HermitianError> {
        let n = self.dim();
        if k == 0 || k > n {
            return Err(HermitianError::BadOrder { k, n });
        }
        if k == 1 {
            Ok(0.0)
        } else {
            self.angle_q(k - 1)
        }
    }

    /// Membership in the cone `Γ(θ₀, Θ₀)`: `P(n) < θ₀ − margin` and
    /// `Q(n) < Θ₀ − margin` (strict).
    pub fn in_gamma(&self, budget: &AngleBudget, margin: f64) -> Result<bool, HermitianError> {
        let n = self.dim();
        let p = self.angle_p(n)?;
        let q = self.angle_q(n)?;
        Ok(p < budget.theta0 - margin && q < budget.big_theta0 - margin)
    }
}

/// Angle sum `Q` of a raw eigenvalue vector.
pub fn q_of_eigenvalues(lambda: &[f64], k: usize) -> f64 {
    let mut sorted: Vec<f64> = lambda.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[..k].iter().map(|&l| arccot(l)).sum()
}

/// Constants of the §3–§4 angle arithmetic: the phase `θ₀`, the cone ceiling
/// `Θ₀`, the twist slope `K` and the derived `ζ_K = m·arccot(K)`,
/// `θ̃₀ = θ₀ + ζ_K`.
#[derive(Debug, Clone, Copy)]
pub struct AngleBudget {
    pub theta0: f64,
    pub big_theta0: f64,
    pub k_slope: f64,
    pub fiber_dim: usize,
}

impl AngleBudget {
    /// Validates `0 < θ₀ < Θ₀ < π` and the gap condition
    /// `Θ₀ − θ₀ < (π − Θ₀)/n`.
    pub fn new(
        theta0: f64,
        big_theta0: f64,
        n: usize,
        k_slope: f64,
        fiber_dim: usize,
    ) -> Result<Self, HermitianError> {
        if !(0.0 < theta0 && theta0 < big_theta0 && big_theta0 < PI) {
            return Err(HermitianError::HypothesisViolated(format!(
                "need 0 < theta0 < Theta0 < pi, got theta0={theta0}, Theta0={big_theta0}"
            )));
        }
        if big_theta0 - theta0 >= (PI - big_theta0) / n as f64 {
            return Err(HermitianError::HypothesisViolated(format!(
                "gap condition Theta0 - theta0 < (pi - Theta0)/n fails for n={n}"
            )));
        }
        if k_slope <= 0.0 {
            return Err(HermitianError::HypothesisViolated(
                "K must be positive".into(),
            ));
        }
        let budget = Self {
            theta0,
            big_theta0,
            k_slope,
            fiber_dim,
        };
        if budget.theta_tilde0() >= PI {
            return Err(HermitianError::HypothesisViolated(format!(
                "theta_tilde0 = {} not below pi",
                budget.theta_tilde0()
            )));
        }
        Ok(budget)
    }

    /// `ζ_K = m · arccot(K)`.
    pub fn zeta_k(&self) -> f64 {
        self.fiber_dim as f64 * arccot(self.k_slope)
    }

    /// `θ̃₀ = θ₀ + ζ_K`.
    pub fn theta_tilde0(&self) -> f64 {
        self.theta0 + self.zeta_k()
    }

    /// Whether `K` lies in the admissible window
    /// `cot((π−Θ₀)/n) < K < cot(Θ₀−θ₀)`.
    pub fn k_in_window(&self, n: usize) -> bool {
        let lo = ((PI - self.big_theta0) / n as f64).tan().recip();
        let hi = (self.big_theta0 - self.theta0).tan().recip();
        lo < self.k_slope && self.k_slope < hi
    }
}

/// Draws a Haar-ish random n×k frame with orthonormal columns diagonalizing
/// the restriction of `b`, and returns the arccot sum of the restricted
/// eigenvalues. Used by [`variational_q`].
fn frame_angle(
    b: &DMatrix<Complex64>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, HermitianError> {
    let n = b.nrows();
    // Complex Gaussian matrix, then Gram-Schmidt.
    let mut u = DMatrix::<Complex64>::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            let re: f64 = sample_std_normal(rng);
            let im: f64 = sample_std_normal(rng);
            u[(i, j)] = Complex64::new(re, im);
        }
    }
    for j in 0..k {
        for l in 0..j {
            let prev = u.column(l).clone_owned();
            let proj: Complex64 = prev.dotc(&u.column(j));
            let col = u.column(j) - prev.scale_complex(proj);
            u.set_column(j, &col);
        }
        let norm = u.column(j).norm();
        if norm < 1e-10 {
            return Err(HermitianError::DegenerateFrame);
        }
        let col = u.column(j) / Complex64::new(norm, 0.0);
        u.set_column(j, &col);
    }
    let restricted = u.adjoint() * b * &u;
    let ev = hermitian_eigenvalues(&restricted);
    Ok(ev.iter().map(|&l| arccot(l)).sum())
}

trait ScaleComplex {
    fn scale_complex(&self, c: Complex64) -> Self;
}

impl ScaleComplex for DVector<Complex64> {
    fn scale_complex(&self, c: Complex64) -> Self {
        self.map(|x| x * c)
    }
}

fn sample_std_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; avoids pulling in rand_distr for one distribution.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Monte-Carlo side of the Schur–Horn variational characterization of `Q`:
/// the max over random orthonormal k-frames of the restricted arccot sum.
/// Never exceeds `angle_q(k)`; attains it when the eigenvector subset frame
/// is among the trials.
pub fn variational_q(
    pair: &RelativePair,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, HermitianError> {
    let n = pair.dim();
    if k == 0 || k > n {
        return Err(HermitianError::BadOrder { k, n });
    }
    // Reduce to the identity metric by congruence.
    let s = inv_sqrt(pair.metric())?;
    let b = &s * pair.form() * &s;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..trials.max(1) {
        best = best.max(frame_angle(&b, k, &mut rng)?);
    }
    Ok(best)
}

/// As [`variational_q`] but with the optimal eigen-subset frame included as
/// an extra trial, so the maximum is attained.
pub fn variational_q_with_optimal(
    pair: &RelativePair,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, HermitianError> {
    let random_best = variational_q(pair, k, trials, seed)?;
    let s = inv_sqrt(pair.metric())?;
    let b = &s * pair.form() * &s;
    let (vals, vecs) = hermitian_eigen(&b);
    // Columns of the k smallest eigenvalues realize the maximum.
    let u = vecs.columns(0, k).clone_owned();
    let restricted = u.adjoint() * &b * u;
    let ev = hermitian_eigenvalues(&restricted);
    let optimal: f64 = ev.iter().map(|&l| arccot(l)).sum();
    debug_assert!(vals.len() == b.nrows());
    Ok(random_best.max(optimal))
}

/// Result of the uniform semi-continuity check `Q(ω+εχ) < θ − c₀ε`.
#[derive(Debug, Clone, Copy)]
pub struct SemicontinuityMargin {
    /// `Q` of the shifted pair `(A, B + εA)`.
    pub lhs: f64,
    /// `θ − c₀·ε`.
    pub bound: f64,
    pub holds: bool,
}

/// Evaluates both sides of `Q_A(B + εA) < θ − c₀ε`, given a calibrated
/// `c₀ = c0(n, θ)`. Errors if the hypothesis `Q_A(B) < θ` fails.
pub fn semicontinuity_margin(
    pair: &RelativePair,
    theta: f64,
    eps: f64,
    c0: f64,
) -> Result<SemicontinuityMargin, HermitianError> {
    if eps <= 0.0 || eps >= theta {
        return Err(HermitianError::HypothesisViolated(format!(
            "need 0 < eps < theta, got eps={eps}, theta={theta}"
        )));
    }
    let n = pair.dim();
    let q = pair.angle_q(n)?;
    if q >= theta {
        return Err(HermitianError::HypothesisViolated(format!(
            "Q = {q} is not below theta = {theta}"
        )));
    }
    let shifted = RelativePair::new(pair.metric().clone(), pair.form() + pair.metric().scale(eps))?;
    let lhs = shifted.angle_q(n)?;
    let bound = theta - c0 * eps;
    Ok(SemicontinuityMargin {
        lhs,
        bound,
        holds: lhs < bound,
    })
}

fn min_rel_eigenvalue(
    lhs: &DMatrix<Complex64>,
    metric: &DMatrix<Complex64>,
) -> Result<f64, HermitianError> {
    let pair = RelativePair::new(metric.clone(), lhs.clone())?;
    Ok(pair.eigenvalues_rel()?[0])
}

/// Uniform continuity of `Q` under metric perturbation: with
/// `χ₁, χ₂ ≤ 4χ₃`, `|χ₁−χ₂| ≤ σ⁵χ₃` and `Q_{χ₂}(B) < θ`, checks the
/// conclusion `Q_{χ₁}(B + σχ₃) < θ` for `σ` below the calibrated `σ₀`.
pub fn uniform_continuity_check(
    chi1: &DMatrix<Complex64>,
    chi2: &DMatrix<Complex64>,
    chi3: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    sigma: f64,
    theta: f64,
    sigma0: f64,
) -> Result<bool, HermitianError> {
    if sigma >= sigma0 {
        return Err(HermitianError::OutsideCalibration { sigma, sigma0 });
    }
    let psd_tol = -1e-10;
    for (name, m) in [
        ("4*chi3 - chi1", chi3.scale(4.0) - chi1),
        ("4*chi3 - chi2", chi3.scale(4.0) - chi2),
        ("sigma^5*chi3 - (chi1-chi2)", chi3.scale(sigma.powi(5)) - (chi1 - chi2)),
        ("sigma^5*chi3 + (chi1-chi2)", chi3.scale(sigma.powi(5)) + (chi1 - chi2)),
    ] {
        if min_rel_eigenvalue(&m, chi3)? < psd_tol {
            return Err(HermitianError::HypothesisViolated(format!(
                "matrix inequality {name} >= 0 fails"
            )));
        }
    }
    let n = b.nrows();
    let base = RelativePair::new(chi2.clone(), b.clone())?;
    let q2 = base.angle_q(n)?;
    if q2 >= theta {
        return Err(HermitianError::HypothesisViolated(format!(
            "Q_chi2(B) = {q2} is not below theta = {theta}"
        )));
    }
    let shifted = RelativePair::new(chi1.clone(), b + chi3.scale(sigma))?;
    Ok(shifted.angle_q(n)? < theta)
}

/// The angle margin of the §3 solvability-at-one computation:
/// `Σᵢ arccot((cot(θ₀/n)·μᵢ + ρ)/(μᵢ + ρⁿ))`, which stays strictly below
/// `θ₀` as long as `ρ^{n−1} < tan(θ₀/n)`.
pub fn solvability_margin(
    mu: &[f64],
    rho: f64,
    theta0: f64,
    ambient_dim: usize,
) -> Result<f64, HermitianError> {
    let n = ambient_dim;
    if mu.is_empty() || mu.len() > n {
        return Err(HermitianError::HypothesisViolated(format!(
            "need 1 <= m <= n, got m={}, n={n}",
            mu.len()
        )));
    }
    if mu.iter().any(|&m| m <= 0.0) {
        return Err(HermitianError::HypothesisViolated(
            "mu entries must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(HermitianError::HypothesisViolated(format!(
            "rho = {rho} outside [0,1)"
        )));
    }
    let slope = theta0 / n as f64;
    if rho.powi(n as i32 - 1) >= slope.tan() {
        return Err(HermitianError::HypothesisViolated(format!(
            "rho^(n-1) = {} not below tan(theta0/n) = {}",
            rho.powi(n as i32 - 1),
            slope.tan()
        )));
    }
    let cot_slope = slope.tan().recip();
    let sum = mu
        .iter()
        .map(|&m| arccot((cot_slope * m + rho) / (m + rho.powi(n as i32))))
        .sum();
    Ok(sum)
}
