//! Exact (p,q)-form arithmetic on ℂⁿ at a point.
//!
//! Coefficients are complex doubles, but the multi-index bookkeeping (wedge
//! signs, i-powers) is exact: index sets are bitmasks, signs come from
//! inversion counts. Sign convention: a positive (p,p)-form carries the
//! canonical density `i^{p²} dz^{J} ∧ dz̄^{J}`; the volume form is
//! `iⁿ dz¹∧dz̄¹∧…` up to the reordering sign absorbed into `i^{n²}`. The
//! `χⁿ/χⁿ = 1` test pins the convention.
//!
//! Everything here is a sign statement in the end — the positivity lemma
//! `Im(e^{−iθ₀}(ω+iχ)^p) < 0` against simple positive forms — so no floating
//! exterior-algebra shortcuts are taken.

use crate::hermitian::{hermitian_eigenvalues, RelativePair};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Hard cap on the ambient dimension; coefficient counts grow as C(n,p)².
pub const MAX_DIM: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("total degree ({p},{q}) exceeds the ambient dimension {n}")]
    DegreeOverflow { p: usize, q: usize, n: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("metric form is not positive definite (min eigenvalue {min_eig})")]
    MetricNotPositive { min_eig: f64 },
    #[error("form is not of bidegree ({0},{1})")]
    WrongBidegree(usize, usize),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
}

/// A (p,q)-form with complex coefficients over strictly increasing
/// multi-indices, stored as bitmask pairs `(I, J)` for `dz^I ∧ dz̄^J`.
#[derive(Debug, Clone, PartialEq)]
pub struct PPForm {
    dim: usize,
    p: usize,
    q: usize,
    coeffs: BTreeMap<(u32, u32), Complex64>,
}

/// Parity sign of merging two disjoint increasing index sets (a first).
fn merge_sign(a: u32, b: u32) -> f64 {
    let mut inv = 0u32;
    let mut bb = b;
    while bb != 0 {
        let y = bb.trailing_zeros();
        inv += (a >> (y + 1)).count_ones();
        bb &= bb - 1;
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl PPForm {
    pub fn zero(dim: usize, p: usize, q: usize) -> Self {
        assert!(dim <= MAX_DIM, "dimension capped at {MAX_DIM}");
        assert!(p <= dim && q <= dim);
        Self {
            dim,
            p,
            q,
            coeffs: BTreeMap::new(),
        }
    }

    /// The constant scalar 1 as a (0,0)-form.
    pub fn one(dim: usize) -> Self {
        let mut f = Self::zero(dim, 0, 0);
        f.coeffs.insert((0, 0), Complex64::new(1.0, 0.0));
        f
    }

    /// Single canonical basis element `dz^I ∧ dz̄^J` with coefficient `c`.
    pub fn basis(dim: usize, i_mask: u32, j_mask: u32, c: Complex64) -> Self {
        assert!(dim <= MAX_DIM);
        assert!(i_mask < (1 << dim) && j_mask < (1 << dim));
        let mut f = Self::zero(dim, i_mask.count_ones() as usize, j_mask.count_ones() as usize);
        if c != Complex64::new(0.0, 0.0) {
            f.coeffs.insert((i_mask, j_mask), c);
        }
        f
    }

    /// The (1,1)-form `i Σ h_{jk} dz^j ∧ dz̄^k` of a Hermitian matrix.
    pub fn from_hermitian(h: &DMatrix<Complex64>) -> Self {
        let n = h.nrows();
        let mut f = Self::zero(n, 1, 1);
        for j in 0..n {
            for k in 0..n {
                let c = Complex64::i() * h[(j, k)];
                if c.norm() > 0.0 {
                    f.coeffs.insert((1 << j, 1 << k), c);
                }
            }
        }
        f
    }

    /// Recovers the Hermitian coefficient matrix of a (1,1)-form.
    pub fn to_hermitian(&self) -> Result<DMatrix<Complex64>, FormError> {
        if self.p != 1 || self.q != 1 {
            return Err(FormError::WrongBidegree(1, 1));
        }
        let n = self.dim;
        let mut h = DMatrix::<Complex64>::zeros(n, n);
        for (&(i, j), &c) in &self.coeffs {
            h[(i.trailing_zeros() as usize, j.trailing_zeros() as usize)] = c / Complex64::i();
        }
        Ok(h)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn coeff(&self, i_mask: u32, j_mask: u32) -> Complex64 {
        self.coeffs
            .get(&(i_mask, j_mask))
            .copied()
            .unwrap_or_default()
    }

    pub fn num_coeffs(&self) -> usize {
        self.coeffs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, u32), &Complex64)> {
        self.coeffs.iter()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut f = self.clone();
        for v in f.coeffs.values_mut() {
            *v *= c;
        }
        f
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.dim, self.p, self.q), (other.dim, other.p, other.q));
        let mut f = self.clone();
        for (&k, &v) in &other.coeffs {
            *f.coeffs.entry(k).or_default() += v;
        }
        f.coeffs.retain(|_, v| v.norm() > 0.0);
        f
    }

    pub fn wedge(&self, other: &Self) -> Result<Self, FormError> {
        if self.dim != other.dim {
            return Err(FormError::DimensionMismatch(self.dim, other.dim));
        }
        let (p, q) = (self.p + other.p, self.q + other.q);
        if p > self.dim || q > self.dim {
            return Err(FormError::DegreeOverflow {
                p,
                q,
                n: self.dim,
            });
        }
        let mut out = Self::zero(self.dim, p, q);
        // moving dz̄^{J1} (q1 factors) past dz^{I2} (p2 factors)
        let swap = if (self.q * other.p) % 2 == 0 { 1.0 } else { -1.0 };
        for (&(i1, j1), &c1) in &self.coeffs {
            for (&(i2, j2), &c2) in &other.coeffs {
                if i1 & i2 != 0 || j1 & j2 != 0 {
                    continue;
                }
                let sign = swap * merge_sign(i1, i2) * merge_sign(j1, j2);
                *out.coeffs.entry((i1 | i2, j1 | j2)).or_default() += c1 * c2 * sign;
            }
        }
        out.coeffs.retain(|_, v| v.norm() > 1e-300);
        Ok(out)
    }

    /// Complex conjugate form: `bar(F)_{(J,I)} = (−1)^{pq} conj(F_{(I,J)})`.
    pub fn conj_form(&self) -> Self {
        let sign = if (self.p * self.q) % 2 == 0 { 1.0 } else { -1.0 };
        let mut f = Self::zero(self.dim, self.q, self.p);
        for (&(i, j), &c) in &self.coeffs {
            f.coeffs.insert((j, i), c.conj() * sign);
        }
        f
    }

    /// Real part in the sense `F = Re + i·Im` with `Re`, `Im` real forms.
    pub fn re(&self) -> Self {
        self.add(&self.conj_form()).scale(Complex64::new(0.5, 0.0))
    }

    pub fn im(&self) -> Self {
        self.add(&self.conj_form().scale(Complex64::new(-1.0, 0.0)))
            .scale(Complex64::new(0.0, -0.5))
    }

    /// Whether the reality condition holds within `tol`.
    pub fn is_real(&self, tol: f64) -> bool {
        let d = self.add(&self.conj_form().scale(Complex64::new(-1.0, 0.0)));
        let norm: f64 = d.coeffs.values().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = self
            .coeffs
            .values()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
            .max(1.0);
        norm <= tol * scale
    }

    /// Nested-map serialization for golden tests: `{"I|J": [re, im]}` with
    /// indices rendered as sorted 1-based lists.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (&(i, j), &c) in &self.coeffs {
            let render = |m: u32| {
                (0..self.dim)
                    .filter(|b| m & (1 << b) != 0)
                    .map(|b| (b + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            map.insert(
                format!("{}|{}", render(i), render(j)),
                serde_json::json!([c.re, c.im]),
            );
        }
        serde_json::Value::Object(map)
    }
}

/// `(ω + iχ)^k` as a complex (k,k)-form (coefficient-level, no Re/Im split).
pub fn complex_power_full(omega: &PPForm, chi: &PPForm, k: usize) -> Result<PPForm, FormError> {
    let n = omega.dim();
    if k > n {
        return Err(FormError::DegreeOverflow { p: k, q: k, n });
    }
    let z = omega.add(&chi.scale(Complex64::i()));
    let mut acc = PPForm::one(n);
    for _ in 0..k {
        acc = acc.wedge(&z)?;
    }
    Ok(acc)
}

/// Real and imaginary parts of `(ω + iχ)^k`.
pub fn complex_power(
    omega: &PPForm,
    chi: &PPForm,
    k: usize,
) -> Result<(PPForm, PPForm), FormError> {
    let z = complex_power_full(omega, chi, k)?;
    Ok((z.re(), z.im()))
}

/// Scalar `F / χⁿ` for a top-degree form, as the ratio of top coefficients.
/// Rejects non-positive χ. The imaginary part of the ratio is discarded; use
/// [`pair_top_complex`] when the phase matters.
pub fn pair_top(f: &PPForm, chi: &PPForm) -> Result<f64, FormError> {
    Ok(pair_top_complex(f, chi)?.re)
}

pub fn pair_top_complex(f: &PPForm, chi: &PPForm) -> Result<Complex64, FormError> {
    let n = f.dim();
    if f.bidegree() != (n, n) {
        return Err(FormError::WrongBidegree(n, n));
    }
    let h = chi.to_hermitian()?;
    let min_eig = hermitian_eigenvalues(&h)[0];
    if min_eig <= 0.0 {
        return Err(FormError::MetricNotPositive { min_eig });
    }
    let mut chin = PPForm::one(n);
    for _ in 0..n {
        chin = chin.wedge(chi)?;
    }
    let full = (1u32 << n) - 1;
    Ok(f.coeff(full, full) / chin.coeff(full, full))
}

/// A simple positive (q,q)-form `(iα₁∧ᾱ₁)∧…∧(iα_q∧ᾱ_q)`.
#[derive(Debug, Clone)]
pub struct SimplePositiveForm {
    dim: usize,
    generators: Vec<Vec<Complex64>>,
}

impl SimplePositiveForm {
    pub fn new(dim: usize, generators: Vec<Vec<Complex64>>) -> Self {
        assert!(dim <= MAX_DIM);
        assert!(generators.len() <= dim);
        assert!(generators.iter().all(|g| g.len() == dim));
        Self { dim, generators }
    }

    pub fn degree(&self) -> usize {
        self.generators.len()
    }

    /// Gram determinant of the generators; ≈ 0 means the expanded form is 0.
    pub fn gram_det(&self) -> f64 {
        let q = self.generators.len();
        if q == 0 {
            return 1.0;
        }
        let mut g = DMatrix::<Complex64>::zeros(q, q);
        for a in 0..q {
            for b in 0..q {
                let mut s = Complex64::default();
                for j in 0..self.dim {
                    s += self.generators[a][j] * self.generators[b][j].conj();
                }
                g[(a, b)] = s;
            }
        }
        g.determinant().norm()
    }

    pub fn is_degenerate(&self, cutoff: f64) -> bool {
        self.gram_det() < cutoff
    }

    /// Expands to coefficient form.
    pub fn expand(&self) -> Result<PPForm, FormError> {
        let mut acc = PPForm::one(self.dim);
        for alpha in &self.generators {
            // i α∧ᾱ = i Σ_{j,k} a_j conj(a_k) dz^j ∧ dz̄^k — rank-1 Hermitian
            let mut h = DMatrix::<Complex64>::zeros(self.dim, self.dim);
            for j in 0..self.dim {
                for k in 0..self.dim {
                    h[(j, k)] = alpha[j] * alpha[k].conj();
                }
            }
            acc = acc.wedge(&PPForm::from_hermitian(&h))?;
        }
        Ok(acc)
    }
}

/// Random simple positive (q,q)-form with complex Gaussian generators,
/// rejecting Gram determinants below 1e−8.
pub fn random_simple_positive(dim: usize, q: usize, rng: &mut ChaCha8Rng) -> SimplePositiveForm {
    loop {
        let generators: Vec<Vec<Complex64>> = (0..q)
            .map(|_| {
                (0..dim)
                    .map(|_| Complex64::new(gaussian(rng), gaussian(rng)))
                    .collect()
            })
            .collect();
        let f = SimplePositiveForm::new(dim, generators);
        if !f.is_degenerate(1e-8) {
            return f;
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Tests `Im(e^{−iθ₀}(ω+iχ)^p) < 0` against `trials` random nondegenerate
/// simple positive (n−p,n−p)-forms; returns the worst (largest) pairing.
/// Requires `P_{χ,n,n}(ω) < θ₀`.
pub fn positivity_check(
    omega: &PPForm,
    chi: &PPForm,
    theta0: f64,
    p: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, FormError> {
    let n = omega.dim();
    if p == 0 || p >= n {
        return Err(FormError::HypothesisViolated(format!(
            "need 1 <= p <= n-1, got p={p}, n={n}"
        )));
    }
    let chi_h = chi.to_hermitian()?;
    let omega_h = omega.to_hermitian()?;
    let pair = RelativePair::new(chi_h, omega_h)
        .map_err(|e| FormError::HypothesisViolated(e.to_string()))?;
    let big_p = pair
        .angle_p(n)
        .map_err(|e| FormError::HypothesisViolated(e.to_string()))?;
    if big_p >= theta0 {
        return Err(FormError::HypothesisViolated(format!(
            "P = {big_p} is not below theta0 = {theta0}"
        )));
    }
    let z = complex_power_full(omega, chi, p)?;
    let neg_part = z
        .scale(Complex64::from_polar(1.0, -theta0))
        .im();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials.max(1) {
        let simple = random_simple_positive(n, n - p, &mut rng);
        let pairing = pair_top(&neg_part.wedge(&simple.expand()?)?, chi)?;
        worst = worst.max(pairing);
    }
    Ok(worst)
}

/// Squeezed-angle comparison: with `Q_{χ₂}(ω) < θ` and `θ′ = θ + σ`, checks
/// `Re(e^{−iθ′}(ω+iχ₂)^k) ≤ −(2/σ)·Im(e^{−iθ′}(ω+iχ₂)^k)` as pairings
/// against random simple positive forms (`sin x ≥ x/2` squeeze).
pub fn squeezed_angle_check(
    omega: &PPForm,
    chi2: &PPForm,
    theta: f64,
    sigma: f64,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<bool, FormError> {
    let n = omega.dim();
    if k == 0 || k > n {
        return Err(FormError::HypothesisViolated(format!(
            "need 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    if sigma <= 0.0 || theta + sigma >= std::f64::consts::PI {
        return Err(FormError::HypothesisViolated(format!(
            "need sigma > 0 and theta + sigma < pi, got theta={theta}, sigma={sigma}"
        )));
    }
    let chi_h = chi2.to_hermitian()?;
    let omega_h = omega.to_hermitian()?;
    let pair = RelativePair::new(chi_h, omega_h)
        .map_err(|e| FormError::HypothesisViolated(e.to_string()))?;
    let q = pair
        .angle_q(n)
        .map_err(|e| FormError::HypothesisViolated(e.to_string()))?;
    if q >= theta {
        return Err(FormError::HypothesisViolated(format!(
            "Q = {q} is not below theta = {theta}"
        )));
    }
    let theta_p = theta + sigma;
    let z = complex_power_full(omega, chi2, k)?.scale(Complex64::from_polar(1.0, -theta_p));
    let re = z.re();
    let im = z.im();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-9;
    for _ in 0..trials.max(1) {
        let simple = random_simple_positive(n, n - k, &mut rng);
        let ome = simple.expand()?;
        let lhs = pair_top(&re.wedge(&ome)?, chi2)?;
        let rhs = -(2.0 / sigma) * pair_top(&im.wedge(&ome)?, chi2)?;
        if lhs > rhs + tol {
            return Ok(false);
        }
    }
    Ok(true)
}
