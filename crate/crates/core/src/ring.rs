//! Toy intersection rings: finitely many (1,1)-class labels, a symmetric
//! intersection tensor with rational entries, and a list of subvariety
//! evaluation tensors. On top of this sit the central phase `θ₀`, the
//! stability functional
//! `F^Stab(Y, t) = (Re(α_t+iβ)^m − cot θ₀ · Im(α_t+iβ)^m) · Y`
//! with `α_t = α + tγ`, its binomial coefficient expansion, and the
//! Nakai–Moishezon-style verdicts.
//!
//! All intersection accumulation is exact rational arithmetic; floats enter
//! only through `cot θ₀` and the evaluation point `t`. Sign verdicts
//! therefore never hinge on accumulation error.

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

pub type Rat = BigRational;
pub type CRat = Complex<BigRational>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RingError {
    #[error("unknown subvariety {0:?}")]
    UnknownCycle(String),
    #[error("unknown basis class {0:?}")]
    UnknownClass(String),
    #[error("(α+iβ)^n · X = 0: degenerate volume")]
    DegenerateVolume,
    #[error("no representative of θ₀ lies in (0,π)")]
    NoSupercriticalPhase,
    #[error("class vector has {0} coefficients, ring basis has {1}")]
    DimensionMismatch(usize, usize),
    #[error("direction class is not Kähler: {0}")]
    NotKahler(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A subvariety of complex dimension `m` with its m-fold evaluation tensor
/// over the ring basis (sparse, keyed by sorted index tuples).
#[derive(Debug, Clone)]
pub struct Subvariety {
    pub label: String,
    pub dim: usize,
    pub tensor: BTreeMap<Vec<usize>, Rat>,
}

#[derive(Debug, Clone)]
pub struct ToyRing {
    pub name: String,
    pub n: usize,
    pub basis: Vec<String>,
    /// Fully symmetric n-linear intersection tensor, keyed by sorted tuples.
    pub intersection: BTreeMap<Vec<usize>, Rat>,
    pub subvarieties: Vec<Subvariety>,
}

/// Coefficients of a class over a ring basis, exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVector {
    pub coeffs: Vec<Rat>,
}

impl ClassVector {
    pub fn from_ints(v: &[i64]) -> Self {
        Self {
            coeffs: v.iter().map(|&x| Rat::from_integer(BigInt::from(x))).collect(),
        }
    }

    pub fn zero(len: usize) -> Self {
        Self {
            coeffs: vec![Rat::zero(); len],
        }
    }

    pub fn add_scaled(&self, other: &Self, s: &Rat) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b * s)
                .collect(),
        }
    }
}

/// The test family `α_t = base + t·direction` with background `β`.
/// `t_threshold` records the user-declared condition-(C) threshold; it is
/// metadata, not something the ring can prove.
#[derive(Debug, Clone)]
pub struct TestFamilyClass {
    pub base: ClassVector,
    pub direction: ClassVector,
    pub background: ClassVector,
    pub t_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum Verdict {
    Stable,
    Unstable { witness_t: f64 },
    Inconclusive { sign_pattern: String },
}

fn binom(m: usize, k: usize) -> Rat {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(m - i);
        den *= BigInt::from(i + 1);
    }
    Rat::new(num, den)
}

impl ToyRing {
    fn check_len(&self, v: &ClassVector) -> Result<(), RingError> {
        if v.coeffs.len() != self.basis.len() {
            return Err(RingError::DimensionMismatch(
                v.coeffs.len(),
                self.basis.len(),
            ));
        }
        Ok(())
    }

    pub fn subvariety(&self, label: &str) -> Result<&Subvariety, RingError> {
        self.subvarieties
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| RingError::UnknownCycle(label.to_string()))
    }

    /// Evaluates a symmetric m-tensor against m complex-rational vectors.
    fn eval_tensor(
        tensor: &BTreeMap<Vec<usize>, Rat>,
        vectors: &[&Vec<CRat>],
        basis_len: usize,
    ) -> CRat {
        let m = vectors.len();
        let mut total = CRat::new(Rat::zero(), Rat::zero());
        let mut idx = vec![0usize; m];
        loop {
            let mut key: Vec<usize> = idx.clone();
            key.sort_unstable();
            if let Some(c) = tensor.get(&key) {
                let mut prod = CRat::new(c.clone(), Rat::zero());
                for (v, &i) in vectors.iter().zip(idx.iter()) {
                    prod = prod * v[i].clone();
                }
                total = total + prod;
            }
            // odometer over basis_len^m
            let mut pos = 0;
            loop {
                if pos == m {
                    return total;
                }
                idx[pos] += 1;
                if idx[pos] < basis_len {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    fn complexify(alpha: &ClassVector, beta: Option<&ClassVector>) -> Vec<CRat> {
        alpha
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                CRat::new(
                    a.clone(),
                    beta.map(|b| b.coeffs[i].clone()).unwrap_or_else(Rat::zero),
                )
            })
            .collect()
    }

    /// Exact complex moment `(α+iβ)^k ∧ γ^{m−k} · Y`.
    pub fn moment(
        &self,
        y: &Subvariety,
        alpha: &ClassVector,
        beta: &ClassVector,
        gamma: &ClassVector,
        k: usize,
    ) -> Result<CRat, RingError> {
        self.check_len(alpha)?;
        self.check_len(beta)?;
        self.check_len(gamma)?;
        assert!(k <= y.dim);
        let ab = Self::complexify(alpha, Some(beta));
        let g = Self::complexify(gamma, None);
        let mut vectors: Vec<&Vec<CRat>> = Vec::with_capacity(y.dim);
        for _ in 0..k {
            vectors.push(&ab);
        }
        for _ in k..y.dim {
            vectors.push(&g);
        }
        Ok(Self::eval_tensor(&y.tensor, &vectors, self.basis.len()))
    }

    /// `(α+iβ)^n · X` as an exact complex rational.
    pub fn top_volume(&self, alpha: &ClassVector, beta: &ClassVector) -> Result<CRat, RingError> {
        self.check_len(alpha)?;
        self.check_len(beta)?;
        let ab = Self::complexify(alpha, Some(beta));
        let vectors: Vec<&Vec<CRat>> = (0..self.n).map(|_| &ab).collect();
        Ok(Self::eval_tensor(
            &self.intersection,
            &vectors,
            self.basis.len(),
        ))
    }

    /// The central phase: ϑ₀ with `(∫(χ+iω)ⁿ)e^{−iϑ₀} ∈ ℝ₊` and
    /// `θ₀ = nπ/2 − ϑ₀`, reduced mod 2π into (0,π).
    pub fn theta0_from_classes(
        &self,
        alpha: &ClassVector,
        beta: &ClassVector,
    ) -> Result<f64, RingError> {
        let z = self.top_volume(alpha, beta)?;
        if z.re.is_zero() && z.im.is_zero() {
            return Err(RingError::DegenerateVolume);
        }
        let zr = z.re.to_f64().unwrap();
        let zi = z.im.to_f64().unwrap();
        let vartheta = zi.atan2(zr);
        let mut theta0 = self.n as f64 * PI / 2.0 - vartheta;
        // unique representative in (0, π) modulo 2π, if any
        theta0 = theta0.rem_euclid(2.0 * PI);
        if theta0 > 0.0 && theta0 < PI {
            Ok(theta0)
        } else {
            Err(RingError::NoSupercriticalPhase)
        }
    }

    /// The integral normalization `Re w − cot θ₀ · Im w` evaluated on
    /// `w = (β+iα)ⁿ·X`. Since `arg w = nπ/2 − arg((α+iβ)ⁿ·X) = θ₀ (mod 2π)`
    /// and `cot` has period π, this vanishes identically when `θ₀` comes
    /// from [`theta0_from_classes`] — the normalization the phase encodes.
    pub fn central_constraint(
        &self,
        alpha: &ClassVector,
        beta: &ClassVector,
        theta0: f64,
    ) -> Result<f64, RingError> {
        let w = self.top_volume(beta, alpha)?;
        let re = w.re.to_f64().unwrap();
        let im = w.im.to_f64().unwrap();
        Ok(re - theta0.tan().recip() * im)
    }

    /// Whether `gamma` pairs strictly positively with every declared
    /// 1-dimensional subvariety (the corpus-level Kähler check).
    pub fn is_kahler_direction(&self, gamma: &ClassVector) -> Result<(), RingError> {
        self.check_len(gamma)?;
        let g = Self::complexify(gamma, None);
        for s in self.subvarieties.iter().filter(|s| s.dim == 1) {
            let v = Self::eval_tensor(&s.tensor, &[&g], self.basis.len());
            if !v.re.is_positive() {
                return Err(RingError::NotKahler(format!(
                    "γ·{} = {} is not > 0",
                    s.label, v.re
                )));
            }
        }
        Ok(())
    }

    /// `F^Stab(Y, t)` via the exact moment expansion.
    pub fn stab_value(
        &self,
        y_label: &str,
        fam: &TestFamilyClass,
        theta0: f64,
        t: f64,
    ) -> Result<f64, RingError> {
        let c = self.stab_poly_coeffs(y_label, fam, theta0)?;
        let m = c.len() - 1;
        Ok(c.iter()
            .enumerate()
            .map(|(k, ck)| ck * t.powi((m - k) as i32))
            .sum())
    }

    /// Coefficients `c[k] = C(m,k)·(Re − cotθ₀·Im)(α+iβ)^k · γ^{m−k} · Y`
    /// of the polynomial `F^Stab(Y, t) = Σ_k c[k]·t^{m−k}`.
    pub fn stab_poly_coeffs(
        &self,
        y_label: &str,
        fam: &TestFamilyClass,
        theta0: f64,
    ) -> Result<Vec<f64>, RingError> {
        let y = self.subvariety(y_label)?;
        let m = y.dim;
        let cot = theta0.tan().recip();
        let mut out = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let mk = self.moment(y, &fam.base, &fam.background, &fam.direction, k)?;
            let b = binom(m, k);
            let re = (&b * &mk.re).to_f64().unwrap();
            let im = (&b * &mk.im).to_f64().unwrap();
            out.push(re - cot * im);
        }
        Ok(out)
    }

    /// Stability sweep. Coefficient positivity is a sufficient certificate;
    /// negative grid values give an unstable witness; otherwise the verdict
    /// is inconclusive (upgradeable via [`sturm_upgrade`]).
    pub fn check_stable(
        &self,
        fam: &TestFamilyClass,
        theta0: f64,
        cycles: &[String],
        t_grid: &[f64],
    ) -> Result<Vec<(String, Verdict)>, RingError> {
        let mut out = Vec::new();
        for label in cycles {
            let y = self.subvariety(label)?;
            let proper = y.dim < self.n;
            let c = self.stab_poly_coeffs(label, fam, theta0)?;
            let tol = 1e-10;
            let verdict = if proper && c.iter().all(|&x| x > tol) {
                Verdict::Stable
            } else {
                // grid scan for a witness
                let mut witness = None;
                for &t in t_grid {
                    let v = self.stab_value(label, fam, theta0, t)?;
                    let bad = if proper { v <= tol } else { v < -tol };
                    if bad {
                        witness = Some(t);
                        break;
                    }
                }
                match witness {
                    Some(t) => Verdict::Unstable { witness_t: t },
                    None => {
                        if !proper && c.iter().all(|&x| x >= -tol) {
                            Verdict::Stable
                        } else {
                            let pattern: String = c
                                .iter()
                                .map(|&x| if x > tol { '+' } else if x < -tol { '-' } else { '0' })
                                .collect();
                            Verdict::Inconclusive {
                                sign_pattern: pattern,
                            }
                        }
                    }
                }
            };
            out.push((label.clone(), verdict));
        }
        Ok(out)
    }

    /// Uniform stability: subtract the margin `(n−m)·ε·(χ^m·Y)` (a constant
    /// in `t`) and rerun the sweep.
    pub fn check_uniform_stable(
        &self,
        fam: &TestFamilyClass,
        theta0: f64,
        eps: f64,
        chi: &ClassVector,
        cycles: &[String],
        t_grid: &[f64],
    ) -> Result<Vec<(String, Verdict)>, RingError> {
        let mut out = Vec::new();
        for label in cycles {
            let y = self.subvariety(label)?;
            let m = y.dim;
            let proper = m < self.n;
            let chi_c = Self::complexify(chi, None);
            let vectors: Vec<&Vec<CRat>> = (0..m).map(|_| &chi_c).collect();
            let chim_y = Self::eval_tensor(&y.tensor, &vectors, self.basis.len())
                .re
                .to_f64()
                .unwrap();
            let margin = (self.n - m) as f64 * eps * chim_y;
            let mut c = self.stab_poly_coeffs(label, fam, theta0)?;
            let last = c.len() - 1;
            c[last] -= margin;
            let tol = 1e-10;
            let verdict = if proper && c.iter().all(|&x| x > tol) {
                Verdict::Stable
            } else {
                let mut witness = None;
                for &t in t_grid {
                    let v: f64 = c
                        .iter()
                        .enumerate()
                        .map(|(k, ck)| ck * t.powi((m - k) as i32))
                        .sum();
                    let bad = if proper { v <= tol } else { v < -tol };
                    if bad {
                        witness = Some(t);
                        break;
                    }
                }
                match witness {
                    Some(t) => Verdict::Unstable { witness_t: t },
                    None => {
                        let pattern: String = c
                            .iter()
                            .map(|&x| if x > tol { '+' } else if x < -tol { '-' } else { '0' })
                            .collect();
                        Verdict::Inconclusive {
                            sign_pattern: pattern,
                        }
                    }
                }
            };
            out.push((label.clone(), verdict));
        }
        Ok(out)
    }

    /// The NM-criterion table: `(Re − cotθ₀·Im)(α+iβ)^k · γ^{m−k} · Y` for
    /// every listed cycle and `1 ≤ k ≤ m`.
    pub fn corollary_c_hypotheses(
        &self,
        alpha: &ClassVector,
        beta: &ClassVector,
        gamma: &ClassVector,
        theta0: f64,
        cycles: &[String],
    ) -> Result<Vec<(String, usize, f64, bool)>, RingError> {
        let cot = theta0.tan().recip();
        let mut rows = Vec::new();
        for label in cycles {
            let y = self.subvariety(label)?;
            let proper = y.dim < self.n;
            for k in 1..=y.dim {
                let mk = self.moment(y, alpha, beta, gamma, k)?;
                let v = mk.re.to_f64().unwrap() - cot * mk.im.to_f64().unwrap();
                let ok = if proper { v > 0.0 } else { v >= -1e-10 };
                rows.push((label.clone(), k, v, ok));
            }
        }
        Ok(rows)
    }
}

/// Number of real roots of `p` in the half-open interval `(lo, hi]` via a
/// Sturm sequence. Coefficients in descending degree.
pub fn sturm_roots(coeffs: &[f64], lo: f64, hi: f64) -> usize {
    let trim = |v: &mut Vec<f64>| {
        while v.len() > 1 && v[0].abs() < 1e-300 {
            v.remove(0);
        }
    };
    let mut p0: Vec<f64> = coeffs.to_vec();
    trim(&mut p0);
    if p0.len() <= 1 {
        return 0;
    }
    let mut p1: Vec<f64> = p0
        .iter()
        .take(p0.len() - 1)
        .enumerate()
        .map(|(i, &c)| c * (p0.len() - 1 - i) as f64)
        .collect();
    trim(&mut p1);
    let mut chain = vec![p0, p1];
    loop {
        let a = &chain[chain.len() - 2];
        let b = &chain[chain.len() - 1];
        if b.len() <= 1 && b[0].abs() < 1e-300 {
            break;
        }
        // -rem(a, b)
        let mut r = a.clone();
        while r.len() >= b.len() && r.len() > 1 {
            let scale = r[0] / b[0];
            let shift = r.len() - b.len();
            for (i, &bc) in b.iter().enumerate() {
                r[i] -= scale * bc;
                let _ = shift;
            }
            r.remove(0);
        }
        trim(&mut r);
        if r.iter().all(|&x| x.abs() < 1e-12 * coeffs.iter().fold(1.0, |m: f64, &c| m.max(c.abs()))) {
            break;
        }
        let neg: Vec<f64> = r.iter().map(|&x| -x).collect();
        chain.push(neg);
        if chain.last().unwrap().len() == 1 {
            break;
        }
    }
    let sign_changes = |x: f64| {
        let mut prev = 0.0f64;
        let mut count = 0usize;
        for p in &chain {
            let v = p.iter().fold(0.0, |acc, &c| acc * x + c);
            if v.abs() < 1e-300 {
                continue;
            }
            if prev != 0.0 && v.signum() != prev.signum() {
                count += 1;
            }
            prev = v;
        }
        count
    };
    sign_changes(lo).saturating_sub(sign_changes(hi))
}

/// Cauchy bound: all real roots of the polynomial lie in `[-B, B]`.
pub fn cauchy_root_bound(coeffs: &[f64]) -> f64 {
    let lead = coeffs[0].abs().max(1e-300);
    1.0 + coeffs[1..]
        .iter()
        .map(|c| c.abs() / lead)
        .fold(0.0, f64::max)
}

/// Upgrades an `Inconclusive` verdict to `Stable` when the Sturm sequence
/// certifies no roots in `(0, B]` for `B` past the Cauchy bound (so the
/// positive leading coefficient carries positivity to infinity).
pub fn sturm_upgrade(coeffs: &[f64], verdict: Verdict, value_at_0: f64) -> Verdict {
    if !matches!(verdict, Verdict::Inconclusive { .. }) {
        return verdict;
    }
    if coeffs[0] <= 0.0 || value_at_0 <= 0.0 {
        return verdict;
    }
    let bound = cauchy_root_bound(coeffs);
    if sturm_roots(coeffs, 0.0, bound) == 0 {
        Verdict::Stable
    } else {
        verdict
    }
}

// ------------------------------------------------------------------
// Built-in corpus
// ------------------------------------------------------------------

fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

impl ToyRing {
    /// CPⁿ for n ≤ 3: one class H with Hⁿ = 1, linear-section cycles.
    pub fn cp(n: usize) -> Self {
        assert!((1..=3).contains(&n));
        let mut intersection = BTreeMap::new();
        intersection.insert(vec![0; n], rat(1, 1));
        let mut subvarieties = Vec::new();
        let cycle_names = ["line", "plane"];
        for m in 1..n {
            let mut tensor = BTreeMap::new();
            tensor.insert(vec![0; m], rat(1, 1));
            subvarieties.push(Subvariety {
                label: cycle_names[m - 1].to_string(),
                dim: m,
                tensor,
            });
        }
        subvarieties.push(Subvariety {
            label: "X".to_string(),
            dim: n,
            tensor: intersection.clone(),
        });
        Self {
            name: format!("cp{n}"),
            n,
            basis: vec!["H".to_string()],
            intersection,
            subvarieties,
        }
    }

    /// Blowup of CP² at k ≤ 3 points: H² = 1, E_i² = −1, H·E_i = E_i·E_j = 0.
    pub fn blowup_cp2(k: usize) -> Self {
        assert!((1..=3).contains(&k));
        let mut basis = vec!["H".to_string()];
        for i in 1..=k {
            basis.push(format!("E{i}"));
        }
        let mut intersection = BTreeMap::new();
        intersection.insert(vec![0, 0], rat(1, 1));
        for i in 1..=k {
            intersection.insert(vec![i, i], rat(-1, 1));
        }
        let mut subvarieties = Vec::new();
        // the line H: pairing c ↦ c·H
        let mut line = BTreeMap::new();
        line.insert(vec![0], rat(1, 1));
        subvarieties.push(Subvariety {
            label: "line".into(),
            dim: 1,
            tensor: line,
        });
        // exceptional curves: c·E_i = −c_i
        for i in 1..=k {
            let mut t = BTreeMap::new();
            t.insert(vec![i], rat(-1, 1));
            subvarieties.push(Subvariety {
                label: format!("exc{i}"),
                dim: 1,
                tensor: t,
            });
        }
        subvarieties.push(Subvariety {
            label: "X".into(),
            dim: 2,
            tensor: intersection.clone(),
        });
        Self {
            name: format!("blcp2_{k}"),
            n: 2,
            basis,
            intersection,
            subvarieties,
        }
    }

    /// Product of two curves: A² = B² = 0, A·B = 1; fibers as 1-cycles.
    pub fn curve_product() -> Self {
        let basis = vec!["A".to_string(), "B".to_string()];
        let mut intersection = BTreeMap::new();
        intersection.insert(vec![0, 1], rat(1, 1));
        let mut fa = BTreeMap::new();
        fa.insert(vec![1], rat(1, 1)); // c·A = c_B
        let mut fb = BTreeMap::new();
        fb.insert(vec![0], rat(1, 1)); // c·B = c_A
        let subvarieties = vec![
            Subvariety {
                label: "fiber_a".into(),
                dim: 1,
                tensor: fa,
            },
            Subvariety {
                label: "fiber_b".into(),
                dim: 1,
                tensor: fb,
            },
            Subvariety {
                label: "X".into(),
                dim: 2,
                tensor: intersection.clone(),
            },
        ];
        Self {
            name: "curve_product".into(),
            n: 2,
            basis,
            intersection,
            subvarieties,
        }
    }
}

// ------------------------------------------------------------------
// Ring definition files
// ------------------------------------------------------------------

fn parse_rat(s: &str) -> Option<Rat> {
    if let Some((n, d)) = s.split_once('/') {
        Some(Rat::new(n.parse::<BigInt>().ok()?, d.parse::<BigInt>().ok()?))
    } else {
        Some(Rat::from_integer(s.parse::<BigInt>().ok()?))
    }
}

impl ToyRing {
    /// Parses the structured-text ring format:
    ///
    /// ```text
    /// name cp2
    /// dim 2
    /// basis H
    /// intersection H H 1
    /// subvariety line 1
    /// pairing line H 1
    /// ```
    pub fn parse(text: &str) -> Result<Self, RingError> {
        let mut name = String::new();
        let mut n = 0usize;
        let mut basis: Vec<String> = Vec::new();
        let mut intersection = BTreeMap::new();
        let mut subvarieties: Vec<Subvariety> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| RingError::Parse {
                line: idx + 1,
                msg,
            };
            let mut parts = line.split_whitespace();
            let kw = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            match kw {
                "name" => name = rest.join(" "),
                "dim" => {
                    n = rest
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("bad dim".into()))?
                }
                "basis" => basis = rest.iter().map(|s| s.to_string()).collect(),
                "intersection" => {
                    if rest.len() != n + 1 {
                        return Err(err(format!(
                            "intersection entry needs {n} classes and a value"
                        )));
                    }
                    let mut key = Vec::with_capacity(n);
                    for lbl in &rest[..n] {
                        key.push(
                            basis
                                .iter()
                                .position(|b| b == lbl)
                                .ok_or_else(|| err(format!("unknown class {lbl:?} in tuple")))?,
                        );
                    }
                    key.sort_unstable();
                    let v = parse_rat(rest[n])
                        .ok_or_else(|| err(format!("bad rational {:?} in tuple", rest[n])))?;
                    intersection.insert(key, v);
                }
                "subvariety" => {
                    let label = rest
                        .first()
                        .ok_or_else(|| err("subvariety needs a label".into()))?
                        .to_string();
                    let dim: usize = rest
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("bad subvariety dimension".into()))?;
                    subvarieties.push(Subvariety {
                        label,
                        dim,
                        tensor: BTreeMap::new(),
                    });
                }
                "pairing" => {
                    let label = *rest.first().ok_or_else(|| err("pairing needs a label".into()))?;
                    let sub = subvarieties
                        .iter_mut()
                        .find(|s| s.label == label)
                        .ok_or_else(|| err(format!("pairing before subvariety {label:?}")))?;
                    let m = sub.dim;
                    if rest.len() != m + 2 {
                        return Err(err(format!(
                            "pairing for {label:?} needs {m} classes and a value"
                        )));
                    }
                    let mut key = Vec::with_capacity(m);
                    for lbl in &rest[1..1 + m] {
                        key.push(
                            basis
                                .iter()
                                .position(|b| b == lbl)
                                .ok_or_else(|| err(format!("unknown class {lbl:?} in tuple")))?,
                        );
                    }
                    key.sort_unstable();
                    let v = parse_rat(rest[m + 1])
                        .ok_or_else(|| err(format!("bad rational {:?} in tuple", rest[m + 1])))?;
                    sub.tensor.insert(key, v);
                }
                other => return Err(err(format!("unknown keyword {other:?}"))),
            }
        }
        if name.is_empty() || n == 0 || basis.is_empty() {
            return Err(RingError::Parse {
                line: 0,
                msg: "missing name/dim/basis".into(),
            });
        }
        // X is always available
        if !subvarieties.iter().any(|s| s.label == "X") {
            subvarieties.push(Subvariety {
                label: "X".into(),
                dim: n,
                tensor: intersection.clone(),
            });
        }
        Ok(Self {
            name,
            n,
            basis,
            intersection,
            subvarieties,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "name {}", self.name).unwrap();
        writeln!(s, "dim {}", self.n).unwrap();
        writeln!(s, "basis {}", self.basis.join(" ")).unwrap();
        for (key, v) in &self.intersection {
            let labels: Vec<&str> = key.iter().map(|&i| self.basis[i].as_str()).collect();
            writeln!(s, "intersection {} {}", labels.join(" "), v).unwrap();
        }
        for sub in &self.subvarieties {
            if sub.label == "X" {
                continue;
            }
            writeln!(s, "subvariety {} {}", sub.label, sub.dim).unwrap();
            for (key, v) in &sub.tensor {
                let labels: Vec<&str> = key.iter().map(|&i| self.basis[i].as_str()).collect();
                writeln!(s, "pairing {} {} {}", sub.label, labels.join(" "), v).unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cp2_family() -> (ToyRing, TestFamilyClass, f64) {
        let ring = ToyRing::cp(2);
        let fam = TestFamilyClass {
            base: ClassVector::from_ints(&[2]),
            direction: ClassVector::from_ints(&[1]),
            background: ClassVector::from_ints(&[1]),
            t_threshold: None,
        };
        let theta0 = ring
            .theta0_from_classes(&fam.base, &fam.background)
            .unwrap();
        (ring, fam, theta0)
    }

    #[test]
    fn cp2_theta0() {
        let (_, _, theta0) = cp2_family();
        // z = (2+i)² = 3+4i, ϑ₀ = arctan(4/3), θ₀ = π − arctan(4/3)
        assert_abs_diff_eq!(theta0, PI - (4.0f64 / 3.0).atan(), epsilon = 1e-12);
        assert_abs_diff_eq!(theta0, 2.214297435588181, epsilon = 1e-12);
    }

    #[test]
    fn alpha_zero_has_no_phase() {
        let ring = ToyRing::cp(2);
        let alpha = ClassVector::from_ints(&[0]);
        let beta = ClassVector::from_ints(&[1]);
        // z = i²·1, ϑ₀ = π, θ₀ = 0: boundary excluded
        assert!(matches!(
            ring.theta0_from_classes(&alpha, &beta),
            Err(RingError::NoSupercriticalPhase)
        ));
    }

    #[test]
    fn torus_product_angle_identity() {
        // α = cot(θ/2)·β on the curve product: each factor angle θ/2
        let ring = ToyRing::curve_product();
        let theta: f64 = 1.8;
        let c = (theta / 2.0).tan().recip();
        // use a rational approximation of cot to stay in exact arithmetic,
        // then compare against the angle of the float value
        let beta = ClassVector::from_ints(&[1, 1]);
        let num = (c * 1e9).round() as i64;
        let alpha = ClassVector {
            coeffs: vec![rat(num, 1_000_000_000), rat(num, 1_000_000_000)],
        };
        // z = 2(c+i)², arg z = 2·arccot(c) = θ, so θ₀ = nπ/2 − θ = π − θ
        let theta0 = ring.theta0_from_classes(&alpha, &beta).unwrap();
        assert_abs_diff_eq!(theta0, PI - theta, epsilon = 1e-6);
    }

    #[test]
    fn central_constraint_consistency() {
        let (ring, fam, theta0) = cp2_family();
        let v = ring
            .central_constraint(&fam.base, &fam.background, theta0)
            .unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        // θ₀ = π/2 returns Re w exactly (cot vanishes); w = (1+2i)² = −3+4i
        let v = ring
            .central_constraint(&fam.base, &fam.background, PI / 2.0)
            .unwrap();
        assert_abs_diff_eq!(v, -3.0, epsilon = 1e-12);
        // perturbed θ₀: nonzero
        let v = ring
            .central_constraint(&fam.base, &fam.background, theta0 + 0.1)
            .unwrap();
        assert!(v.abs() > 1e-3);
    }

    #[test]
    fn stab_value_line() {
        let (ring, fam, theta0) = cp2_family();
        // cot θ₀ = −3/4; value on the line at t=0: 2 − (−3/4)·1 = 2.75
        let v = ring.stab_value("line", &fam, theta0, 0.0).unwrap();
        assert_abs_diff_eq!(v, 2.75, epsilon = 1e-12);
        // Y = X at t=0: (Re − cotθ₀·Im)(3+4i) = 3 + (3/4)·4 = 6, nonnegative
        let v = ring.stab_value("X", &fam, theta0, 0.0).unwrap();
        assert_abs_diff_eq!(v, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn stab_poly_cp2_line() {
        let (ring, fam, theta0) = cp2_family();
        let c = ring.stab_poly_coeffs("line", &fam, theta0).unwrap();
        // m=1: c = (γ·H, 2.75)
        assert_eq!(c.len(), 2);
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 2.75, epsilon = 1e-12);
        // degenerate direction: only c[m] survives
        let fam0 = TestFamilyClass {
            direction: ClassVector::from_ints(&[0]),
            ..fam.clone()
        };
        let c0 = ring.stab_poly_coeffs("line", &fam0, theta0).unwrap();
        assert_eq!(c0[0], 0.0);
        assert_abs_diff_eq!(c0[1], 2.75, epsilon = 1e-12);
    }

    #[test]
    fn poly_matches_values_at_chebyshev_points() {
        let ring = ToyRing::blowup_cp2(2);
        let fam = TestFamilyClass {
            base: ClassVector::from_ints(&[3, -1, -1]),
            direction: ClassVector::from_ints(&[3, -1, -1]),
            background: ClassVector::from_ints(&[2, -1, -1]),
            t_threshold: None,
        };
        let theta0 = ring
            .theta0_from_classes(&fam.base, &fam.background)
            .unwrap();
        for label in ["line", "exc1", "X"] {
            let y = ring.subvariety(label).unwrap();
            let m = y.dim;
            let c = ring.stab_poly_coeffs(label, &fam, theta0).unwrap();
            for i in 0..=m {
                // Chebyshev nodes mapped to [0, 4]
                let t = 2.0 * (1.0 + ((2 * i + 1) as f64 * PI / (2 * (m + 1)) as f64).cos());
                let poly: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(k, ck)| ck * t.powi((m - k) as i32))
                    .sum();
                let direct = ring.stab_value(label, &fam, theta0, t).unwrap();
                assert_abs_diff_eq!(poly, direct, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn check_stable_cp2() {
        let (ring, fam, theta0) = cp2_family();
        let cycles = vec!["line".to_string(), "X".to_string()];
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let verdicts = ring.check_stable(&fam, theta0, &cycles, &grid).unwrap();
        assert_eq!(verdicts[0].1, Verdict::Stable);
        assert_eq!(verdicts[1].1, Verdict::Stable);
    }

    #[test]
    fn unstable_witness_at_zero() {
        let (ring, fam, theta0) = cp2_family();
        let bad = TestFamilyClass {
            base: ClassVector::from_ints(&[-5]),
            ..fam
        };
        let cycles = vec!["line".to_string()];
        let grid = vec![0.0, 1.0];
        let verdicts = ring.check_stable(&bad, theta0, &cycles, &grid).unwrap();
        assert!(matches!(
            verdicts[0].1,
            Verdict::Unstable { witness_t } if witness_t == 0.0
        ));
    }

    #[test]
    fn uniform_stability_cp2() {
        let (ring, fam, theta0) = cp2_family();
        let chi = fam.background.clone();
        let cycles = vec!["line".to_string()];
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        // ε = 1: 2.75 − (2−1)·1·1 = 1.75 > 0 on the line at t=0
        let v = ring
            .check_uniform_stable(&fam, theta0, 1.0, &chi, &cycles, &grid)
            .unwrap();
        assert_eq!(v[0].1, Verdict::Stable);
        // ε huge: unstable with witness
        let v = ring
            .check_uniform_stable(&fam, theta0, 100.0, &chi, &cycles, &grid)
            .unwrap();
        assert!(matches!(v[0].1, Verdict::Unstable { .. }));
        // ε = 0 reduces to check_stable on proper cycles
        let v0 = ring
            .check_uniform_stable(&fam, theta0, 0.0, &chi, &cycles, &grid)
            .unwrap();
        let plain = ring.check_stable(&fam, theta0, &cycles, &grid).unwrap();
        assert_eq!(v0[0].1, plain[0].1);
    }

    #[test]
    fn corollary_table_cp2() {
        let (ring, fam, theta0) = cp2_family();
        let cycles = vec!["line".to_string(), "X".to_string()];
        let rows = ring
            .corollary_c_hypotheses(&fam.base, &fam.background, &fam.direction, theta0, &cycles)
            .unwrap();
        // all entries positive for the 2H/H example with γ=H
        assert!(rows.iter().all(|r| r.3), "{rows:?}");
        // k=m column equals stab_value at t=0
        let line_km = rows.iter().find(|r| r.0 == "line" && r.1 == 1).unwrap();
        assert_abs_diff_eq!(line_km.2, 2.75, epsilon = 1e-12);
        // sign flip with α = −5H
        let rows = ring
            .corollary_c_hypotheses(
                &ClassVector::from_ints(&[-5]),
                &fam.background,
                &fam.direction,
                theta0,
                &cycles,
            )
            .unwrap();
        assert!(rows.iter().any(|r| !r.3));
    }

    #[test]
    fn cohomological_invariance() {
        let (ring, fam, theta0) = cp2_family();
        // shifting the base along the direction re-indexes the family:
        // fam2 at t equals fam at t+c, exactly
        for c in [-1i64, 1, 3] {
            let fam2 = TestFamilyClass {
                base: fam
                    .base
                    .add_scaled(&fam.direction, &rat(c, 1)),
                ..fam.clone()
            };
            for t in [0.0, 0.7, 2.0] {
                let a = ring.stab_value("line", &fam2, theta0, t).unwrap();
                let b = ring.stab_value("line", &fam, theta0, t + c as f64).unwrap();
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let ring = ToyRing::cp(3);
        // α = H/2 keeps 3π/2 − arg((α+iβ)³) inside (0, π)
        let fam = TestFamilyClass {
            base: ClassVector {
                coeffs: vec![rat(1, 2)],
            },
            direction: ClassVector::from_ints(&[1]),
            background: ClassVector::from_ints(&[1]),
            t_threshold: None,
        };
        let theta0 = ring
            .theta0_from_classes(&fam.base, &fam.background)
            .unwrap();
        for label in ["plane", "X"] {
            let y = ring.subvariety(label).unwrap();
            let m = y.dim;
            let c = ring.stab_poly_coeffs(label, &fam, theta0).unwrap();
            let t: f64 = 0.8;
            let deriv: f64 = c
                .iter()
                .enumerate()
                .filter(|(k, _)| m > *k)
                .map(|(k, ck)| ck * (m - k) as f64 * t.powi((m - k - 1) as i32))
                .sum();
            let h = 1e-6;
            let fd = (ring.stab_value(label, &fam, theta0, t + h).unwrap()
                - ring.stab_value(label, &fam, theta0, t - h).unwrap())
                / (2.0 * h);
            assert_abs_diff_eq!(deriv, fd, epsilon = 1e-8 * (1.0 + deriv.abs()));
        }
    }

    #[test]
    fn kahler_direction_check() {
        let ring = ToyRing::blowup_cp2(2);
        // aH − b₁E₁ − b₂E₂ Kähler-ish: positive on line and both exc curves
        let good = ClassVector::from_ints(&[3, -1, -1]);
        assert!(ring.is_kahler_direction(&good).is_ok());
        let bad = ClassVector::from_ints(&[3, 1, -1]);
        assert!(matches!(
            ring.is_kahler_direction(&bad),
            Err(RingError::NotKahler(_))
        ));
    }

    #[test]
    fn parse_roundtrip() {
        for ring in [
            ToyRing::cp(2),
            ToyRing::cp(3),
            ToyRing::blowup_cp2(3),
            ToyRing::curve_product(),
        ] {
            let text = ring.to_text();
            let back = ToyRing::parse(&text).unwrap();
            assert_eq!(back.name, ring.name);
            assert_eq!(back.n, ring.n);
            assert_eq!(back.basis, ring.basis);
            assert_eq!(back.intersection, ring.intersection);
            assert_eq!(back.subvarieties.len(), ring.subvarieties.len());
        }
    }

    #[test]
    fn parse_errors_name_line() {
        let bad = "name x\ndim 2\nbasis H\nintersection H Q 1\n";
        match ToyRing::parse(bad) {
            Err(RingError::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("Q"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            ToyRing::parse("dim 2\n"),
            Err(RingError::Parse { .. })
        ));
    }

    #[test]
    fn unknown_cycle_is_reported() {
        let (ring, fam, theta0) = cp2_family();
        assert!(matches!(
            ring.stab_value("conic", &fam, theta0, 0.0),
            Err(RingError::UnknownCycle(_))
        ));
    }

    #[test]
    fn sturm_machinery() {
        // (t−1)(t−2) = t² − 3t + 2: two roots in (0, 3]
        assert_eq!(sturm_roots(&[1.0, -3.0, 2.0], 0.0, 3.0), 2);
        assert_eq!(sturm_roots(&[1.0, -3.0, 2.0], 0.0, 1.5), 1);
        // t² + 1: none
        assert_eq!(sturm_roots(&[1.0, 0.0, 1.0], -10.0, 10.0), 0);
        // upgrade: t² − t + 0.3 > 0 everywhere, mixed signs → stable
        let v = sturm_upgrade(
            &[1.0, -1.0, 0.3],
            Verdict::Inconclusive {
                sign_pattern: "+-+".into(),
            },
            0.3,
        );
        assert_eq!(v, Verdict::Stable);
        // genuine dip below zero is not upgraded
        let v = sturm_upgrade(
            &[1.0, -3.0, 2.0],
            Verdict::Inconclusive {
                sign_pattern: "+-+".into(),
            },
            2.0,
        );
        assert!(matches!(v, Verdict::Inconclusive { .. }));
    }
}
