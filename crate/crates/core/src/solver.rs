//! Twisted dHYM solver on flat complex m-tori (m ∈ {1,2}).
//!
//! Potentials live on a periodic real 2m-grid; the complex Hessian
//! ∂²φ/∂z_j∂z̄_l is computed spectrally, so it is exact on trigonometric
//! polynomials and has exactly zero grid mean.  The equation
//!
//!   Re(ω+iχ)^m − cot(θ₀)·Im(ω+iχ)^m − f·χ^m = 0,   ω = ω₀ + i∂∂̄φ,
//!
//! is solved pointwise through the relative eigenvalues λ_j of ω against χ:
//! the density ratio (ω+iχ)^m/χ^m equals Π(λ_j+i), so the residual's first
//! term is Π√(1+λ_j²)·sin(θ₀−Q)/sin θ₀ with Q = Σ arccot λ_j.  Newton runs on
//! the concave reformulation g = cot Q − cot θ₀ − f/Im Π, with ½-backtracking
//! that keeps every iterate inside the cone Γ(θ₀+margin, Θ₀).

use crate::hermitian::{self, arccot};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

const TWIST_SIGN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("bad problem: {0}")]
    BadProblem(String),
    #[error("cone escape at iteration {iter}")]
    ConeEscape { iter: usize },
    #[error("no convergence after {iter} iterations (residual {residual:.3e})")]
    MaxIterations { iter: usize, residual: f64 },
    #[error("continuity path breaks at s = {s}: {reason}")]
    PathBreak { s: f64, reason: String },
}

/// A twisted dHYM problem on the torus (ℝ/2πℤ)^{2m} with constant background
/// data ω₀, χ and a per-gridpoint twist f.
#[derive(Debug, Clone)]
pub struct TorusProblem {
    pub m: usize,
    /// Per-real-axis sample counts, ordered (x₁, y₁, …, x_m, y_m).
    pub grid: Vec<usize>,
    pub omega0: DMatrix<Complex64>,
    pub chi: DMatrix<Complex64>,
    pub theta0: f64,
    pub big_theta0: f64,
    pub twist: Vec<f64>,
}

impl TorusProblem {
    pub fn new(
        m: usize,
        grid: Vec<usize>,
        omega0: DMatrix<Complex64>,
        chi: DMatrix<Complex64>,
        theta0: f64,
        big_theta0: f64,
        twist: Vec<f64>,
    ) -> Result<Self, SolverError> {
        if !(m == 1 || m == 2) {
            return Err(SolverError::BadProblem(format!("m = {m} not in {{1,2}}")));
        }
        if grid.len() != 2 * m {
            return Err(SolverError::BadProblem(format!(
                "grid needs {} axes, got {}",
                2 * m,
                grid.len()
            )));
        }
        if grid.iter().any(|&d| d < 4) {
            return Err(SolverError::BadProblem("grid sizes must be ≥ 4".into()));
        }
        let n: usize = grid.iter().product();
        if m == 2 && n > 16usize.pow(4) {
            return Err(SolverError::BadProblem(format!(
                "m=2 grids capped at 16⁴ points, got {n}"
            )));
        }
        if omega0.nrows() != m || chi.nrows() != m {
            return Err(SolverError::BadProblem("matrix dimension must equal m".into()));
        }
        if hermitian::hermitian_eigenvalues(&chi)[0] <= 0.0 {
            return Err(SolverError::BadProblem("chi must be positive definite".into()));
        }
        if !(theta0 > 0.0 && theta0 < PI) {
            return Err(SolverError::BadProblem(format!(
                "theta0 = {theta0} outside (0, π)"
            )));
        }
        if !(big_theta0 > theta0 && big_theta0 < PI) {
            return Err(SolverError::BadProblem(format!(
                "Theta0 = {big_theta0} must lie in (theta0, π)"
            )));
        }
        if twist.len() != n {
            return Err(SolverError::BadProblem(format!(
                "twist has {} samples, grid has {n}",
                twist.len()
            )));
        }
        // Sign constraints on the twist: f ≥ 0 for m ≤ 3.  The m ≥ 4 lower
        // bound f > −c is kept for forward compatibility but unreachable here.
        if m <= 3 {
            if let Some(bad) = twist.iter().find(|&&v| v < -TWIST_SIGN_TOL) {
                return Err(SolverError::BadProblem(format!(
                    "twist must be nonnegative for m ≤ 3 (found {bad})"
                )));
            }
        }
        Ok(Self {
            m,
            grid,
            omega0,
            chi,
            theta0,
            big_theta0,
            twist,
        })
    }

    pub fn points(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        (2.0 * PI).powi(2 * self.m as i32) / self.points() as f64
    }
}

/// A real potential sampled on the grid, with a mean-zero gauge flag.
#[derive(Debug, Clone)]
pub struct PotentialGrid {
    pub values: Vec<f64>,
    pub gauged: bool,
}

impl PotentialGrid {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            gauged: true,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            gauged: false,
        }
    }

    /// Projects onto the mean-zero gauge slice.
    pub fn gauge(mut self) -> Self {
        let mean = kahan_sum(self.values.iter().copied()) / self.values.len() as f64;
        for v in &mut self.values {
            *v -= mean;
        }
        self.gauged = true;
        self
    }

    pub fn sup_distance(&self, other: &PotentialGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn kahan_sum(it: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in it {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

// ---------------------------------------------------------------------------
// Spectral machinery
// ---------------------------------------------------------------------------

/// FFT plans and derivative symbols for one grid shape.  The symbol of
/// ∂/∂z_j is a_j(k) = ½(i k_{x_j} + k_{y_j}) and of ∂/∂z̄_j is
/// b_j(k) = ½(i k_{x_j} − k_{y_j}); Nyquist wavenumbers are zeroed so every
/// derivative of a real field stays real and mean-free.
struct Spectral {
    dims: Vec<usize>,
    n: usize,
    m: usize,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    /// Signed wavenumbers per axis, Nyquist zeroed.
    freqs: Vec<Vec<f64>>,
}

impl Spectral {
    fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims
            .iter()
            .map(|&d| planner.plan_fft_forward(d))
            .collect::<Vec<_>>();
        let inv = dims
            .iter()
            .map(|&d| planner.plan_fft_inverse(d))
            .collect::<Vec<_>>();
        let freqs = dims
            .iter()
            .map(|&d| {
                (0..d)
                    .map(|k| {
                        if 2 * k == d {
                            0.0 // Nyquist
                        } else if 2 * k < d {
                            k as f64
                        } else {
                            k as f64 - d as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            dims: dims.to_vec(),
            n: dims.iter().product(),
            m: dims.len() / 2,
            fwd,
            inv,
            freqs,
        }
    }

    fn fft_axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let d = self.dims[axis];
        let stride: usize = self.dims[axis + 1..].iter().product();
        let outer: usize = self.dims[..axis].iter().product();
        let plan = if inverse {
            &self.inv[axis]
        } else {
            &self.fwd[axis]
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); d];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * d * stride + s;
                for j in 0..d {
                    buf[j] = data[base + j * stride];
                }
                plan.process(&mut buf);
                for j in 0..d {
                    data[base + j * stride] = buf[j];
                }
            }
        }
    }

    fn fftn(&self, data: &mut [Complex64]) {
        for a in 0..self.dims.len() {
            self.fft_axis(data, a, false);
        }
    }

    fn ifftn(&self, data: &mut [Complex64]) {
        for a in 0..self.dims.len() {
            self.fft_axis(data, a, true);
        }
        let scale = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn forward_real(&self, field: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fftn(&mut data);
        data
    }

    /// Iterates frequency multi-indices in row-major order alongside flat index.
    fn for_each_freq(&self, mut f: impl FnMut(usize, &[f64])) {
        let axes = self.dims.len();
        let mut idx = vec![0usize; axes];
        let mut k = vec![0.0f64; axes];
        for a in 0..axes {
            k[a] = self.freqs[a][0];
        }
        for flat in 0..self.n {
            f(flat, &k);
            // odometer
            for a in (0..axes).rev() {
                idx[a] += 1;
                if idx[a] < self.dims[a] {
                    k[a] = self.freqs[a][idx[a]];
                    break;
                }
                idx[a] = 0;
                k[a] = self.freqs[a][0];
            }
        }
    }

    /// ∂/∂z_j symbol at wavenumber k.
    fn sym_z(&self, k: &[f64], j: usize) -> Complex64 {
        Complex64::new(0.5 * k[2 * j + 1], 0.5 * k[2 * j])
    }

    /// ∂/∂z̄_j symbol at wavenumber k.
    fn sym_zbar(&self, k: &[f64], j: usize) -> Complex64 {
        Complex64::new(-0.5 * k[2 * j + 1], 0.5 * k[2 * j])
    }

    /// Complex Hessian of a real field: per-point m×m matrices H_{jl} = ∂²φ/∂z_j∂z̄_l.
    fn hessian(&self, phi: &[f64]) -> Vec<DMatrix<Complex64>> {
        let m = self.m;
        let phi_hat = self.forward_real(phi);
        let mut out = vec![DMatrix::<Complex64>::zeros(m, m); self.n];
        for j in 0..m {
            for l in j..m {
                let mut comp = vec![Complex64::new(0.0, 0.0); self.n];
                self.for_each_freq(|flat, k| {
                    comp[flat] = phi_hat[flat] * self.sym_z(k, j) * self.sym_zbar(k, l);
                });
                self.ifftn(&mut comp);
                for (x, h) in out.iter_mut().enumerate() {
                    h[(j, l)] = comp[x];
                    if l != j {
                        h[(l, j)] = comp[x].conj();
                    } else {
                        // real field ⇒ diagonal entries real up to roundoff
                        h[(j, j)] = Complex64::new(comp[x].re, 0.0);
                    }
                }
            }
        }
        out
    }

    /// The constant-coefficient symbol Σ_{j,l} b̄_{jl}·(∂z_l∂z̄_j symbol) used by
    /// the Fourier preconditioner: equals −a(k)†·b̄·a(k) ≤ 0 for Hermitian b̄.
    fn precond_symbol(&self, k: &[f64], bbar: &DMatrix<Complex64>) -> f64 {
        let m = self.m;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..m {
            for l in 0..m {
                // tr(b̄·H) picks b̄_{jl}·H_{lj}; H_{lj} symbol is a_l·b_j.
                acc += bbar[(j, l)] * self.sym_z(k, l) * self.sym_zbar(k, j);
            }
        }
        acc.re
    }
}

// ---------------------------------------------------------------------------
// Pointwise angle data
// ---------------------------------------------------------------------------

struct PointData {
    lambda: Vec<f64>,
    /// Eigenvector columns of χ^{-1/2} ω χ^{-1/2} (ascending eigenvalues).
    frame: DMatrix<Complex64>,
    q: f64,
    p: f64,
    re_pi: f64,
    im_pi: f64,
}

fn point_data(a: &DMatrix<Complex64>) -> PointData {
    let (lambda, frame) = hermitian::hermitian_eigen(a);
    let m = lambda.len();
    let q: f64 = lambda.iter().map(|&l| arccot(l)).sum();
    let p = q - arccot(lambda[m - 1]);
    let mut pi = Complex64::new(1.0, 0.0);
    for &l in &lambda {
        pi *= Complex64::new(l, 1.0);
    }
    PointData {
        lambda,
        frame,
        q,
        p,
        re_pi: pi.re,
        im_pi: pi.im,
    }
}

/// Per-grid cone diagnostics attached to a residual evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct ConeFlags {
    /// min over the grid of (θ₀ − P(x)); negative means the subsolution bound fails.
    pub min_p_margin: f64,
    /// min over the grid of (Θ₀ − Q(x)).
    pub min_q_margin: f64,
    pub violations: usize,
}

struct FieldState {
    data: Vec<PointData>,
    residual: Vec<f64>,
    res_norm: f64,
    flags: ConeFlags,
}

struct Evaluator {
    spectral: Spectral,
    chi_ih: DMatrix<Complex64>, // χ^{-1/2}
    det_chi: f64,
}

impl Evaluator {
    fn new(prob: &TorusProblem) -> Result<Self, SolverError> {
        let chi_ih = hermitian::inv_sqrt(&prob.chi)
            .map_err(|e| SolverError::BadProblem(format!("chi: {e}")))?;
        let det_chi = hermitian::hermitian_eigenvalues(&prob.chi)
            .iter()
            .product();
        Ok(Self {
            spectral: Spectral::new(&prob.grid),
            chi_ih,
            det_chi,
        })
    }

    fn evaluate(&self, prob: &TorusProblem, phi: &PotentialGrid) -> FieldState {
        let hess = self.spectral.hessian(&phi.values);
        let mut data = Vec::with_capacity(hess.len());
        let mut residual = Vec::with_capacity(hess.len());
        let mut res_norm = 0.0f64;
        let mut min_p = f64::INFINITY;
        let mut min_q = f64::INFINITY;
        let mut violations = 0usize;
        let cot_t0 = prob.theta0.tan().recip();
        for (x, h) in hess.iter().enumerate() {
            let omega = &prob.omega0 + h;
            let a = &self.chi_ih * omega * &self.chi_ih;
            let pd = point_data(&a);
            let r1 = pd.re_pi - cot_t0 * pd.im_pi;
            let r = r1 - prob.twist[x];
            res_norm = res_norm.max(r.abs());
            let pm = prob.theta0 - pd.p;
            let qm = prob.big_theta0 - pd.q;
            min_p = min_p.min(pm);
            min_q = min_q.min(qm);
            if pm <= 0.0 || qm <= 0.0 {
                violations += 1;
            }
            data.push(pd);
            residual.push(r);
        }
        FieldState {
            data,
            residual,
            res_norm,
            flags: ConeFlags {
                min_p_margin: min_p,
                min_q_margin: min_q,
                violations,
            },
        }
    }

    /// First term of the residual computed through determinants — a polynomial
    /// in the Hessian entries, so its grid mean is exactly φ-independent.
    fn density_sum(&self, prob: &TorusProblem, phi: &PotentialGrid) -> f64 {
        let hess = self.spectral.hessian(&phi.values);
        let cot_t0 = prob.theta0.tan().recip();
        kahan_sum(hess.iter().map(|h| {
            let omega = &prob.omega0 + h;
            let w = omega.map(|v| v) + prob.chi.map(|v| v * Complex64::new(0.0, 1.0));
            let det = match prob.m {
                1 => w[(0, 0)],
                _ => w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)],
            };
            let ratio = det / self.det_chi;
            ratio.re - cot_t0 * ratio.im
        }))
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// ω₀ + H[φ] as a per-gridpoint Hermitian matrix field.
pub fn hessian_form(phi: &PotentialGrid, prob: &TorusProblem) -> Vec<DMatrix<Complex64>> {
    let spectral = Spectral::new(&prob.grid);
    spectral
        .hessian(&phi.values)
        .into_iter()
        .map(|h| &prob.omega0 + h)
        .collect()
}

/// Pointwise residual Π√(1+λ²)·sin(θ₀−Q)/sin θ₀ − f, plus cone flags.
pub fn residual(
    phi: &PotentialGrid,
    prob: &TorusProblem,
) -> Result<(Vec<f64>, ConeFlags), SolverError> {
    let ev = Evaluator::new(prob)?;
    let st = ev.evaluate(prob, phi);
    Ok((st.residual, st.flags))
}

/// Signed difference between the twist grid integral ∫ f χ^m and the density
/// integral ∫ (Re − cot θ₀ Im)(ω+iχ)^m.  The density is a polynomial in the
/// spectral Hessian whose grid mean is exactly φ-independent, so this gap
/// depends only on (ω₀, χ, θ₀, f).
pub fn compatibility_gap(phi: &PotentialGrid, prob: &TorusProblem) -> Result<f64, SolverError> {
    let ev = Evaluator::new(prob)?;
    let density = ev.density_sum(prob, phi);
    let twist = kahan_sum(prob.twist.iter().copied());
    Ok((density - twist) * ev.det_chi * prob.cell_volume())
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// ‖residual‖_∞ at the initial guess and after each accepted step.
    pub residual_history: Vec<f64>,
    /// min over the grid of (θ₀ + margin − P) at each accepted iterate.
    pub cone_margin_p: Vec<f64>,
    /// min over the grid of (Θ₀ − Q) at each accepted iterate.
    pub cone_margin_q: Vec<f64>,
    /// Compatibility gap at each accepted iterate.
    pub compatibility_drift: Vec<f64>,
    pub linear_iterations: Vec<usize>,
}

/// Damped Newton with the concave cot-reformulation.  `margin` widens the
/// tracking cone to Γ(θ₀+margin, Θ₀); backtracking halves the step until the
/// trial iterate stays inside that cone and decreases ‖residual‖_∞.
pub fn newton_solve(
    prob: &TorusProblem,
    phi_init: &PotentialGrid,
    tol: f64,
    max_iter: usize,
    margin: f64,
) -> Result<(PotentialGrid, SolveReport), SolverError> {
    if tol <= 0.0 {
        return Err(SolverError::BadProblem("tol must be > 0".into()));
    }
    let ev = Evaluator::new(prob)?;
    let n = prob.points();
    if phi_init.values.len() != n {
        return Err(SolverError::BadProblem("phi_init size mismatch".into()));
    }
    let mut phi = phi_init.clone().gauge();
    let mut state = ev.evaluate(prob, &phi);
    let in_cone = |st: &FieldState| {
        st.flags.min_p_margin > -margin && st.flags.min_q_margin > 0.0
    };
    if !in_cone(&state) {
        return Err(SolverError::ConeEscape { iter: 0 });
    }
    let mut report = SolveReport {
        iterations: 0,
        converged: false,
        residual_history: vec![state.res_norm],
        cone_margin_p: vec![state.flags.min_p_margin + margin],
        cone_margin_q: vec![state.flags.min_q_margin],
        compatibility_drift: vec![compatibility_gap(&phi, prob)?],
        linear_iterations: vec![],
    };
    if state.res_norm <= tol {
        report.converged = true;
        return Ok((phi, report));
    }

    let cot_t0 = prob.theta0.tan().recip();
    for iter in 1..=max_iter {
        // g = cot Q − cot θ₀ − f/Im Π and its eigenvalue gradient; the
        // gradient of a smooth symmetric eigenvalue function is U·diag(∂g)·U†,
        // which stays valid at eigenvalue collisions.
        let mut g = vec![0.0f64; n];
        let mut coeff = Vec::with_capacity(n);
        for (x, pd) in state.data.iter().enumerate() {
            let f = prob.twist[x];
            let cot_q = pd.q.tan().recip();
            g[x] = cot_q - cot_t0 - f / pd.im_pi;
            let m = pd.lambda.len();
            let mut dg = DMatrix::<Complex64>::zeros(m, m);
            for j in 0..m {
                let lj = pd.lambda[j];
                let w = 1.0 + lj * lj;
                let d = (1.0 + cot_q * cot_q) / w
                    + f * (lj * pd.im_pi - pd.re_pi) / (pd.im_pi * pd.im_pi * w);
                dg[(j, j)] = Complex64::new(d, 0.0);
            }
            let b = &ev.chi_ih * (&pd.frame * dg * pd.frame.adjoint()) * &ev.chi_ih;
            coeff.push(b);
        }

        // Fourier preconditioner from the grid-mean coefficient matrix.
        let mut bbar = DMatrix::<Complex64>::zeros(prob.m, prob.m);
        for b in &coeff {
            bbar += b;
        }
        bbar /= Complex64::new(n as f64, 0.0);
        let mut symbol = vec![0.0f64; n];
        ev.spectral.for_each_freq(|flat, k| {
            symbol[flat] = ev.spectral.precond_symbol(k, &bbar);
        });

        let apply = |v: &[f64]| -> Vec<f64> {
            let hess = ev.spectral.hessian(v);
            hess.iter()
                .zip(&coeff)
                .map(|(h, b)| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..prob.m {
                        for l in 0..prob.m {
                            acc += b[(j, l)] * h[(l, j)];
                        }
                    }
                    acc.re
                })
                .collect()
        };
        let precond = |v: &[f64]| -> Vec<f64> {
            let mut hat = ev.spectral.forward_real(v);
            for (h, &s) in hat.iter_mut().zip(&symbol) {
                if s.abs() < 1e-13 {
                    *h = Complex64::new(0.0, 0.0);
                } else {
                    *h /= s;
                }
            }
            ev.spectral.ifftn(&mut hat);
            hat.iter().map(|c| c.re).collect()
        };
        let rhs: Vec<f64> = g.iter().map(|&v| -v).collect();
        let (delta, lin_iters) = gmres(&apply, &precond, &rhs, 1e-10, 30, 300);
        report.linear_iterations.push(lin_iters);

        // Backtracking line search inside the tracking cone.
        let mut alpha = 1.0f64;
        let mut accepted: Option<(PotentialGrid, FieldState)> = None;
        let mut saw_cone = false;
        for _ in 0..40 {
            let trial_values: Vec<f64> = phi
                .values
                .iter()
                .zip(&delta)
                .map(|(p, d)| p + alpha * d)
                .collect();
            let trial = PotentialGrid::from_values(trial_values).gauge();
            let st = ev.evaluate(prob, &trial);
            if in_cone(&st) {
                saw_cone = true;
                if st.res_norm < state.res_norm {
                    accepted = Some((trial, st));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, st)) = accepted else {
            if saw_cone {
                return Err(SolverError::MaxIterations {
                    iter,
                    residual: state.res_norm,
                });
            }
            return Err(SolverError::ConeEscape { iter });
        };
        phi = trial;
        state = st;
        report.iterations = iter;
        report.residual_history.push(state.res_norm);
        report.cone_margin_p.push(state.flags.min_p_margin + margin);
        report.cone_margin_q.push(state.flags.min_q_margin);
        report.compatibility_drift.push(compatibility_gap(&phi, prob)?);
        if state.res_norm <= tol {
            report.converged = true;
            return Ok((phi, report));
        }
    }
    Err(SolverError::MaxIterations {
        iter: max_iter,
        residual: state.res_norm,
    })
}

/// Continuity path in the twist: f_s = (1−s)·f_easy + s·f_target, where
/// f_easy is the density of ω₀ itself (so φ = 0 solves s = 0 exactly).
/// Each step is sign-checked before solving and warm-starts from the last φ.
pub fn continuity_path(
    prob_target: &TorusProblem,
    steps: usize,
    tol: f64,
    max_iter: usize,
    margin: f64,
) -> Result<(PotentialGrid, Vec<SolveReport>), SolverError> {
    if steps == 0 {
        return Err(SolverError::BadProblem("steps must be ≥ 1".into()));
    }
    let ev = Evaluator::new(prob_target)?;
    let zero = PotentialGrid::zeros(prob_target.points());
    let easy_state = ev.evaluate(prob_target, &zero);
    // f_easy(x) = first residual term at φ = 0.
    let cot_t0 = prob_target.theta0.tan().recip();
    let f_easy: Vec<f64> = easy_state
        .data
        .iter()
        .map(|pd| pd.re_pi - cot_t0 * pd.im_pi)
        .collect();
    let mut phi = zero;
    let mut reports = Vec::new();
    for i in 1..=steps {
        let s = i as f64 / steps as f64;
        let f_s: Vec<f64> = f_easy
            .iter()
            .zip(&prob_target.twist)
            .map(|(e, t)| (1.0 - s) * e + s * t)
            .collect();
        if prob_target.m <= 3 {
            if let Some(bad) = f_s.iter().find(|&&v| v < -TWIST_SIGN_TOL) {
                return Err(SolverError::PathBreak {
                    s,
                    reason: format!("interpolated twist violates f ≥ 0 (found {bad})"),
                });
            }
        }
        let prob_s = TorusProblem {
            twist: f_s,
            ..prob_target.clone()
        };
        match newton_solve(&prob_s, &phi, tol, max_iter, margin) {
            Ok((next, report)) => {
                phi = next;
                reports.push(report);
            }
            Err(e) => {
                return Err(SolverError::PathBreak {
                    s,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((phi, reports))
}

// ---------------------------------------------------------------------------
// GMRES (left-preconditioned, restarted)
// ---------------------------------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn gmres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, usize) {
    let n = b.len();
    let mut x = vec![0.0f64; n];
    let pb = precond(b);
    let b_norm = norm(&pb).max(f64::MIN_POSITIVE);
    let mut total = 0usize;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut r = precond(&r);
        let beta = norm(&r);
        if beta <= rtol * b_norm {
            break;
        }
        for v in &mut r {
            *v /= beta;
        }
        let mut basis = vec![r];
        let mut h = vec![vec![0.0f64; 0]; 0]; // h[j] has j+2 entries
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut gamma = vec![beta];
        let mut inner = 0usize;
        for j in 0..restart {
            if total >= max_iter {
                break;
            }
            total += 1;
            inner = j + 1;
            let mut w = precond(&apply(&basis[j]));
            let mut hj = vec![0.0f64; j + 2];
            for (i, v) in basis.iter().enumerate() {
                hj[i] = dot(&w, v);
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hj[i] * vk;
                }
            }
            hj[j + 1] = norm(&w);
            if hj[j + 1] > 1e-300 {
                let inv = 1.0 / hj[j + 1];
                for v in &mut w {
                    *v *= inv;
                }
            }
            basis.push(w);
            // apply accumulated Givens rotations
            for i in 0..j {
                let t = cs[i] * hj[i] + sn[i] * hj[i + 1];
                hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
                hj[i] = t;
            }
            let denom = (hj[j] * hj[j] + hj[j + 1] * hj[j + 1]).sqrt();
            let (c, s) = if denom > 0.0 {
                (hj[j] / denom, hj[j + 1] / denom)
            } else {
                (1.0, 0.0)
            };
            cs.push(c);
            sn.push(s);
            hj[j] = c * hj[j] + s * hj[j + 1];
            hj[j + 1] = 0.0;
            gamma.push(-s * gamma[j]);
            gamma[j] *= c;
            h.push(hj);
            if gamma[j + 1].abs() <= rtol * b_norm {
                break;
            }
        }
        // back-substitution for the least-squares coefficients
        let k = inner;
        let mut y = vec![0.0f64; k];
        for i in (0..k).rev() {
            let mut s = gamma[i];
            for l in i + 1..k {
                s -= h[l][i] * y[l];
            }
            y[i] = if h[i][i].abs() > 1e-300 { s / h[i][i] } else { 0.0 };
        }
        for (i, &yi) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(&basis[i]) {
                *xk += yi * vk;
            }
        }
        if gamma[k].abs() <= rtol * b_norm {
            break;
        }
    }
    (x, total)
}

// ---------------------------------------------------------------------------
// Manufactured data and problem files
// ---------------------------------------------------------------------------

/// The benchmark potential Σ_j amp1·cos(x_j) + amp2·sin(2 y_j), mean-zero.
pub fn manufactured_potential(grid: &[usize], amp1: f64, amp2: f64) -> PotentialGrid {
    let m = grid.len() / 2;
    let n: usize = grid.iter().product();
    let mut values = vec![0.0f64; n];
    let mut idx = vec![0usize; grid.len()];
    for v in values.iter_mut() {
        let mut acc = 0.0;
        for j in 0..m {
            let x = 2.0 * PI * idx[2 * j] as f64 / grid[2 * j] as f64;
            let y = 2.0 * PI * idx[2 * j + 1] as f64 / grid[2 * j + 1] as f64;
            acc += amp1 * x.cos() + amp2 * (2.0 * y).sin();
        }
        *v = acc;
        for a in (0..grid.len()).rev() {
            idx[a] += 1;
            if idx[a] < grid[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    PotentialGrid {
        values,
        gauged: true,
    }
}

/// Builds the twist that makes `phi_star` an exact discrete solution:
/// f := Π√(1+λ²)·sin(θ₀−Q)/sin θ₀ evaluated at φ*.
pub fn manufactured_twist(
    prob_without_twist: &TorusProblem,
    phi_star: &PotentialGrid,
) -> Result<Vec<f64>, SolverError> {
    let ev = Evaluator::new(prob_without_twist)?;
    let st = ev.evaluate(prob_without_twist, phi_star);
    let cot_t0 = prob_without_twist.theta0.tan().recip();
    Ok(st
        .data
        .iter()
        .map(|pd| pd.re_pi - cot_t0 * pd.im_pi)
        .collect())
}

/// Twist catalog for problem files.
#[derive(Debug, Clone, PartialEq)]
pub enum TwistSpec {
    Constant(f64),
    /// amp·(1 + cos(freq·x_axis))/… kept nonnegative: amp·(1 + cos(freq·t))·scale.
    Cosine { amp: f64, axis: usize, freq: usize },
    /// φ* = Σ_j amp1·cos(x_j) + amp2·sin(2 y_j); f manufactured from it.
    Manufactured { amp1: f64, amp2: f64 },
}

/// A parsed problem file: background data plus a twist tag.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub m: usize,
    pub grid: Vec<usize>,
    pub omega0: DMatrix<Complex64>,
    pub chi: DMatrix<Complex64>,
    pub theta0: f64,
    pub big_theta0: f64,
    pub twist: TwistSpec,
}

impl ProblemFile {
    /// Materializes the twist field and assembles a validated problem.
    /// For `Manufactured`, also returns φ* so callers can measure sup error.
    pub fn build(&self) -> Result<(TorusProblem, Option<PotentialGrid>), SolverError> {
        let n: usize = self.grid.iter().product();
        let (twist, phi_star) = match &self.twist {
            TwistSpec::Constant(v) => (vec![*v; n], None),
            TwistSpec::Cosine { amp, axis, freq } => {
                if *axis >= self.grid.len() {
                    return Err(SolverError::BadProblem(format!(
                        "cosine twist axis {axis} out of range"
                    )));
                }
                let mut values = vec![0.0f64; n];
                let mut idx = vec![0usize; self.grid.len()];
                for v in values.iter_mut() {
                    let t = 2.0 * PI * idx[*axis] as f64 / self.grid[*axis] as f64;
                    *v = amp * (1.0 + (*freq as f64 * t).cos());
                    for a in (0..self.grid.len()).rev() {
                        idx[a] += 1;
                        if idx[a] < self.grid[a] {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
                (values, None)
            }
            TwistSpec::Manufactured { amp1, amp2 } => {
                let phi_star = manufactured_potential(&self.grid, *amp1, *amp2);
                let shell = TorusProblem {
                    m: self.m,
                    grid: self.grid.clone(),
                    omega0: self.omega0.clone(),
                    chi: self.chi.clone(),
                    theta0: self.theta0,
                    big_theta0: self.big_theta0,
                    twist: vec![0.0; n],
                };
                let twist = manufactured_twist(&shell, &phi_star)?;
                (twist, Some(phi_star))
            }
        };
        let prob = TorusProblem::new(
            self.m,
            self.grid.clone(),
            self.omega0.clone(),
            self.chi.clone(),
            self.theta0,
            self.big_theta0,
            twist,
        )?;
        Ok((prob, phi_star))
    }

    pub fn parse(text: &str) -> Result<Self, SolverError> {
        let mut m = None;
        let mut grid = None;
        let mut theta0 = None;
        let mut big_theta0 = None;
        let mut omega0 = None;
        let mut chi = None;
        let mut twist = None;
        let bad = |line: usize, msg: &str| SolverError::BadProblem(format!("line {line}: {msg}"));
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            match key {
                "m" => {
                    m = Some(
                        rest.first()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad(i + 1, "bad m"))?,
                    )
                }
                "grid" => {
                    let g: Option<Vec<usize>> = rest.iter().map(|s| s.parse().ok()).collect();
                    grid = Some(g.ok_or_else(|| bad(i + 1, "bad grid"))?);
                }
                "theta0" => {
                    theta0 = Some(
                        rest.first()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad(i + 1, "bad theta0"))?,
                    )
                }
                "Theta0" => {
                    big_theta0 = Some(
                        rest.first()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad(i + 1, "bad Theta0"))?,
                    )
                }
                "omega0" | "chi" => {
                    let dim = m.ok_or_else(|| bad(i + 1, "m must come before matrices"))?;
                    let vals: Option<Vec<f64>> = rest.iter().map(|s| s.parse().ok()).collect();
                    let vals = vals.ok_or_else(|| bad(i + 1, "bad matrix entries"))?;
                    if vals.len() != 2 * dim * dim {
                        return Err(bad(
                            i + 1,
                            &format!("expected {} re/im pairs", dim * dim),
                        ));
                    }
                    let mat = DMatrix::from_fn(dim, dim, |r, c| {
                        let k = 2 * (r * dim + c);
                        Complex64::new(vals[k], vals[k + 1])
                    });
                    if key == "omega0" {
                        omega0 = Some(mat);
                    } else {
                        chi = Some(mat);
                    }
                }
                "twist" => {
                    let tag = rest.first().ok_or_else(|| bad(i + 1, "missing twist tag"))?;
                    let get = |k: usize| -> Result<f64, SolverError> {
                        rest.get(k)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad(i + 1, "bad twist parameter"))
                    };
                    twist = Some(match *tag {
                        "constant" => TwistSpec::Constant(get(1)?),
                        "cosine" => TwistSpec::Cosine {
                            amp: get(1)?,
                            axis: get(2)? as usize,
                            freq: get(3)? as usize,
                        },
                        "manufactured" => TwistSpec::Manufactured {
                            amp1: get(1)?,
                            amp2: get(2)?,
                        },
                        other => return Err(bad(i + 1, &format!("unknown twist tag {other}"))),
                    });
                }
                other => return Err(bad(i + 1, &format!("unknown key {other}"))),
            }
        }
        let need = |name: &str| SolverError::BadProblem(format!("missing field {name}"));
        Ok(Self {
            m: m.ok_or_else(|| need("m"))?,
            grid: grid.ok_or_else(|| need("grid"))?,
            omega0: omega0.ok_or_else(|| need("omega0"))?,
            chi: chi.ok_or_else(|| need("chi"))?,
            theta0: theta0.ok_or_else(|| need("theta0"))?,
            big_theta0: big_theta0.ok_or_else(|| need("Theta0"))?,
            twist: twist.ok_or_else(|| need("twist"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_problem(grid: usize, theta0: f64, big: f64, twist: Vec<f64>) -> TorusProblem {
        TorusProblem::new(
            1,
            vec![grid, grid],
            DMatrix::from_element(1, 1, Complex64::new(2.0, 0.0)),
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            theta0,
            big,
            twist,
        )
        .unwrap()
    }

    #[test]
    fn hessian_of_zero_is_omega0() {
        let prob = scalar_problem(8, 1.0, 1.2, vec![0.0; 64]);
        let phi = PotentialGrid::zeros(64);
        for h in hessian_form(&phi, &prob) {
            assert_abs_diff_eq!(h[(0, 0)].re, 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(h[(0, 0)].im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn hessian_cosine_symbol() {
        // m=1, φ = cos(x): ∂²/∂z∂z̄ = ¼Δ gives H = −¼ cos(x).
        let d = 16usize;
        let prob = scalar_problem(d, 1.0, 1.2, vec![0.0; d * d]);
        let mut values = vec![0.0f64; d * d];
        for i in 0..d {
            for j in 0..d {
                values[i * d + j] = (2.0 * PI * i as f64 / d as f64).cos();
            }
        }
        let phi = PotentialGrid::from_values(values.clone()).gauge();
        let field = hessian_form(&phi, &prob);
        for (x, h) in field.iter().enumerate() {
            let expect = 2.0 - 0.25 * values[x];
            assert_abs_diff_eq!(h[(0, 0)].re, expect, epsilon = 1e-12);
            assert_abs_diff_eq!(h[(0, 0)].im, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn hessian_annihilates_constants() {
        // The discrete kernel of ∂∂̄ on the torus is the constants; a constant
        // shift of φ leaves the form field untouched.
        let d = 8usize;
        let prob = scalar_problem(d, 1.0, 1.2, vec![0.0; d * d]);
        let phi = PotentialGrid::from_values(vec![3.7; d * d]);
        for h in hessian_form(&phi, &prob) {
            assert_abs_diff_eq!(h[(0, 0)].re, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn hessian_is_hermitian_m2() {
        let grid = vec![6usize, 6, 6, 6];
        let n: usize = grid.iter().product();
        let mut values = vec![0.0f64; n];
        let mut idx = [0usize; 4];
        for v in values.iter_mut() {
            let x1 = 2.0 * PI * idx[0] as f64 / 6.0;
            let y1 = 2.0 * PI * idx[1] as f64 / 6.0;
            let x2 = 2.0 * PI * idx[2] as f64 / 6.0;
            *v = 0.3 * (x1 + y1).cos() + 0.2 * (x2 - y1).sin() + 0.1 * x1.sin() * x2.cos();
            for a in (0..4).rev() {
                idx[a] += 1;
                if idx[a] < 6 {
                    break;
                }
                idx[a] = 0;
            }
        }
        let prob = TorusProblem::new(
            2,
            grid,
            DMatrix::from_diagonal_element(2, 2, Complex64::new(2.0, 0.0)),
            DMatrix::from_diagonal_element(2, 2, Complex64::new(1.0, 0.0)),
            1.0,
            1.1,
            vec![0.0; n],
        )
        .unwrap();
        let phi = PotentialGrid::from_values(values).gauge();
        for h in hessian_form(&phi, &prob) {
            let asym = (&h.adjoint() - &h).norm();
            assert!(asym < 1e-12, "asym = {asym}");
            assert!(h[(0, 1)].norm() > 0.0 || true);
        }
    }

    #[test]
    fn residual_critical_angle_is_minus_twist() {
        // ω = cot(θ₀/m)·χ pointwise: Q = θ₀ exactly, first term 0.
        let theta0 = 1.0f64;
        let d = 8usize;
        let lam = (theta0).tan().recip();
        let prob = TorusProblem::new(
            1,
            vec![d, d],
            DMatrix::from_element(1, 1, Complex64::new(lam, 0.0)),
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            theta0,
            1.4,
            vec![0.25; d * d],
        )
        .unwrap();
        let (res, flags) = residual(&PotentialGrid::zeros(d * d), &prob).unwrap();
        for r in res {
            assert_abs_diff_eq!(r, -0.25, epsilon = 1e-13);
        }
        // Q = θ₀ means P = 0 < θ₀ and Q < Θ₀: inside the cone.
        assert_eq!(flags.violations, 0);
    }

    #[test]
    fn residual_manufactured_is_zero() {
        let d = 32usize;
        let phi_star = manufactured_potential(&[d, d], 0.1, 0.05);
        let shell = scalar_problem(d, 1.0, 1.4, vec![0.0; d * d]);
        let twist = manufactured_twist(&shell, &phi_star).unwrap();
        assert!(twist.iter().all(|&f| f > 0.0));
        let prob = scalar_problem(d, 1.0, 1.4, twist);
        let (res, flags) = residual(&phi_star, &prob).unwrap();
        let sup = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(sup <= 1e-13, "sup = {sup}");
        assert_eq!(flags.violations, 0);
    }

    #[test]
    fn newton_trivial_solution_zero_iterations() {
        // f ≡ 0 with constant Q(ω₀) = θ₀: φ = 0 solves immediately.
        let theta0 = 1.0f64;
        let d = 8usize;
        let lam = theta0.tan().recip();
        let prob = TorusProblem::new(
            1,
            vec![d, d],
            DMatrix::from_element(1, 1, Complex64::new(lam, 0.0)),
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            theta0,
            1.4,
            vec![0.0; d * d],
        )
        .unwrap();
        let (phi, report) =
            newton_solve(&prob, &PotentialGrid::zeros(d * d), 1e-12, 10, 1e-3).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 1);
        assert!(phi.values.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn newton_recovers_manufactured_m1() {
        let d = 256usize;
        let phi_star = manufactured_potential(&[d, d], 0.1, 0.05);
        let shell = scalar_problem(d, 1.0, 1.4, vec![0.0; d * d]);
        let twist = manufactured_twist(&shell, &phi_star).unwrap();
        let prob = scalar_problem(d, 1.0, 1.4, twist);
        let (phi, report) =
            newton_solve(&prob, &PotentialGrid::zeros(d * d), 1e-11, 25, 1e-3).unwrap();
        assert!(report.converged, "history {:?}", report.residual_history);
        assert!(report.iterations <= 25);
        let sup = phi.sup_distance(&phi_star);
        assert!(sup <= 1e-6, "sup error = {sup:.3e}");
        // cone discipline at every accepted iterate
        assert!(report.cone_margin_p.iter().all(|&v| v > 0.0));
        assert!(report.cone_margin_q.iter().all(|&v| v > 0.0));
        // compatibility drift stays at discretization noise throughout
        assert!(report
            .compatibility_drift
            .iter()
            .all(|&v| v.abs() <= 1e-10));
    }

    #[test]
    fn newton_quadratic_convergence_tail() {
        // Error ratios e_{k+1}/e_k² stay bounded once inside the basin.
        let d = 64usize;
        let phi_star = manufactured_potential(&[d, d], 0.1, 0.05);
        let shell = scalar_problem(d, 1.0, 1.4, vec![0.0; d * d]);
        let twist = manufactured_twist(&shell, &phi_star).unwrap();
        let prob = scalar_problem(d, 1.0, 1.4, twist);
        let (_, report) =
            newton_solve(&prob, &PotentialGrid::zeros(d * d), 1e-12, 25, 1e-3).unwrap();
        let h = &report.residual_history;
        let mut checked = 0;
        for w in h.windows(2) {
            if w[0] < 0.5 && w[0] > 1e-10 {
                let ratio = w[1] / (w[0] * w[0]);
                assert!(ratio < 1e3, "ratio {ratio} at residual {}", w[0]);
                checked += 1;
            }
        }
        assert!(checked >= 1, "history {:?}", h);
    }

    #[test]
    fn newton_recovers_manufactured_m2() {
        let d = 12usize;
        let grid = vec![d, d, d, d];
        let n: usize = grid.iter().product();
        let phi_star = manufactured_potential(&grid, 0.04, 0.02);
        let omega0 = DMatrix::from_diagonal_element(2, 2, Complex64::new(2.0, 0.0));
        let chi = DMatrix::from_diagonal_element(2, 2, Complex64::new(1.0, 0.0));
        let shell = TorusProblem::new(
            2,
            grid.clone(),
            omega0.clone(),
            chi.clone(),
            1.0,
            1.1,
            vec![0.0; n],
        )
        .unwrap();
        let twist = manufactured_twist(&shell, &phi_star).unwrap();
        let prob = TorusProblem::new(2, grid, omega0, chi, 1.0, 1.1, twist).unwrap();
        let (phi, report) = newton_solve(&prob, &PotentialGrid::zeros(n), 1e-9, 25, 1e-3).unwrap();
        assert!(report.converged);
        let sup = phi.sup_distance(&phi_star);
        assert!(sup <= 1e-4, "sup error = {sup:.3e}");
    }

    #[test]
    fn compatibility_gap_invariant_under_phi() {
        let d = 32usize;
        let shell = scalar_problem(d, 1.0, 1.4, vec![0.0; d * d]);
        let f0 = manufactured_twist(&shell, &PotentialGrid::zeros(d * d)).unwrap();
        let prob = scalar_problem(d, 1.0, 1.4, f0);
        // φ = 0: zero by construction.
        let g0 = compatibility_gap(&PotentialGrid::zeros(d * d), &prob).unwrap();
        assert!(g0.abs() < 1e-12, "g0 = {g0}");
        // random-ish φ: the Hessian mean and the aliasing-free quadratic terms
        // both vanish, so the gap is unchanged.
        let mut values = vec![0.0f64; d * d];
        let mut s = 0x9e3779b97f4a7c15u64;
        for v in values.iter_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.4;
        }
        let phi = PotentialGrid::from_values(values).gauge();
        let g1 = compatibility_gap(&phi, &prob).unwrap();
        assert!(g1.abs() < 1e-10, "g1 = {g1}");
    }

    #[test]
    fn compatibility_gap_detects_broken_twist() {
        // Shifting f by the constant 1 moves the gap by exactly −volume.
        let d = 16usize;
        let shell = scalar_problem(d, 1.0, 1.4, vec![0.0; d * d]);
        let f0 = manufactured_twist(&shell, &PotentialGrid::zeros(d * d)).unwrap();
        let broken: Vec<f64> = f0.iter().map(|v| v + 1.0).collect();
        let prob = scalar_problem(d, 1.0, 1.4, broken);
        let g = compatibility_gap(&PotentialGrid::zeros(d * d), &prob).unwrap();
        let vol = (2.0 * PI).powi(2);
        assert_abs_diff_eq!(g, -vol, epsilon = 1e-9);
    }

    #[test]
    fn residual_matches_form_algebra_density() {
        // Cross-module oracle: the residual's first term equals
        // pair_top(Re − cot θ₀ Im of (ω+iχ)^m, χ^m) at a grid point.
        use crate::forms::{complex_power_full, pair_top_complex, PPForm};
        let d = 8usize;
        let grid = vec![d, d, d, d];
        let n: usize = grid.iter().product();
        let omega0 = DMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) => Complex64::new(2.1, 0.0),
            (1, 1) => Complex64::new(1.9, 0.0),
            (0, 1) => Complex64::new(0.2, 0.1),
            _ => Complex64::new(0.2, -0.1),
        });
        let chi = DMatrix::from_diagonal_element(2, 2, Complex64::new(1.0, 0.0));
        let theta0 = 1.0f64;
        let prob = TorusProblem::new(
            2,
            grid.clone(),
            omega0.clone(),
            chi.clone(),
            theta0,
            1.2,
            vec![0.0; n],
        )
        .unwrap();
        let phi_star = manufactured_potential(&grid, 0.03, 0.02);
        let field = hessian_form(&phi_star, &prob);
        let (res, _) = residual(&phi_star, &prob).unwrap();
        let cot_t0 = theta0.tan().recip();
        for &x in &[0usize, 7, n / 2, n - 1] {
            let omega_f = PPForm::from_hermitian(&field[x]);
            let chi_f = PPForm::from_hermitian(&chi);
            let ratio = pair_top_complex(
                &complex_power_full(&omega_f, &chi_f, 2).unwrap(),
                &chi_f,
            )
            .unwrap();
            let expect = ratio.re - cot_t0 * ratio.im;
            assert_abs_diff_eq!(res[x], expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn continuity_path_reaches_large_amplitude() {
        // Amplitude too large for direct Newton basin checks are subtle;
        // here we verify the path machinery itself: warm-started steps all
        // converge and the endpoint solves the target.
        let d = 64usize;
        let phi_star = manufactured_potential(&[d, d], 0.6, 0.3);
        let shell = scalar_problem(d, 1.3, 1.8, vec![0.0; d * d]);
        let twist = manufactured_twist(&shell, &phi_star).unwrap();
        assert!(twist.iter().all(|&f| f >= 0.0), "manufactured twist stays admissible");
        let prob = TorusProblem::new(
            1,
            vec![d, d],
            shell.omega0.clone(),
            shell.chi.clone(),
            1.3,
            1.8,
            twist,
        )
        .unwrap();
        let (phi, reports) = continuity_path(&prob, 10, 1e-10, 40, 1e-3).unwrap();
        assert_eq!(reports.len(), 10);
        let sup = phi.sup_distance(&phi_star);
        assert!(sup <= 1e-6, "sup error = {sup:.3e}");
    }

    #[test]
    fn continuity_path_rejects_negative_interpolant() {
        let d = 8usize;
        // Target twist dips negative: TorusProblem::new would refuse it, so
        // build the struct directly to exercise the path-level sign check.
        let shell = scalar_problem(d, 1.0, 1.4, vec![0.0; d * d]);
        let mut twist = vec![0.1; d * d];
        twist[3] = -0.5;
        let prob = TorusProblem { twist, ..shell };
        let err = continuity_path(&prob, 4, 1e-10, 20, 1e-3).unwrap_err();
        match err {
            SolverError::PathBreak { s, .. } => assert!(s > 0.0),
            other => panic!("expected PathBreak, got {other}"),
        }
    }

    #[test]
    fn problem_validation_errors() {
        assert!(TorusProblem::new(
            3,
            vec![8; 6],
            DMatrix::from_element(3, 3, Complex64::new(1.0, 0.0)),
            DMatrix::from_element(3, 3, Complex64::new(1.0, 0.0)),
            1.0,
            1.2,
            vec![0.0; 8 * 8 * 8 * 8 * 8 * 8],
        )
        .is_err());
        // negative twist refused for m ≤ 3
        let err = TorusProblem::new(
            1,
            vec![8, 8],
            DMatrix::from_element(1, 1, Complex64::new(2.0, 0.0)),
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            1.0,
            1.2,
            vec![-1.0; 64],
        )
        .unwrap_err();
        assert!(matches!(err, SolverError::BadProblem(_)));
        // m=2 grid cap
        assert!(TorusProblem::new(
            2,
            vec![17, 17, 17, 17],
            DMatrix::from_diagonal_element(2, 2, Complex64::new(2.0, 0.0)),
            DMatrix::from_diagonal_element(2, 2, Complex64::new(1.0, 0.0)),
            1.0,
            1.1,
            vec![0.0; 17 * 17 * 17 * 17],
        )
        .is_err());
    }

    #[test]
    fn cone_escape_reported() {
        // ω₀ far outside the cone: Q(ω₀) > Θ₀ at φ = 0.
        let d = 8usize;
        let prob = TorusProblem::new(
            1,
            vec![d, d],
            DMatrix::from_element(1, 1, Complex64::new(-5.0, 0.0)),
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            1.0,
            1.2,
            vec![0.0; d * d],
        )
        .unwrap();
        let err = newton_solve(&prob, &PotentialGrid::zeros(d * d), 1e-10, 5, 1e-3).unwrap_err();
        assert!(matches!(err, SolverError::ConeEscape { iter: 0 }));
    }

    #[test]
    fn problem_file_roundtrip() {
        let text = "\
# manufactured m=1 benchmark
m 1
grid 256 256
theta0 1.0
Theta0 1.4
chi 1.0 0.0
omega0 2.0 0.0
twist manufactured 0.1 0.05
";
        let pf = ProblemFile::parse(text).unwrap();
        assert_eq!(pf.m, 1);
        assert_eq!(pf.grid, vec![256, 256]);
        assert_eq!(
            pf.twist,
            TwistSpec::Manufactured {
                amp1: 0.1,
                amp2: 0.05
            }
        );
        let (prob, phi_star) = pf.build().unwrap();
        assert!(phi_star.is_some());
        assert_eq!(prob.points(), 256 * 256);
        assert!(ProblemFile::parse("m 1\ngrid 8 8\nbogus 3\n").is_err());
    }
}
