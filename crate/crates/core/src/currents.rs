//! Chart-level potential toolbox: mollification against a plateau kernel,
//! sup-convolution, the log-slope Lelong proxy, the comparison constant η,
//! and regularized-maximum gluing.
//!
//! Charts are uniform real 2m-grids over the cube [−4R, 4R]^{2m}; smoothing
//! and sup queries are restricted to the Euclidean ball B_{3R} so every
//! kernel window stays inside the sampled cube.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

/// Clamp for sampled log poles; floor cells are excluded from quadrature
/// with mass renormalization.
pub const POLE_FLOOR: f64 = -1e12;

#[derive(Debug, Error)]
pub enum CurrentError {
    #[error("resolution violated: need r < R and grid spacing ≤ r/8 (r = {r}, h = {h}, R = {radius})")]
    Resolution { r: f64, h: f64, radius: f64 },
    #[error("separation < 2·eps at grid index {index}")]
    SeparationViolated { index: usize },
    #[error("bad chart: {0}")]
    BadChart(String),
}

// ---------------------------------------------------------------------------
// Mollifier kernel
// ---------------------------------------------------------------------------

/// Radial profile: constant plateau on [0, 1/2], smooth decay to 0 at 1 via
/// ρ ∝ exp(−1/(1−s(t)²)) with a smooth step s.
pub fn default_profile(t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    let s = smooth_step(2.0 * t - 1.0);
    if s >= 1.0 {
        return 0.0;
    }
    (-1.0 / (1.0 - s * s)).exp()
}

fn bump(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// C^∞ step: 0 for x ≤ 0, 1 for x ≥ 1.
fn smooth_step(x: f64) -> f64 {
    let a = bump(x);
    let b = bump(1.0 - x);
    a / (a + b)
}

/// Radial mollifier on the unit ball of ℝ^{2m}: unit mass, plateau near 0.
#[derive(Debug, Clone, Copy)]
pub struct MollifierKernel {
    /// Complex dimension m (real dimension 2m).
    pub m: usize,
    /// Unnormalized radial profile.
    pub profile: fn(f64) -> f64,
    /// Normalization constant: ρ(t) = c·profile(t).
    pub c: f64,
}

/// Surface area of the unit (d−1)-sphere in ℝ^d for d = 2m: 2π^m/(m−1)!.
pub fn sphere_area(m: usize) -> f64 {
    let mut fact = 1.0f64;
    for k in 1..m {
        fact *= k as f64;
    }
    2.0 * PI.powi(m as i32) / fact
}

/// Composite Simpson on [0,1] (nodes must be odd and ≥ 3).
fn simpson(f: impl Fn(f64) -> f64, nodes: usize) -> f64 {
    let n = if nodes % 2 == 0 { nodes + 1 } else { nodes };
    let h = 1.0 / (n - 1) as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

impl MollifierKernel {
    pub fn new(m: usize) -> Self {
        Self::with_profile(m, default_profile)
    }

    pub fn with_profile(m: usize, profile: fn(f64) -> f64) -> Self {
        let raw = sphere_area(m)
            * simpson(|t| profile(t) * t.powi(2 * m as i32 - 1), 4001);
        Self {
            m,
            profile,
            c: 1.0 / raw,
        }
    }

    /// Normalized radial density ρ(t).
    pub fn rho(&self, t: f64) -> f64 {
        self.c * (self.profile)(t)
    }

    /// ∫_{B₁} ρ(|y|) dVol by quadrature with `nodes` radial nodes.
    pub fn mass(&self, nodes: usize) -> f64 {
        sphere_area(self.m) * simpson(|t| self.rho(t) * t.powi(2 * self.m as i32 - 1), nodes)
    }

    /// Second moment c_ρ = ∫_{B₁} ρ(|y|)·|y|² dVol.
    pub fn second_moment(&self) -> f64 {
        sphere_area(self.m)
            * simpson(|t| self.rho(t) * t.powi(2 * self.m as i32 + 1), 4001)
    }
}

/// η = 3^{2m−1}/2^{2m−3}·log 2 + Vol(∂B₁)·∫₀¹ log(1/t)·t^{2m−1}·ρ(t) dt.
pub fn eta_constant(m: usize, kernel: &MollifierKernel) -> f64 {
    eta_constant_with_nodes(m, kernel, 4001)
}

pub fn eta_constant_with_nodes(m: usize, kernel: &MollifierKernel, nodes: usize) -> f64 {
    let lead = 3.0f64.powi(2 * m as i32 - 1) / 2.0f64.powi(2 * m as i32 - 3) * 2.0f64.ln();
    // Substitute t = u² to damp the log singularity at 0:
    // ∫₀¹ log(1/t)·t^{2m−1}·ρ(t) dt = ∫₀¹ 4·u^{4m−1}·log(1/u)·ρ(u²) du.
    let integrand = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            4.0 * u.powi(4 * m as i32 - 1) * (1.0 / u).ln() * kernel.rho(u * u)
        }
    };
    lead + sphere_area(m) * simpson(integrand, nodes)
}

// ---------------------------------------------------------------------------
// Chart potentials
// ---------------------------------------------------------------------------

/// A potential sampled on the uniform grid over [−4R, 4R]^{2m}.
#[derive(Debug, Clone)]
pub struct ChartPotential {
    pub m: usize,
    pub radius: f64,
    /// Points per axis (odd, so the origin is a grid point).
    pub n_per_axis: usize,
    pub values: Vec<f64>,
    pub psh_declared: bool,
}

impl ChartPotential {
    pub fn spacing(&self) -> f64 {
        8.0 * self.radius / (self.n_per_axis - 1) as f64
    }

    pub fn axes(&self) -> usize {
        2 * self.m
    }

    pub fn len(&self) -> usize {
        self.n_per_axis.pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples `f` at every grid point, clamping at the pole floor.
    pub fn from_fn(
        m: usize,
        radius: f64,
        n_per_axis: usize,
        psh_declared: bool,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self, CurrentError> {
        if n_per_axis < 3 || n_per_axis % 2 == 0 {
            return Err(CurrentError::BadChart(format!(
                "n_per_axis must be odd and ≥ 3, got {n_per_axis}"
            )));
        }
        if !(radius > 0.0) {
            return Err(CurrentError::BadChart("radius must be positive".into()));
        }
        let axes = 2 * m;
        let n = n_per_axis.pow(axes as u32);
        let h = 8.0 * radius / (n_per_axis - 1) as f64;
        let mut values = Vec::with_capacity(n);
        let mut idx = vec![0usize; axes];
        let mut coord = vec![0.0f64; axes];
        for _ in 0..n {
            for a in 0..axes {
                coord[a] = -4.0 * radius + idx[a] as f64 * h;
            }
            let v = f(&coord);
            values.push(if v.is_finite() && v > POLE_FLOOR {
                v
            } else {
                POLE_FLOOR
            });
            for a in (0..axes).rev() {
                idx[a] += 1;
                if idx[a] < n_per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(Self {
            m,
            radius,
            n_per_axis,
            values,
            psh_declared,
        })
    }

    /// Flat index of the grid point nearest to `point` (cube coordinates).
    pub fn index_of(&self, point: &[f64]) -> Result<usize, CurrentError> {
        if point.len() != self.axes() {
            return Err(CurrentError::BadChart("point dimension mismatch".into()));
        }
        let h = self.spacing();
        let mut flat = 0usize;
        for &x in point {
            let i = ((x + 4.0 * self.radius) / h).round();
            if i < 0.0 || i as usize >= self.n_per_axis {
                return Err(CurrentError::BadChart(format!(
                    "point coordinate {x} outside the chart cube"
                )));
            }
            flat = flat * self.n_per_axis + i as usize;
        }
        Ok(flat)
    }

    pub fn origin_index(&self) -> usize {
        let mid = (self.n_per_axis - 1) / 2;
        let mut flat = 0usize;
        for _ in 0..self.axes() {
            flat = flat * self.n_per_axis + mid;
        }
        flat
    }

    fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut idx = vec![0usize; self.axes()];
        for a in (0..self.axes()).rev() {
            idx[a] = rem % self.n_per_axis;
            rem /= self.n_per_axis;
        }
        idx
    }

    fn coords(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(flat)
            .iter()
            .map(|&i| -4.0 * self.radius + i as f64 * h)
            .collect()
    }

    /// Euclidean distance from the grid point to the origin.
    pub fn dist_to_origin(&self, flat: usize) -> f64 {
        self.coords(flat).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn check_resolution(&self, r: f64) -> Result<(), CurrentError> {
        let h = self.spacing();
        if !(r > 0.0) || r >= self.radius || h > r / 8.0 + 1e-12 {
            return Err(CurrentError::Resolution {
                r,
                h,
                radius: self.radius,
            });
        }
        Ok(())
    }

    /// Iterates kernel-window offsets: every multi-offset o with |o·h| ≤ rad.
    fn for_window(&self, rad: f64, mut f: impl FnMut(&[isize], f64)) {
        let h = self.spacing();
        let w = (rad / h).floor() as isize;
        let axes = self.axes();
        let mut off = vec![-w; axes];
        loop {
            let d2: f64 = off.iter().map(|&o| (o as f64 * h).powi(2)).sum();
            let d = d2.sqrt();
            if d <= rad + 1e-12 {
                f(&off, d);
            }
            let mut a = axes;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                off[a] += 1;
                if off[a] <= w {
                    break;
                }
                off[a] = -w;
            }
        }
    }

    fn offset_flat(&self, flat: usize, off: &[isize]) -> Option<usize> {
        let idx = self.multi_index(flat);
        let mut out = 0usize;
        for (a, &o) in off.iter().enumerate() {
            let i = idx[a] as isize + o;
            if i < 0 || i as usize >= self.n_per_axis {
                return None;
            }
            out = out * self.n_per_axis + i as usize;
        }
        Some(out)
    }
}

// ---------------------------------------------------------------------------
// Mollification, sup-convolution, Lelong proxy
// ---------------------------------------------------------------------------

/// Discrete T^{(r)} at one grid point: kernel-weighted window average with
/// floor cells excluded and the mass renormalized.
pub fn mollify_at(
    chart: &ChartPotential,
    kernel: &MollifierKernel,
    r: f64,
    flat: usize,
) -> Result<f64, CurrentError> {
    chart.check_resolution(r)?;
    if chart.dist_to_origin(flat) > 3.0 * chart.radius + 1e-12 {
        return Err(CurrentError::BadChart(
            "mollify queries are restricted to B_{3R}".into(),
        ));
    }
    let mut acc = 0.0f64;
    let mut mass = 0.0f64;
    chart.for_window(r, |off, d| {
        let w = (kernel.profile)(d / r);
        if w <= 0.0 {
            return;
        }
        if let Some(src) = chart.offset_flat(flat, off) {
            let v = chart.values[src];
            if v > POLE_FLOOR {
                acc += w * v;
                mass += w;
            }
        }
    });
    if mass <= 0.0 {
        return Err(CurrentError::BadChart(
            "kernel window contains no usable samples".into(),
        ));
    }
    Ok(acc / mass)
}

/// Full-field mollification on B_{3R}; outside the valid ball the original
/// samples are kept.
pub fn mollify(
    chart: &ChartPotential,
    kernel: &MollifierKernel,
    r: f64,
) -> Result<ChartPotential, CurrentError> {
    chart.check_resolution(r)?;
    let mut out = chart.clone();
    for flat in 0..chart.len() {
        if chart.dist_to_origin(flat) <= 3.0 * chart.radius + 1e-12 {
            out.values[flat] = mollify_at(chart, kernel, r, flat)?;
        }
    }
    Ok(out)
}

/// Discrete sup over grid points within distance r.
pub fn sup_at(chart: &ChartPotential, r: f64, flat: usize) -> Result<f64, CurrentError> {
    chart.check_resolution(r)?;
    if chart.dist_to_origin(flat) > 3.0 * chart.radius + 1e-12 {
        return Err(CurrentError::BadChart(
            "sup queries are restricted to B_{3R}".into(),
        ));
    }
    let mut best = f64::NEG_INFINITY;
    chart.for_window(r, |off, _| {
        if let Some(src) = chart.offset_flat(flat, off) {
            best = best.max(chart.values[src]);
        }
    });
    Ok(best)
}

/// ψ_r on B_{3R}.
pub fn sup_convolution(chart: &ChartPotential, r: f64) -> Result<ChartPotential, CurrentError> {
    chart.check_resolution(r)?;
    let mut out = chart.clone();
    for flat in 0..chart.len() {
        if chart.dist_to_origin(flat) <= 3.0 * chart.radius + 1e-12 {
            out.values[flat] = sup_at(chart, r, flat)?;
        }
    }
    Ok(out)
}

/// ν(z, r) = (ψ_{¾R}(z) − ψ_r(z)) / (log(¾R) − log r).
pub fn lelong_proxy(chart: &ChartPotential, flat: usize, r: f64) -> Result<f64, CurrentError> {
    if !(r > 0.0 && r < chart.radius / 2.0) {
        return Err(CurrentError::Resolution {
            r,
            h: chart.spacing(),
            radius: chart.radius,
        });
    }
    chart.check_resolution(r)?;
    let big = 0.75 * chart.radius;
    let hi = sup_at(chart, big, flat)?;
    let lo = sup_at(chart, r, flat)?;
    Ok((hi - lo) / (big.ln() - r.ln()))
}

/// The three comparison quantities at one point:
/// gap_half = ψ_r − ψ_{r/2}, gap_moll = ψ_r − T^{(r)}, ν = lelong_proxy.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonRow {
    pub gap_half: f64,
    pub gap_moll: f64,
    pub nu: f64,
}

pub fn comparison_check(
    chart: &ChartPotential,
    kernel: &MollifierKernel,
    flat: usize,
    r: f64,
) -> Result<ComparisonRow, CurrentError> {
    let psi_r = sup_at(chart, r, flat)?;
    let psi_half = sup_at(chart, r / 2.0, flat)?;
    let moll = mollify_at(chart, kernel, r, flat)?;
    let nu = lelong_proxy(chart, flat, r)?;
    Ok(ComparisonRow {
        gap_half: psi_r - psi_half,
        gap_moll: psi_r - moll,
        nu,
    })
}

// ---------------------------------------------------------------------------
// Regularized maximum
// ---------------------------------------------------------------------------

/// Smoothed absolute value: φ_ε(x) = |x| for |x| ≥ ε, convex, even,
/// φ_ε(0) = 5ε/16 (convolution of |·| with the quartic kernel
/// (15/16ε)(1 − (x/ε)²)² in closed form).
pub fn smooth_abs(x: f64, eps: f64) -> f64 {
    let u = x / eps;
    if u.abs() >= 1.0 {
        return x.abs();
    }
    // A(u) = ∫_{−1}^{u} k, B(u) = ∫_{−1}^{u} v·k for k(v) = (15/16)(1−v²)²
    let a = (15.0 / 16.0) * (u - 2.0 * u.powi(3) / 3.0 + u.powi(5) / 5.0 + 8.0 / 15.0);
    let b = (15.0 / 16.0) * (u * u / 2.0 - u.powi(4) / 2.0 + u.powi(6) / 6.0 - 1.0 / 6.0);
    eps * (u * (2.0 * a - 1.0) - 2.0 * b)
}

/// Two-argument regularized maximum M_ε(a, b) = (a+b)/2 + φ_ε((a−b)/2).
pub fn smooth_max_pair(a: f64, b: f64, eps: f64) -> f64 {
    0.5 * (a + b) + smooth_abs(0.5 * (a - b), eps)
}

/// n-ary fold with ε split across the folds so max ≤ M ≤ max + eps.
pub fn smooth_max(values: &[f64], eps: f64) -> f64 {
    match values {
        [] => f64::NEG_INFINITY,
        [v] => *v,
        _ => {
            let e = eps / (values.len() - 1) as f64;
            values[1..]
                .iter()
                .fold(values[0], |acc, &v| smooth_max_pair(acc, v, e))
        }
    }
}

/// One input to the gluing: per-gridpoint domain flags and values.
#[derive(Debug, Clone)]
pub struct FlaggedPotential {
    pub defined: Vec<bool>,
    pub values: Vec<f64>,
}

/// Glues the inputs by regularized maximum over the potentials defined at
/// each point.  Precondition (checked): wherever a potential's domain ends —
/// a defined point with an undefined axis-neighbor — the best other defined
/// value must exceed it by ≥ 2·eps, so the glued field never depends on a
/// potential near its own boundary.
pub fn regularized_max(
    template: &ChartPotential,
    potentials: &[FlaggedPotential],
    eps: f64,
) -> Result<ChartPotential, CurrentError> {
    if potentials.is_empty() {
        return Err(CurrentError::BadChart("no potentials to glue".into()));
    }
    if !(eps > 0.0) {
        return Err(CurrentError::BadChart("eps must be positive".into()));
    }
    let n = template.len();
    for p in potentials {
        if p.defined.len() != n || p.values.len() != n {
            return Err(CurrentError::BadChart("potential size mismatch".into()));
        }
    }
    let axes = template.axes();
    // Separation check on domain boundaries.
    for (pi, p) in potentials.iter().enumerate() {
        for flat in 0..n {
            if !p.defined[flat] {
                continue;
            }
            let mut boundary = false;
            for a in 0..axes {
                for s in [-1isize, 1] {
                    let mut off = vec![0isize; axes];
                    off[a] = s;
                    match template.offset_flat(flat, &off) {
                        Some(nb) => {
                            if !p.defined[nb] {
                                boundary = true;
                            }
                        }
                        None => {} // cube edge is not a gluing boundary
                    }
                }
            }
            if !boundary {
                continue;
            }
            let best_other = potentials
                .iter()
                .enumerate()
                .filter(|(qi, q)| *qi != pi && q.defined[flat])
                .map(|(_, q)| q.values[flat])
                .fold(f64::NEG_INFINITY, f64::max);
            if best_other < p.values[flat] + 2.0 * eps {
                return Err(CurrentError::SeparationViolated { index: flat });
            }
        }
    }
    let mut out = template.clone();
    let mut stack = Vec::with_capacity(potentials.len());
    for flat in 0..n {
        stack.clear();
        for p in potentials {
            if p.defined[flat] {
                stack.push(p.values[flat]);
            }
        }
        if stack.is_empty() {
            return Err(CurrentError::BadChart(format!(
                "no potential defined at grid index {flat}"
            )));
        }
        out.values[flat] = smooth_max(&stack, eps);
    }
    Ok(out)
}

/// Complex Hessian ∂²ψ/∂z∂z̄ = ¼Δψ of an m=1 chart by central differences;
/// used by the gluing angle test and exposed for the CLI report.
pub fn chart_complex_hessian(
    chart: &ChartPotential,
    flat: usize,
) -> Result<DMatrix<Complex64>, CurrentError> {
    if chart.m != 1 {
        return Err(CurrentError::BadChart(
            "chart Hessian implemented for m = 1".into(),
        ));
    }
    let h = chart.spacing();
    let mut lap = 0.0f64;
    let center = chart.values[flat];
    for a in 0..2 {
        for s in [-1isize, 1] {
            let mut off = [0isize; 2];
            off[a] = s;
            let nb = chart
                .offset_flat(flat, &off)
                .ok_or_else(|| CurrentError::BadChart("Hessian needs interior point".into()))?;
            lap += chart.values[nb];
        }
        lap -= 2.0 * center;
    }
    lap /= h * h;
    Ok(DMatrix::from_element(
        1,
        1,
        Complex64::new(0.25 * lap, 0.0),
    ))
}
