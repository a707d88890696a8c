//! Numerical laboratory for the supercritical deformed Hermitian–Yang–Mills
//! (dHYM) operator calculus.
//!
//! The crate is organized around five subsystems:
//!
//! * [`hermitian`] — Lagrangian angle functionals `P`/`Q` on Hermitian pairs,
//!   the cone `Γ`, and the matrix-level inequalities behind them.
//! * [`forms`] — exact (p,q)-form arithmetic on ℂⁿ at a point, powering the
//!   positivity lemma for `Im(e^{-iθ}(ω+iχ)^p)`.
//! * [`ring`] — finite-dimensional toy intersection rings, the phase `θ₀`,
//!   and Nakai–Moishezon style stability functionals along test families.
//! * [`solver`] — a spectral Newton/continuity solver for the f-twisted dHYM
//!   equation on flat complex tori, plus discrete fiber averaging.
//! * [`currents`] — mollification, sup-convolution, Lelong-number proxies and
//!   regularized-maximum gluing on Euclidean chart grids.
//!
//! All randomized sweeps are fully seeded and deterministic.

pub mod calibration;
pub mod currents;
pub mod fiber;
pub mod forms;
pub mod hermitian;
pub mod ring;
pub mod solver;
pub mod sweeps;

pub use hermitian::{arccot, AngleBudget, HermitianError, RelativePair};
