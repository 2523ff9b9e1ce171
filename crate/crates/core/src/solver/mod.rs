//! Plug-and-play ADMM with whiteness-driven penalty selection and stopping.
//!
//! Each iteration forms `x̃ = z − u`, picks the penalty that makes the data
//! residual `Hx − y` as white as possible, solves the quadratic x-update in
//! closed form, hands `z̃ = x + u` to the denoiser and updates the scaled
//! dual. The loop ends once the residual whiteness stops improving.

mod data_term;
mod golden;

use std::fmt::Write as _;
use std::time::Instant;

pub use data_term::{x_update, DataTerm};
pub use golden::{golden_section, max_steps, BracketRule, GoldenResult, GOLDEN_DELTA};

use crate::cube::{HsiCube, KernelStack};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::spectral::FreqCube;
use crate::whiteness::whiteness_measure;

/// Starting point `x₀` (also used for `z₀`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// The observation itself.
    #[default]
    Observation,
    /// `Hᵀy`.
    Adjoint,
    Zeros,
}

/// How the penalty is chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RhoPolicy {
    /// Golden-section minimization of residual whiteness.
    #[default]
    Whiteness,
    /// A constant penalty.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// Stop when whiteness stops decreasing, or its relative change drops below `zeta`.
    #[default]
    Whiteness,
    /// Run exactly `max_iters` iterations.
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub bracket_a: f64,
    pub bracket_b: f64,
    pub epsilon: f64,
    pub zeta: f64,
    pub max_iters: usize,
    pub init: InitMode,
    pub bracket_rule: BracketRule,
    pub rho: RhoPolicy,
    pub stop: StopRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            bracket_a: 0.0,
            bracket_b: 10.0,
            epsilon: 0.001,
            zeta: 0.0002,
            max_iters: 50,
            init: InitMode::Observation,
            bracket_rule: BracketRule::Minimizing,
            rho: RhoPolicy::Whiteness,
            stop: StopRule::Whiteness,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.bracket_a >= 0.0 && self.bracket_a < self.bracket_b && self.bracket_b.is_finite())
        {
            return Err(Error::spec(format!(
                "bracket must satisfy 0 <= a < b, got [{}, {}]",
                self.bracket_a, self.bracket_b
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::spec("epsilon must be positive"));
        }
        if self.zeta.is_nan() || self.zeta <= 0.0 {
            return Err(Error::spec("zeta must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::spec("max_iters must be at least 1"));
        }
        if let RhoPolicy::Fixed(r) = self.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::spec("fixed penalty must be positive"));
            }
        }
        Ok(())
    }
}

/// Why the loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// The whiteness stopping rule fired.
    Converged,
    /// `max_iters` iterations ran without the stopping rule firing.
    MaxIters,
    /// The starting point already reproduces the observation exactly.
    ExactFit,
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub rho_star: f64,
    pub whiteness: f64,
    pub data_fidelity: f64,
    /// `‖x_k − z_k‖`.
    pub primal_residual: f64,
    pub elapsed_ms: f64,
}

/// Iterates and history of an ADMM solve.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: HsiCube,
    pub z: HsiCube,
    pub u: HsiCube,
    pub k: usize,
    pub rho_history: Vec<f64>,
    /// `W(r_0), W(r_1), …`; one longer than `rho_history`.
    pub w_history: Vec<f64>,
    pub initial_fidelity: f64,
    pub records: Vec<IterationRecord>,
    pub status: SolveStatus,
}

impl SolverState {
    /// CSV with columns `iteration,rho_star,whiteness,data_fidelity,elapsed_ms`.
    ///
    /// Row 0 describes the starting point and leaves `rho_star` empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,rho_star,whiteness,data_fidelity,elapsed_ms\n");
        if let Some(w0) = self.w_history.first() {
            let _ = writeln!(s, "0,,{:e},{:e},0", w0, self.initial_fidelity);
        }
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:.3}",
                r.iteration, r.rho_star, r.whiteness, r.data_fidelity, r.elapsed_ms
            );
        }
        s
    }
}

/// Stopping test on consecutive residual whiteness values.
pub fn should_stop(w_prev: f64, w_curr: f64, zeta: f64) -> bool {
    w_curr >= w_prev || (w_curr - w_prev).abs() / w_curr < zeta
}

/// Minimizes residual whiteness over the penalty bracket for the x-update
/// driven by `x_tilde_hat`. Returns `(ρ*, W(ρ*))`.
pub fn estimate_rho_spectrum(
    data: &DataTerm,
    x_tilde_hat: &FreqCube,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    let res = golden_section(
        |rho| data.whiteness_at(x_tilde_hat, rho),
        opts.bracket_a,
        opts.bracket_b,
        opts.epsilon,
        opts.bracket_rule,
    )?;
    let w = data.whiteness_at(x_tilde_hat, res.argmin)?;
    Ok((res.argmin, w))
}

/// Whiteness-optimal penalty for one x-update. Returns `(ρ*, W(ρ*))`.
pub fn estimate_rho(
    y: &HsiCube,
    kernels: &KernelStack,
    x_tilde: &HsiCube,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    opts.validate()?;
    let data = DataTerm::new(y, kernels)?;
    let xt = data.transform(x_tilde)?;
    estimate_rho_spectrum(&data, &xt, opts)
}

/// Runs the plug-and-play loop and returns the final `x` with the full trace.
pub fn deconvolve(
    y: &HsiCube,
    kernels: &KernelStack,
    denoiser: &dyn Denoiser,
    opts: &SolverOptions,
) -> Result<(HsiCube, SolverState)> {
    opts.validate()?;
    let start = Instant::now();
    let data = DataTerm::new(y, kernels)?;
    let x0 = match opts.init {
        InitMode::Observation => y.clone(),
        InitMode::Adjoint => crate::spectral::apply_adjoint(y, kernels)?,
        InitMode::Zeros => HsiCube::zeros(y.bands(), y.rows(), y.cols())?,
    };
    let r0 = data.residual(&x0)?;
    let mut state = SolverState {
        z: x0.clone(),
        u: HsiCube::zeros(y.bands(), y.rows(), y.cols())?,
        x: x0,
        k: 0,
        rho_history: Vec::new(),
        w_history: Vec::new(),
        initial_fidelity: r0.norm(),
        records: Vec::new(),
        status: SolveStatus::MaxIters,
    };
    if r0.norm_sq() == 0.0 {
        state.status = SolveStatus::ExactFit;
        return Ok((state.x.clone(), state));
    }
    let mut w_prev = whiteness_measure(&r0)?.w;
    state.w_history.push(w_prev);

    for k in 0..opts.max_iters {
        let x_tilde = state.z.sub(&state.u)?;
        let xt_hat = data.transform(&x_tilde)?;
        let rho = match opts.rho {
            RhoPolicy::Whiteness => estimate_rho_spectrum(&data, &xt_hat, opts)?.0,
            RhoPolicy::Fixed(r) => r,
        };
        let x_hat = data.solve_spectrum(&xt_hat, rho)?;
        let w = data.whiteness_of_spectrum(&x_hat)?;
        let fidelity = data.fidelity_of_spectrum(&x_hat);
        let x = data.plan().ifft2(&x_hat)?;

        let z_tilde = x.add(&state.u)?;
        let z = denoiser.denoise(&z_tilde)?;
        z.ensure_same_shape(&x)?;
        if !z.is_finite() {
            return Err(Error::Data("denoiser produced non-finite values".into()));
        }
        let primal = x.sub(&z)?;
        state.u = state.u.add(&primal)?;
        state.x = x;
        state.z = z;
        state.k = k + 1;
        state.rho_history.push(rho);
        state.w_history.push(w);
        state.records.push(IterationRecord {
            iteration: k + 1,
            rho_star: rho,
            whiteness: w,
            data_fidelity: fidelity,
            primal_residual: primal.norm(),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        if opts.stop == StopRule::Whiteness && should_stop(w_prev, w, opts.zeta) {
            state.status = SolveStatus::Converged;
            break;
        }
        w_prev = w;
    }
    Ok((state.x.clone(), state))
}
