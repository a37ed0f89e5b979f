//! BDF time stepping for the semidiscrete system.
//!
//! Linear problems use the classical k-step BDF method; problems with a
//! nonlinearity use the linearly implicit variant, where `F` is evaluated
//! at the extrapolant `Σ γ_j u^{n-j-1}`. Either way every step solves the
//! same constant block system, so the step matrix is factorised once.

use std::collections::VecDeque;

use crate::analysis::{gl_energy, total_mass};
use crate::assembly::{nodal_interpolate, nonlinearity_vector, Discretization};
use crate::error::{Error, Result};
use crate::mesh::Mesh2D;
use crate::problems::{Nonlinearity, ProblemSpec};
use crate::saddle::{build_step_matrix, OrderedLu, StepMatrix};
use crate::sparse::SparseMatrix;
use crate::NodalVector;

pub const MAX_ORDER: usize = 6;

fn check_order(k: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "BDF order must be in 1..={MAX_ORDER}, got {k}"
        )))
    }
}

fn binomial(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

fn lcm_up_to(k: usize) -> i64 {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=k as i64).fold(1, |acc, l| acc / gcd(acc, l) * l)
}

/// Coefficients `δ_0..δ_k` of `δ(ξ) = Σ_{l=1}^k (1/l)(1-ξ)^l`.
///
/// Each coefficient is an exact integer over `lcm(1..k)` before the final
/// division, so the result is correctly rounded.
pub fn bdf_coefficients(k: usize) -> Result<Vec<f64>> {
    check_order(k)?;
    let denom = lcm_up_to(k);
    Ok((0..=k)
        .map(|j| {
            let sign = if j % 2 == 0 { 1 } else { -1 };
            let numer: i64 = (j.max(1)..=k).map(|l| denom / l as i64 * binomial(l, j)).sum();
            (sign * numer) as f64 / denom as f64
        })
        .collect())
}

/// Coefficients `γ_0..γ_{k-1}` of `γ(ξ) = (1 - (1-ξ)^k) / ξ`, i.e. `γ_l = (-1)^l C(k, l+1)`.
pub fn extrapolation_coefficients(k: usize) -> Result<Vec<f64>> {
    check_order(k)?;
    Ok((0..k)
        .map(|l| {
            let c = binomial(k, l + 1) as f64;
            if l % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdfScheme {
    pub k: usize,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl BdfScheme {
    pub fn new(k: usize) -> Result<Self> {
        Ok(Self {
            k,
            delta: bdf_coefficients(k)?,
            gamma: extrapolation_coefficients(k)?,
        })
    }
}

fn check_step_inputs(
    scheme: &BdfScheme,
    tau: f64,
    step_matrix: &StepMatrix,
    mass: &SparseMatrix,
    history: &[&[f64]],
    b1: &[f64],
    b2: &[f64],
) -> Result<()> {
    if history.len() != scheme.k {
        return Err(Error::InvalidArgument(format!(
            "BDF{} needs {} history vectors, got {}",
            scheme.k,
            scheme.k,
            history.len()
        )));
    }
    let expected = scheme.delta[0] / tau;
    if (step_matrix.delta0_over_tau() - expected).abs() > 1e-12 * expected {
        return Err(Error::InvalidArgument(format!(
            "step matrix was built for δ0/τ = {}, scheme needs {expected}",
            step_matrix.delta0_over_tau()
        )));
    }
    let n = mass.dim();
    Error::check_len(n, step_matrix.block_dim())?;
    for h in history {
        Error::check_len(n, h.len())?;
    }
    Error::check_len(n, b1.len())?;
    Error::check_len(n, b2.len())
}

fn solve_step(
    scheme: &BdfScheme,
    tau: f64,
    step_matrix: &StepMatrix,
    mass: &SparseMatrix,
    history: &[&[f64]],
    b1: &[f64],
    b2: &[f64],
) -> Result<(NodalVector, NodalVector)> {
    let n = mass.dim();
    let mut combo = vec![0.0; n];
    for (delta, u) in scheme.delta[1..].iter().zip(history) {
        for (c, v) in combo.iter_mut().zip(u.iter()) {
            *c += delta * v;
        }
    }
    let m_combo = mass.mul_vec(&combo)?;
    let mut rhs = Vec::with_capacity(2 * n);
    rhs.extend(b1.iter().zip(&m_combo).map(|(b, m)| b - m / tau));
    rhs.extend_from_slice(b2);
    let mut x = step_matrix.solve(&rhs)?;
    let w = x.split_off(n);
    Ok((x, w))
}

/// One step of the classical BDF method.
///
/// `history` holds `u^{n-1}, ..., u^{n-k}`, newest first.
pub fn step_linear(
    scheme: &BdfScheme,
    tau: f64,
    step_matrix: &StepMatrix,
    mass: &SparseMatrix,
    history: &[&[f64]],
    b1: &[f64],
    b2: &[f64],
) -> Result<(NodalVector, NodalVector)> {
    check_step_inputs(scheme, tau, step_matrix, mass, history, b1, b2)?;
    solve_step(scheme, tau, step_matrix, mass, history, b1, b2)
}

/// `Σ γ_j u^{n-j-1}` for a newest-first history.
pub fn extrapolate(scheme: &BdfScheme, history: &[&[f64]]) -> NodalVector {
    let mut out = vec![0.0; history.first().map_or(0, |h| h.len())];
    for (gamma, u) in scheme.gamma.iter().zip(history) {
        for (o, v) in out.iter_mut().zip(u.iter()) {
            *o += gamma * v;
        }
    }
    out
}

/// One step of the linearly implicit BDF method: `b2` gains `M F(extrapolant)`.
#[allow(clippy::too_many_arguments)]
pub fn step_nonlinear(
    scheme: &BdfScheme,
    tau: f64,
    step_matrix: &StepMatrix,
    mass: &SparseMatrix,
    history: &[&[f64]],
    b1: &[f64],
    b2: &[f64],
    nonlinearity: &Nonlinearity,
) -> Result<(NodalVector, NodalVector)> {
    check_step_inputs(scheme, tau, step_matrix, mass, history, b1, b2)?;
    if nonlinearity.is_zero() {
        return solve_step(scheme, tau, step_matrix, mass, history, b1, b2);
    }
    let predicted = extrapolate(scheme, history);
    let f = nonlinearity_vector(mass, |u| nonlinearity.eval(u), &predicted)?;
    let b2: Vec<f64> = b2.iter().zip(&f).map(|(b, f)| b + f).collect();
    solve_step(scheme, tau, step_matrix, mass, history, b1, &b2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// Interpolate the exact solution at `t = 0, τ, ..., (k-1)τ`.
    Exact,
    /// Interpolate the initial data and march with fine BDF1 substeps.
    Bootstrap,
}

/// Assembled forcing vectors `(b1, b2)` at time `t`.
pub fn forcing(
    problem: &ProblemSpec,
    mesh: &Mesh2D,
    disc: &Discretization,
    t: f64,
) -> Result<(NodalVector, NodalVector)> {
    let sample = |f: &crate::problems::ScalarField| nodal_interpolate(|x, y, t| f(x, y, t), mesh, t);
    let b1 = disc.coupled_load(&sample(&problem.f1_bulk)?, &sample(&problem.f1_surf)?)?;
    let b2 = disc.coupled_load(&sample(&problem.f2_bulk)?, &sample(&problem.f2_surf)?)?;
    Ok((b1, b2))
}

/// BDF1 substeps per coarse step in bootstrap mode.
///
/// `m = ⌈τ^{-(k-1)/k}⌉`, clamped to `1..=1000`.
pub fn bootstrap_substeps(tau: f64, k: usize) -> usize {
    let m = tau.powf(-((k - 1) as f64) / k as f64).ceil();
    (m as usize).clamp(1, 1000)
}

/// Starting pairs `(u^j, w^j)` for `j = 0..k`, oldest first.
pub fn starting_values(
    problem: &ProblemSpec,
    mesh: &Mesh2D,
    disc: &Discretization,
    tau: f64,
    k: usize,
    mode: StartMode,
) -> Result<Vec<(NodalVector, NodalVector)>> {
    check_order(k)?;
    match mode {
        StartMode::Exact => {
            let (u, w) = match (&problem.exact_u, &problem.exact_w) {
                (Some(u), Some(w)) => (u, w),
                _ => return Err(Error::MissingExactSolution(problem.name.clone())),
            };
            (0..k)
                .map(|j| {
                    let t = j as f64 * tau;
                    Ok((
                        nodal_interpolate(|x, y, t| u(x, y, t), mesh, t)?,
                        nodal_interpolate(|x, y, t| w(x, y, t), mesh, t)?,
                    ))
                })
                .collect()
        }
        StartMode::Bootstrap => bootstrap(problem, mesh, disc, tau, k),
    }
}

fn bootstrap(
    problem: &ProblemSpec,
    mesh: &Mesh2D,
    disc: &Discretization,
    tau: f64,
    k: usize,
) -> Result<Vec<(NodalVector, NodalVector)>> {
    let u0 = problem.initial.realize(mesh)?;
    // algebraic constraint: M w⁰ = A u⁰ + b₂(0) + M F(u⁰)
    let (_, b2) = forcing(problem, mesh, disc, 0.0)?;
    let mut rhs = disc.stiffness.mul_vec(&u0)?;
    for (r, b) in rhs.iter_mut().zip(&b2) {
        *r += b;
    }
    if !problem.nonlinearity.is_zero() {
        let f = nonlinearity_vector(&disc.mass, |u| problem.nonlinearity.eval(u), &u0)?;
        for (r, v) in rhs.iter_mut().zip(&f) {
            *r += v;
        }
    }
    let w0 = OrderedLu::factor_rcm(&disc.mass)?.solve(&rhs)?;

    let mut out = vec![(u0, w0)];
    if k == 1 {
        return Ok(out);
    }
    let substeps = bootstrap_substeps(tau, k);
    let sigma = tau / substeps as f64;
    let euler = BdfScheme::new(1)?;
    let step_matrix = build_step_matrix(&disc.mass, &disc.stiffness, euler.delta[0] / sigma)?;
    let mut u = out[0].0.clone();
    for j in 1..k {
        let mut w = Vec::new();
        for s in 1..=substeps {
            let t = (j - 1) as f64 * tau + s as f64 * sigma;
            let (b1, b2) = forcing(problem, mesh, disc, t)?;
            let (un, wn) = step_nonlinear(
                &euler,
                sigma,
                &step_matrix,
                &disc.mass,
                &[&u],
                &b1,
                &b2,
                &problem.nonlinearity,
            )?;
            u = un;
            w = wn;
        }
        out.push((u.clone(), w));
    }
    Ok(out)
}

/// Time history of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau: f64,
    pub times: Vec<f64>,
    pub u: Vec<NodalVector>,
    pub w: Vec<NodalVector>,
    /// `1ᵀ M uⁿ` per stored time.
    pub mass: Vec<f64>,
    /// Ginzburg-Landau energy per stored time, when the potential is known.
    pub energy: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial state")
    }

    pub fn final_state(&self) -> (&[f64], &[f64]) {
        (self.u.last().unwrap(), self.w.last().unwrap())
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Index of the stored time closest to `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let n = (t / self.tau).round();
        if n < 0.0 || (n * self.tau - t).abs() > 1e-9 * self.tau.max(t.abs()) {
            return None;
        }
        let n = n as usize;
        (n < self.times.len()).then_some(n)
    }
}

/// Number of steps of size `tau` that reach `t_final`.
pub fn step_count(tau: f64, t_final: f64) -> Result<usize> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "final time must be nonnegative, got {t_final}"
        )));
    }
    let n = (t_final / tau).round();
    if (n * tau - t_final).abs() > 1e-12 * t_final.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "τ = {tau} does not divide T = {t_final}"
        )));
    }
    Ok(n as usize)
}

/// Integrates `problem` from 0 to `t_final` on `mesh`.
pub fn run(
    problem: &ProblemSpec,
    mesh: &Mesh2D,
    tau: f64,
    t_final: f64,
    scheme: &BdfScheme,
    start: StartMode,
) -> Result<Trajectory> {
    let disc = Discretization::assemble(mesh)?;
    run_with(problem, mesh, &disc, tau, t_final, scheme, start)
}

/// As [`run`], reusing an assembled discretisation.
pub fn run_with(
    problem: &ProblemSpec,
    mesh: &Mesh2D,
    disc: &Discretization,
    tau: f64,
    t_final: f64,
    scheme: &BdfScheme,
    start: StartMode,
) -> Result<Trajectory> {
    let steps = step_count(tau, t_final)?;
    let k = scheme.k;
    let starts = starting_values(problem, mesh, disc, tau, k, start)?;

    let nonlinearity = &problem.nonlinearity;
    let has_energy = nonlinearity.potential(0.0).is_some();
    let energy_of = |u: &[f64]| {
        gl_energy(
            &disc.stiffness,
            &disc.mass,
            |v| nonlinearity.potential(v).unwrap_or(0.0),
            u,
        )
    };

    let mut traj = Trajectory {
        tau,
        times: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        w: Vec::with_capacity(steps + 1),
        mass: Vec::with_capacity(steps + 1),
        energy: has_energy.then(|| Vec::with_capacity(steps + 1)),
    };
    let record = |traj: &mut Trajectory, n: usize, u: NodalVector, w: NodalVector| -> Result<()> {
        if u.iter().chain(&w).any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: n });
        }
        traj.times.push(n as f64 * tau);
        traj.mass.push(total_mass(&disc.mass, &u)?);
        if let Some(e) = traj.energy.as_mut() {
            e.push(energy_of(&u)?);
        }
        traj.u.push(u);
        traj.w.push(w);
        Ok(())
    };

    let mut history: VecDeque<NodalVector> = VecDeque::with_capacity(k);
    for (n, (u, w)) in starts.into_iter().enumerate().take(steps + 1) {
        history.push_front(u.clone());
        record(&mut traj, n, u, w)?;
    }
    if steps < k {
        return Ok(traj);
    }

    let step_matrix = build_step_matrix(&disc.mass, &disc.stiffness, scheme.delta[0] / tau)?;
    for n in k..=steps {
        let (b1, b2) = forcing(problem, mesh, disc, n as f64 * tau)?;
        let refs: Vec<&[f64]> = history.iter().map(Vec::as_slice).collect();
        let (u, w) = step_nonlinear(scheme, tau, &step_matrix, &disc.mass, &refs, &b1, &b2, nonlinearity).map_err(
            |e| match e {
                Error::NonFinite { .. } => Error::Diverged { step: n },
                e => e,
            },
        )?;
        history.pop_back();
        history.push_front(u.clone());
        record(&mut traj, n, u, w)?;
    }
    Ok(traj)
}
