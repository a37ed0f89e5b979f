//! Discrete norms, convergence orders and physical diagnostics.

use crate::assembly::{nodal_interpolate, Discretization};
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::mesh::Mesh2D;
use crate::problems::ProblemSpec;
use crate::sparse::SparseMatrix;

fn quadratic_form(matrix: &SparseMatrix, e: &[f64]) -> Result<f64> {
    let q = matrix.bilinear(e, e)?;
    // round-off floor for a form that should be nonnegative
    let scale: f64 = (0..e.len())
        .map(|i| e[i].abs() * matrix.row(i).map(|(j, v)| (v * e[j]).abs()).sum::<f64>())
        .sum();
    if q < -1e-12 * scale {
        return Err(Error::NegativeQuadraticForm(q));
    }
    Ok(q.max(0.0))
}

/// `sqrt(eᵀ M e)`, the combined `L²(Ω) x L²(Γ)` norm.
pub fn l2_norm(mass: &SparseMatrix, e: &[f64]) -> Result<f64> {
    Ok(quadratic_form(mass, e)?.sqrt())
}

/// `sqrt(eᵀ (A + M) e)`, the combined bulk-surface H¹ norm.
pub fn h1_norm(mass: &SparseMatrix, stiffness: &SparseMatrix, e: &[f64]) -> Result<f64> {
    let m = quadratic_form(mass, e)?;
    let a = quadratic_form(stiffness, e)?;
    Ok((m + a).sqrt())
}

/// `1ᵀ M u`.
pub fn total_mass(mass: &SparseMatrix, u: &[f64]) -> Result<f64> {
    Ok(mass.mul_vec(u)?.iter().sum())
}

/// Ginzburg-Landau energy `½ uᵀ A u + 1ᵀ M W(u)`, with `W` applied at the nodes.
pub fn gl_energy<W>(stiffness: &SparseMatrix, mass: &SparseMatrix, potential: W, u: &[f64]) -> Result<f64>
where
    W: Fn(f64) -> f64,
{
    let gradient = 0.5 * stiffness.bilinear(u, u)?;
    let w: Vec<f64> = u.iter().map(|&v| potential(v)).collect();
    Ok(gradient + total_mass(mass, &w)?)
}

/// Final-time errors of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub tau: f64,
    pub nodes: usize,
    pub err_l2: f64,
    pub err_h1: f64,
    pub err_w_l2: f64,
    pub err_w_h1: f64,
}

/// Compares the last state of `trajectory` with the nodal interpolant of the exact solution.
pub fn final_error(
    trajectory: &Trajectory,
    problem: &ProblemSpec,
    mesh: &Mesh2D,
    disc: &Discretization,
) -> Result<ErrorReport> {
    let (exact_u, exact_w) = match (&problem.exact_u, &problem.exact_w) {
        (Some(u), Some(w)) => (u, w),
        _ => return Err(Error::MissingExactSolution(problem.name.clone())),
    };
    let t = trajectory.final_time();
    let (u, w) = trajectory.final_state();
    let iu = nodal_interpolate(|x, y, t| exact_u(x, y, t), mesh, t)?;
    let iw = nodal_interpolate(|x, y, t| exact_w(x, y, t), mesh, t)?;
    let eu: Vec<f64> = u.iter().zip(&iu).map(|(a, b)| a - b).collect();
    let ew: Vec<f64> = w.iter().zip(&iw).map(|(a, b)| a - b).collect();
    Ok(ErrorReport {
        h: mesh.mesh_size(),
        tau: trajectory.tau,
        nodes: mesh.num_nodes(),
        err_l2: l2_norm(&disc.mass, &eu)?,
        err_h1: h1_norm(&disc.mass, &disc.stiffness, &eu)?,
        err_w_l2: l2_norm(&disc.mass, &ew)?,
        err_w_h1: h1_norm(&disc.mass, &disc.stiffness, &ew)?,
    })
}

/// Experimental order between consecutive refinements.
///
/// `None` marks an undefined order (one of the errors is exactly zero).
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<Option<f64>>> {
    Error::check_len(errors.len(), hs.len())?;
    if errors.len() < 2 {
        return Err(Error::InvalidArgument("need at least two errors".into()));
    }
    if errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidArgument("errors must be finite and nonnegative".into()));
    }
    if hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) || hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "mesh sizes must be positive and strictly decreasing".into(),
        ));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| {
            if e[0] == 0.0 || e[1] == 0.0 {
                None
            } else {
                Some((e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            }
        })
        .collect())
}
