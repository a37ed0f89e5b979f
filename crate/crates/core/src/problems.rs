//! PDE instances: manufactured linear and nonlinear problems with the exact
//! solution `u = w = e^{-t} x y` on the unit disk, and the double-well
//! phase-separation problem with random ±1 initial data.
//!
//! Strong form, bulk:
//!
//! ```text
//! ∂t u = Δw + f1          w = -Δu + f2 + F(u)
//! ```
//!
//! and on the boundary circle:
//!
//! ```text
//! ∂t u = Δ_Γ w - ∂ν w + f1_Γ     w = -Δ_Γ u + ∂ν u + f2_Γ + F(u)
//! ```

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::nodal_interpolate;
use crate::error::{Error, Result};
use crate::mesh::Mesh2D;
use crate::NodalVector;

/// A scalar field `(x, y, t) -> value`.
pub type ScalarField = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

fn field(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> ScalarField {
    Arc::new(f)
}

fn zero_field() -> ScalarField {
    field(|_, _, _| 0.0)
}

/// The nonlinearity `F = W'` applied in both bulk and surface equations.
#[derive(Clone)]
pub enum Nonlinearity {
    /// Linear problem, `F ≡ 0`.
    Zero,
    /// `W(u) = s (u² - 1)²`, `F(u) = 4 s u (u² - 1)`. With `s = 1/4` this is `u³ - u`.
    DoubleWell { strength: f64 },
    /// Arbitrary map, without a known potential.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Nonlinearity {
    pub fn cubic() -> Self {
        Nonlinearity::DoubleWell { strength: 0.25 }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::DoubleWell { strength } => 4.0 * strength * u * (u * u - 1.0),
            Nonlinearity::Custom(f) => f(u),
        }
    }

    /// The potential `W` with `W' = F`, when one is known.
    pub fn potential(&self, u: f64) -> Option<f64> {
        match self {
            Nonlinearity::Zero => Some(0.0),
            Nonlinearity::DoubleWell { strength } => {
                let s = u * u - 1.0;
                Some(strength * s * s)
            }
            Nonlinearity::Custom(_) => None,
        }
    }
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "Zero"),
            Nonlinearity::DoubleWell { strength } => write!(f, "DoubleWell {{ strength: {strength} }}"),
            Nonlinearity::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Linear,
    Nonlinear,
}

#[derive(Clone)]
pub enum InitialData {
    Field(ScalarField),
    /// Independent uniform draws from {-1, +1} per node.
    RandomSign {
        seed: u64,
    },
}

impl InitialData {
    pub fn realize(&self, mesh: &Mesh2D) -> Result<NodalVector> {
        match self {
            InitialData::Field(f) => nodal_interpolate(|x, y, t| f(x, y, t), mesh, 0.0),
            InitialData::RandomSign { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..mesh.num_nodes())
                    .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                    .collect())
            }
        }
    }
}

/// A complete problem instance.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub f1_bulk: ScalarField,
    pub f2_bulk: ScalarField,
    pub f1_surf: ScalarField,
    pub f2_surf: ScalarField,
    pub nonlinearity: Nonlinearity,
    pub initial: InitialData,
    pub exact_u: Option<ScalarField>,
    pub exact_w: Option<ScalarField>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("nonlinearity", &self.nonlinearity)
            .field("exact", &self.exact_u.is_some())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn kind(&self) -> ProblemKind {
        if self.nonlinearity.is_zero() {
            ProblemKind::Linear
        } else {
            ProblemKind::Nonlinear
        }
    }

    /// All forcings zero, no exact solution.
    pub fn homogeneous(name: &str, nonlinearity: Nonlinearity, initial: InitialData) -> Self {
        Self {
            name: name.to_owned(),
            f1_bulk: zero_field(),
            f2_bulk: zero_field(),
            f1_surf: zero_field(),
            f2_surf: zero_field(),
            nonlinearity,
            initial,
            exact_u: None,
            exact_w: None,
        }
    }

    /// Looks up one of the named problems used by the command line.
    pub fn by_name(name: &str, strength: f64, seed: u64) -> Option<Self> {
        match name {
            "linear" => Some(manufactured_linear()),
            "nonlinear" => Some(manufactured_nonlinear()),
            "evolution" => Some(evolution_problem(strength, seed)),
            _ => None,
        }
    }
}

fn exact(x: f64, y: f64, t: f64) -> f64 {
    (-t).exp() * x * y
}

/// Manufactured linear problem on the unit disk with `u = w = e^{-t} x y`.
///
/// `Δ(xy) = 0` in the bulk; on the unit circle `Δ_Γ(xy) = -4xy` and
/// `∂ν(xy) = 2xy`, which fixes the surface forcings.
pub fn manufactured_linear() -> ProblemSpec {
    ProblemSpec {
        name: "linear".into(),
        f1_bulk: field(|x, y, t| -exact(x, y, t)),
        f2_bulk: field(exact),
        f1_surf: field(|x, y, t| 5.0 * exact(x, y, t)),
        f2_surf: field(|x, y, t| -5.0 * exact(x, y, t)),
        nonlinearity: Nonlinearity::Zero,
        initial: InitialData::Field(field(exact)),
        exact_u: Some(field(exact)),
        exact_w: Some(field(exact)),
    }
}

/// Manufactured problem with `F(u) = u³ - u` and the same exact solution.
pub fn manufactured_nonlinear() -> ProblemSpec {
    let cubic = |u: f64| u * u * u - u;
    ProblemSpec {
        name: "nonlinear".into(),
        f2_bulk: field(move |x, y, t| {
            let u = exact(x, y, t);
            u - cubic(u)
        }),
        f2_surf: field(move |x, y, t| {
            let u = exact(x, y, t);
            -5.0 * u - cubic(u)
        }),
        nonlinearity: Nonlinearity::cubic(),
        ..manufactured_linear()
    }
}

/// Unforced phase separation with `W(u) = strength (u² - 1)²` and random ±1 data.
pub fn evolution_problem(strength: f64, seed: u64) -> ProblemSpec {
    ProblemSpec::homogeneous(
        "evolution",
        Nonlinearity::DoubleWell { strength },
        InitialData::RandomSign { seed },
    )
}

const FIRST_STEP: f64 = 1e-5;
const SECOND_STEP: f64 = 1e-3;

fn d1(g: impl Fn(f64) -> f64) -> f64 {
    (g(FIRST_STEP) - g(-FIRST_STEP)) / (2.0 * FIRST_STEP)
}

// fourth-order five-point second difference
fn d2(g: impl Fn(f64) -> f64) -> f64 {
    let h = SECOND_STEP;
    (-g(2.0 * h) + 16.0 * g(h) - 30.0 * g(0.0) + 16.0 * g(-h) - g(-2.0 * h)) / (12.0 * h * h)
}

fn laplacian(f: &ScalarField, x: f64, y: f64, t: f64) -> f64 {
    d2(|s| f(x + s, y, t)) + d2(|s| f(x, y + s, t))
}

/// Laplace-Beltrami on the circle through `(x, y)`, via the angle parametrisation.
fn laplace_beltrami(f: &ScalarField, x: f64, y: f64, t: f64) -> f64 {
    let r = x.hypot(y);
    let theta = y.atan2(x);
    d2(|s| f(r * (theta + s).cos(), r * (theta + s).sin(), t)) / (r * r)
}

fn normal_derivative(f: &ScalarField, x: f64, y: f64, t: f64) -> f64 {
    let r = x.hypot(y);
    let (nx, ny) = (x / r, y / r);
    d1(|s| f(x + s * nx, y + s * ny, t))
}

/// Largest absolute strong-form residual of the exact solution over the
/// given bulk points, boundary points and times.
///
/// All derivatives are finite differences, independent of the hand
/// derivation behind the forcing terms.
pub fn verify_manufactured(
    problem: &ProblemSpec,
    bulk_points: &[[f64; 2]],
    surface_points: &[[f64; 2]],
    times: &[f64],
) -> Result<f64> {
    let (u, w) = match (&problem.exact_u, &problem.exact_w) {
        (Some(u), Some(w)) => (u, w),
        _ => return Err(Error::MissingExactSolution(problem.name.clone())),
    };
    let big_f = |v: f64| problem.nonlinearity.eval(v);
    let mut worst = 0.0f64;
    for &t in times {
        for &[x, y] in bulk_points {
            let dt_u = d1(|s| u(x, y, t + s));
            let r1 = dt_u - laplacian(w, x, y, t) - (problem.f1_bulk)(x, y, t);
            let r2 = w(x, y, t) + laplacian(u, x, y, t) - (problem.f2_bulk)(x, y, t) - big_f(u(x, y, t));
            worst = worst.max(r1.abs()).max(r2.abs());
        }
        for &[x, y] in surface_points {
            let dt_u = d1(|s| u(x, y, t + s));
            let r1 = dt_u - laplace_beltrami(w, x, y, t) + normal_derivative(w, x, y, t) - (problem.f1_surf)(x, y, t);
            let r2 = w(x, y, t) + laplace_beltrami(u, x, y, t)
                - normal_derivative(u, x, y, t)
                - (problem.f2_surf)(x, y, t)
                - big_f(u(x, y, t));
            worst = worst.max(r1.abs()).max(r2.abs());
        }
    }
    Ok(worst)
}

/// Seeded sample points: `count` strictly inside the unit disk and `count` on the unit circle.
pub fn sample_points(count: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bulk = Vec::with_capacity(count);
    while bulk.len() < count {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if f64::hypot(p[0], p[1]) < 0.95 {
            bulk.push(p);
        }
    }
    let surface = (0..count)
        .map(|_| {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            [theta.cos(), theta.sin()]
        })
        .collect();
    (bulk, surface)
}
