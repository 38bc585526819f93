//! Discrete optimality system for the distributed control problem.
//!
//! Unknowns are ordered `[p; y]` over interior vertices. The block operator is
//! `[[Aᵀ, −M], [−M, −βA]]` with `A_ij = a_h(φ_j, φ_i)` and `M` the full mass.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eafe::{assemble_eafe_stiffness_with, ReactionMode};
use crate::error::{Error, Result};
use crate::fem::{assemble_galerkin_stiffness, assemble_load, assemble_mass, CoefficientField, ScalarField};
use crate::mesh::TriMesh;
use crate::problems::Manufactured;
use crate::sparse::{CsrMatrix, LuFactorization};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Eafe,
    Galerkin,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Eafe => "eafe",
            Scheme::Galerkin => "galerkin",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eafe" => Ok(Scheme::Eafe),
            "galerkin" => Ok(Scheme::Galerkin),
            _ => Err(Error::Parse(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Clone)]
pub enum DataMode {
    /// Tracking term `−(y_d, q)` in the adjoint equation.
    DesiredState(ScalarField),
    /// Right-hand sides `(f, q) + (g, z)`.
    General { f: ScalarField, g: ScalarField },
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub coeff: CoefficientField,
    pub data: DataMode,
    /// Boundary trace of the state; zero when absent.
    pub dirichlet_y: Option<ScalarField>,
    /// Boundary trace of the adjoint; zero when absent.
    pub dirichlet_p: Option<ScalarField>,
    pub reaction: ReactionMode,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.data {
            DataMode::DesiredState(_) => "desired-state",
            DataMode::General { .. } => "general",
        };
        f.debug_struct("ProblemSpec")
            .field("coeff", &self.coeff)
            .field("data", &mode)
            .field("dirichlet_y", &self.dirichlet_y.is_some())
            .field("dirichlet_p", &self.dirichlet_p.is_some())
            .field("reaction", &self.reaction)
            .finish()
    }
}

impl ProblemSpec {
    pub fn desired_state(coeff: CoefficientField, y_d: ScalarField) -> Self {
        ProblemSpec {
            coeff,
            data: DataMode::DesiredState(y_d),
            dirichlet_y: None,
            dirichlet_p: None,
            reaction: ReactionMode::default(),
        }
    }

    pub fn general(coeff: CoefficientField, f: ScalarField, g: ScalarField) -> Self {
        ProblemSpec {
            coeff,
            data: DataMode::General { f, g },
            dirichlet_y: None,
            dirichlet_p: None,
            reaction: ReactionMode::default(),
        }
    }

    /// General mode with forcing and boundary traces taken from an exact pair.
    pub fn manufactured(problem: &Manufactured) -> Self {
        Self::general(problem.coefficients(), problem.f.clone(), problem.g.clone())
            .with_dirichlet(Some(problem.y.clone()), Some(problem.p.clone()))
    }

    pub fn with_dirichlet(mut self, y: Option<ScalarField>, p: Option<ScalarField>) -> Self {
        self.dirichlet_y = y;
        self.dirichlet_p = p;
        self
    }

    pub fn with_reaction(mut self, reaction: ReactionMode) -> Self {
        self.reaction = reaction;
        self
    }
}

/// Full-vertex stiffness matrix of the chosen scheme.
pub fn assemble_operator(mesh: &TriMesh, coeff: &CoefficientField, scheme: Scheme, reaction: ReactionMode) -> Result<CsrMatrix> {
    match scheme {
        Scheme::Eafe => Ok(assemble_eafe_stiffness_with(mesh, coeff, reaction)?.matrix),
        Scheme::Galerkin => assemble_galerkin_stiffness(mesh, coeff),
    }
}

#[derive(Clone, Debug)]
pub struct BlockSaddleSystem {
    /// Stiffness restricted to interior vertices.
    pub a: CsrMatrix,
    /// Mass restricted to interior vertices.
    pub m: CsrMatrix,
    pub rhs_top: Vec<f64>,
    pub rhs_bottom: Vec<f64>,
    pub beta: f64,
    /// Interior vertex ids, in unknown order.
    pub interior: Vec<usize>,
    /// Nodal Dirichlet data extended by zero, over all vertices.
    pub p_lift: Vec<f64>,
    pub y_lift: Vec<f64>,
}

impl BlockSaddleSystem {
    pub fn operator(&self) -> Result<CsrMatrix> {
        let neg_m = self.m.scale(-1.0);
        CsrMatrix::block2x2(&self.a.transpose(), &neg_m, &neg_m, &self.a.scale(-self.beta))
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.rhs_top.iter().chain(&self.rhs_bottom).copied().collect()
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }
}

fn boundary_lift(mesh: &TriMesh, trace: Option<&ScalarField>) -> Result<Vec<f64>> {
    let mut lift = vec![0.0; mesh.num_vertices()];
    if let Some(trace) = trace {
        for (i, slot) in lift.iter_mut().enumerate() {
            if mesh.is_boundary(i) {
                let v = trace(mesh.vertex(i));
                if !v.is_finite() {
                    return Err(Error::Data(format!("non-finite Dirichlet value at vertex {i}")));
                }
                *slot = v;
            }
        }
    }
    Ok(lift)
}

fn restrict(full: &[f64], interior: &[usize]) -> Vec<f64> {
    interior.iter().map(|&i| full[i]).collect()
}

pub fn assemble_system(mesh: &TriMesh, spec: &ProblemSpec, scheme: Scheme) -> Result<BlockSaddleSystem> {
    spec.coeff.validate()?;
    let beta = spec.coeff.beta;
    let a_full = assemble_operator(mesh, &spec.coeff, scheme, spec.reaction)?;
    let m_full = assemble_mass(mesh);
    let n = mesh.num_vertices();
    if a_full.nrows() != n || m_full.nrows() != n {
        return Err(Error::Assembly(format!(
            "operator sizes {}/{} do not match {n} vertices",
            a_full.nrows(),
            m_full.nrows()
        )));
    }
    let interior = mesh.interior_vertices();

    let (mut top, mut bottom) = match &spec.data {
        DataMode::DesiredState(y_d) => (assemble_load(mesh, y_d)?.iter().map(|v| -v).collect(), vec![0.0; n]),
        DataMode::General { f, g } => (assemble_load(mesh, f)?, assemble_load(mesh, g)?),
    };

    let p_lift = boundary_lift(mesh, spec.dirichlet_p.as_ref())?;
    let y_lift = boundary_lift(mesh, spec.dirichlet_y.as_ref())?;
    if spec.dirichlet_p.is_some() || spec.dirichlet_y.is_some() {
        let at_p = a_full.transpose().mul_vec(&p_lift);
        let a_y = a_full.mul_vec(&y_lift);
        let m_p = m_full.mul_vec(&p_lift);
        let m_y = m_full.mul_vec(&y_lift);
        for i in 0..n {
            top[i] -= at_p[i] - m_y[i];
            bottom[i] -= -m_p[i] - beta * a_y[i];
        }
    }

    Ok(BlockSaddleSystem {
        a: a_full.submatrix(&interior, &interior),
        m: m_full.submatrix(&interior, &interior),
        rhs_top: restrict(&top, &interior),
        rhs_bottom: restrict(&bottom, &interior),
        beta,
        interior,
        p_lift,
        y_lift,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionPair {
    pub p_bar: Vec<f64>,
    pub y_bar: Vec<f64>,
    pub u_bar: Vec<f64>,
    /// Certified relative residual of the saddle-point solve.
    pub residual: f64,
    pub scheme: Scheme,
    pub beta: f64,
}

/// `u = −p/β`.
pub fn recover_control(p_bar: &[f64], beta: f64) -> Vec<f64> {
    p_bar.iter().map(|p| -p / beta).collect()
}

/// Solves an assembled system and scatters the result back onto all vertices.
pub fn solve_system(system: &BlockSaddleSystem, scheme: Scheme) -> Result<SolutionPair> {
    let k = system.operator()?;
    let (x, residual) = LuFactorization::new(&k)?.solve(&system.rhs())?;
    let ni = system.num_interior();
    let mut p_bar = system.p_lift.clone();
    let mut y_bar = system.y_lift.clone();
    for (slot, &v) in system.interior.iter().enumerate() {
        p_bar[v] = x[slot];
        y_bar[v] = x[ni + slot];
    }
    let u_bar = recover_control(&p_bar, system.beta);
    Ok(SolutionPair { p_bar, y_bar, u_bar, residual, scheme, beta: system.beta })
}

pub fn solve(mesh: &TriMesh, spec: &ProblemSpec, scheme: Scheme) -> Result<SolutionPair> {
    solve_system(&assemble_system(mesh, spec, scheme)?, scheme)
}
