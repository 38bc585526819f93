//! Edge-averaged finite element (EAFE) stiffness assembly.
//!
//! Each edge `E = (x_i, x_j)`, `i < j`, contributes the exponentially fitted
//! flux `c_ij y_j − c_ji y_i` tested against `v_j − v_i` and weighted by the
//! summed cotangent weights `ω_E = Σ_T ω_E^T`. On Delaunay meshes every
//! off-diagonal entry is nonpositive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_weighted_mass, triangle_gradients, CoefficientField};
use crate::mesh::{delaunay_check, Point, TriMesh};
use crate::quadrature::QuadratureRule;
use crate::sparse::CsrMatrix;

/// `x / (eˣ − 1)`, continuously extended by `B(0) = 1`.
pub fn bernoulli(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Data("Bernoulli function of NaN".into()));
    }
    Ok(bernoulli_unchecked(x))
}

fn bernoulli_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x > 700.0 {
        // x e^{-x} underflows smoothly; also covers +inf
        if x.is_infinite() {
            0.0
        } else {
            x * (-x).exp()
        }
    } else {
        // for x < -745, exp_m1 is exactly -1 and the result is -x
        x / x.exp_m1()
    }
}

/// `ω_E^T = −|T| ∇λ_i·∇λ_j` for the edge of triangle `t` opposite local vertex `local_edge`.
pub fn edge_weight(mesh: &TriMesh, t: usize, local_edge: usize) -> Result<f64> {
    if t >= mesh.num_triangles() || local_edge > 2 {
        return Err(Error::Index(format!("triangle {t}, local edge {local_edge}")));
    }
    let (grads, area) = triangle_gradients(&mesh.triangle_points(t))?;
    let (i, j) = ((local_edge + 1) % 3, (local_edge + 2) % 3);
    Ok(-area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]))
}

/// All three edge weights of a triangle, indexed by the opposite local vertex.
pub fn triangle_edge_weights(tri: &[Point; 3]) -> Result<[f64; 3]> {
    let (grads, area) = triangle_gradients(tri)?;
    Ok(std::array::from_fn(|e| {
        let (i, j) = ((e + 1) % 3, (e + 2) % 3);
        -area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1])
    }))
}

/// `ω_E = Σ_{T ⊃ E} ω_E^T` for every global edge.
pub fn summed_edge_weights(mesh: &TriMesh) -> Result<Vec<f64>> {
    let mut summed = vec![0.0; mesh.num_edges()];
    for t in 0..mesh.num_triangles() {
        let weights = triangle_edge_weights(&mesh.triangle_points(t))?;
        for (e, &edge) in mesh.triangle_edges(t).iter().enumerate() {
            summed[edge] += weights[e];
        }
    }
    Ok(summed)
}

/// Two-point fluxes `(c_ij, c_ji)` of an edge with averaged coefficients:
/// `c_ij = ε_E B(ζ_E·(x_i − x_j)/ε_E)` multiplies `y(x_j)` and
/// `c_ji = ε_E B(ζ_E·(x_j − x_i)/ε_E)` multiplies `y(x_i)`.
pub fn edge_flux_coefficients(eps_e: f64, zeta_e: [f64; 2], xi: Point, xj: Point) -> Result<(f64, f64)> {
    if !(eps_e > 0.0) {
        return Err(Error::Coefficient(format!("edge diffusion must be positive, got {eps_e:e}")));
    }
    let s = (zeta_e[0] * (xj[0] - xi[0]) + zeta_e[1] * (xj[1] - xi[1])) / eps_e;
    Ok((eps_e * bernoulli(-s)?, eps_e * bernoulli(s)?))
}

#[derive(Clone, Debug)]
pub struct EdgeData {
    pub endpoints: [usize; 2],
    /// `τ_E = x_j − x_i`.
    pub tangent: [f64; 2],
    pub eps: f64,
    pub zeta: [f64; 2],
    /// `ω_E^T` for each adjacent triangle, in the edge's triangle order.
    pub weights: Vec<f64>,
}

impl EdgeData {
    pub fn weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Per-edge coefficient averages and weights.
pub fn build_edge_data(mesh: &TriMesh, coeff: &CoefficientField) -> Result<Vec<EdgeData>> {
    coeff.validate()?;
    let samples: Vec<(f64, [f64; 2], f64)> =
        mesh.vertices().iter().map(|&x| coeff.sample(x)).collect::<Result<_>>()?;
    let mut data: Vec<EdgeData> = mesh
        .edges()
        .iter()
        .map(|edge| {
            let [i, j] = edge.vertices;
            let (xi, xj) = (mesh.vertex(i), mesh.vertex(j));
            let (ei, zi, _) = samples[i];
            let (ej, zj, _) = samples[j];
            EdgeData {
                endpoints: [i, j],
                tangent: [xj[0] - xi[0], xj[1] - xi[1]],
                eps: 0.5 * (ei + ej),
                zeta: [0.5 * (zi[0] + zj[0]), 0.5 * (zi[1] + zj[1])],
                weights: Vec::with_capacity(2),
            }
        })
        .collect();
    for t in 0..mesh.num_triangles() {
        let weights = triangle_edge_weights(&mesh.triangle_points(t))?;
        for (e, &edge) in mesh.triangle_edges(t).iter().enumerate() {
            data[edge].weights.push(weights[e]);
        }
    }
    Ok(data)
}

/// How the reaction term `∫ γ y v` enters the EAFE operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactionMode {
    /// Diagonal `γ(x_i) |patch_i| / 3`.
    #[default]
    Lumped,
    /// Full `∫ γ φ_j φ_i` by quadrature.
    Consistent,
}

#[derive(Clone, Debug)]
pub struct EafeOperator {
    /// Entries `a_h(φ_j, φ_i)` over all vertices.
    pub matrix: CsrMatrix,
    /// Edges failing the Delaunay check; nonempty means monotonicity may be lost.
    pub delaunay_violations: Vec<usize>,
}

impl EafeOperator {
    pub fn monotonicity_warning(&self) -> bool {
        !self.delaunay_violations.is_empty()
    }
}

pub fn assemble_eafe_stiffness(mesh: &TriMesh, coeff: &CoefficientField) -> Result<EafeOperator> {
    assemble_eafe_stiffness_with(mesh, coeff, ReactionMode::Lumped)
}

pub fn assemble_eafe_stiffness_with(
    mesh: &TriMesh,
    coeff: &CoefficientField,
    reaction: ReactionMode,
) -> Result<EafeOperator> {
    let edges = build_edge_data(mesh, coeff)?;
    let n = mesh.num_vertices();
    let mut triplets = Vec::with_capacity(4 * edges.len() + n);
    for edge in &edges {
        let [i, j] = edge.endpoints;
        let w = edge.weight();
        let (c_ij, c_ji) = edge_flux_coefficients(edge.eps, edge.zeta, mesh.vertex(i), mesh.vertex(j))?;
        triplets.push((j, j, w * c_ij));
        triplets.push((j, i, -w * c_ji));
        triplets.push((i, j, -w * c_ij));
        triplets.push((i, i, w * c_ji));
    }
    let mut matrix = match reaction {
        ReactionMode::Lumped => {
            for (i, patch) in mesh.patch_areas().into_iter().enumerate() {
                let gamma = (coeff.gamma)(mesh.vertex(i));
                if gamma != 0.0 {
                    triplets.push((i, i, gamma * patch / 3.0));
                }
            }
            CsrMatrix::from_triplets(n, n, &triplets)?
        }
        ReactionMode::Consistent => {
            let reaction = assemble_weighted_mass(mesh, &coeff.gamma, &QuadratureRule::default())?;
            triplets.extend(reaction.triplets());
            CsrMatrix::from_triplets(n, n, &triplets)?
        }
    };
    // drop nothing; keep explicit zeros so the pattern is mesh-determined
    matrix = matrix.scale(1.0);
    let delaunay_violations = delaunay_check(mesh)?.violating_edges;
    Ok(EafeOperator { matrix, delaunay_violations })
}
