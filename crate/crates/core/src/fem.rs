//! P1 Lagrange ingredients: barycentric gradients, mass matrix, standard
//! Galerkin stiffness, load vectors and nodal interpolation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh, MIN_AREA};
use crate::quadrature::QuadratureRule;
use crate::sparse::CsrMatrix;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

pub fn constant_scalar(c: f64) -> ScalarField {
    Arc::new(move |_| c)
}

pub fn constant_vector(v: [f64; 2]) -> VectorField {
    Arc::new(move |_| v)
}

/// Step used for central-difference divergence when none is supplied.
const DIVERGENCE_STEP: f64 = 1e-6;

/// Diffusion `ε`, convection `ζ`, reaction `γ` and the cost weight `β`,
/// together with the lower bounds the caller claims for them.
#[derive(Clone)]
pub struct CoefficientField {
    pub eps: ScalarField,
    pub zeta: VectorField,
    pub gamma: ScalarField,
    /// Analytic `∇·ζ`; central differences are used when absent.
    pub div_zeta: Option<ScalarField>,
    pub beta: f64,
    pub eps_floor: f64,
    /// Claimed lower bound `γ₀` of `γ − ½∇·ζ`; zero disables the check.
    pub gamma_assumption: f64,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("beta", &self.beta)
            .field("eps_floor", &self.eps_floor)
            .field("gamma_assumption", &self.gamma_assumption)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    /// Constant coefficients with `β = 1`, `ε₀ = ε` and no `γ₀` claim.
    pub fn constant(eps: f64, zeta: [f64; 2], gamma: f64) -> Self {
        CoefficientField {
            eps: constant_scalar(eps),
            zeta: constant_vector(zeta),
            gamma: constant_scalar(gamma),
            div_zeta: Some(constant_scalar(0.0)),
            beta: 1.0,
            eps_floor: eps,
            gamma_assumption: 0.0,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_gamma_assumption(mut self, gamma0: f64) -> Self {
        self.gamma_assumption = gamma0;
        self
    }

    pub fn divergence(&self, x: Point) -> f64 {
        match &self.div_zeta {
            Some(div) => div(x),
            None => {
                let h = DIVERGENCE_STEP;
                let dx = ((self.zeta)([x[0] + h, x[1]])[0] - (self.zeta)([x[0] - h, x[1]])[0]) / (2.0 * h);
                let dy = ((self.zeta)([x[0], x[1] + h])[1] - (self.zeta)([x[0], x[1] - h])[1]) / (2.0 * h);
                dx + dy
            }
        }
    }

    /// Samples all coefficients at `x`, checking the declared bounds.
    pub fn sample(&self, x: Point) -> Result<(f64, [f64; 2], f64)> {
        let eps = (self.eps)(x);
        let zeta = (self.zeta)(x);
        let gamma = (self.gamma)(x);
        if !(eps.is_finite() && zeta[0].is_finite() && zeta[1].is_finite() && gamma.is_finite()) {
            return Err(Error::Coefficient(format!("non-finite coefficient at {x:?}")));
        }
        if eps < self.eps_floor {
            return Err(Error::Coefficient(format!("eps = {eps:e} below floor {:e} at {x:?}", self.eps_floor)));
        }
        if gamma < 0.0 {
            return Err(Error::Coefficient(format!("gamma = {gamma:e} negative at {x:?}")));
        }
        if self.gamma_assumption > 0.0 {
            let margin = gamma - 0.5 * self.divergence(x);
            if margin < self.gamma_assumption {
                return Err(Error::Coefficient(format!(
                    "gamma - div(zeta)/2 = {margin:e} below {:e} at {x:?}",
                    self.gamma_assumption
                )));
            }
        }
        Ok((eps, zeta, gamma))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Coefficient(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.eps_floor >= 0.0) {
            return Err(Error::Coefficient(format!("eps floor must be nonnegative, got {}", self.eps_floor)));
        }
        Ok(())
    }
}

/// Gradients of the barycentric coordinates and the (positive) area.
pub fn triangle_gradients(tri: &[Point; 3]) -> Result<([[f64; 2]; 3], f64)> {
    let [a, b, c] = *tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let area = 0.5 * det;
    if area.abs() <= MIN_AREA {
        return Err(Error::Geometry(format!("triangle {tri:?} has area {area:e}")));
    }
    // ∇λ_k = rot(x_{k+2} − x_{k+1}) / (2 area)
    let grad = |p: Point, q: Point| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
    Ok(([grad(b, c), grad(c, a), grad(a, b)], area.abs()))
}

pub fn barycentric_gradients(mesh: &TriMesh, t: usize) -> Result<[[f64; 2]; 3]> {
    if t >= mesh.num_triangles() {
        return Err(Error::Index(format!("triangle {t} of {}", mesh.num_triangles())));
    }
    triangle_gradients(&mesh.triangle_points(t)).map(|(g, _)| g)
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Consistent P1 mass matrix over all vertices.
pub fn assemble_mass(mesh: &TriMesh) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.area(t);
        for (a, &i) in tri.iter().enumerate() {
            for (b, &j) in tri.iter().enumerate() {
                let factor = if a == b { 2.0 } else { 1.0 };
                triplets.push((i, j, factor * area / 12.0));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), &triplets).expect("mesh indices are in range")
}

/// Lumped mass: vertex patch area over three.
pub fn lumped_mass(mesh: &TriMesh) -> Vec<f64> {
    mesh.patch_areas().into_iter().map(|a| a / 3.0).collect()
}

/// Standard Galerkin matrix with entries `a(φ_j, φ_i)` over all vertices.
pub fn assemble_galerkin_stiffness(mesh: &TriMesh, coeff: &CoefficientField) -> Result<CsrMatrix> {
    assemble_galerkin_stiffness_with(mesh, coeff, &QuadratureRule::default())
}

pub fn assemble_galerkin_stiffness_with(
    mesh: &TriMesh,
    coeff: &CoefficientField,
    rule: &QuadratureRule,
) -> Result<CsrMatrix> {
    coeff.validate()?;
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let (grads, area) = triangle_gradients(&pts)?;
        let mut local = [[0.0; 3]; 3];
        for (lam, x, w) in rule.mapped(&pts, area) {
            let (eps, zeta, gamma) = coeff.sample(x)?;
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += w
                        * (eps * dot(grads[j], grads[i]) + lam[j] * dot(zeta, grads[i]) + gamma * lam[j] * lam[i]);
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], local[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), &triplets)
}

/// Reaction-only mass `∫ γ φ_j φ_i` by quadrature.
pub fn assemble_weighted_mass(mesh: &TriMesh, weight: &ScalarField, rule: &QuadratureRule) -> Result<CsrMatrix> {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let area = mesh.area(t);
        let mut local = [[0.0; 3]; 3];
        for (lam, x, w) in rule.mapped(&pts, area) {
            let g = weight(x);
            if !g.is_finite() {
                return Err(Error::Coefficient(format!("non-finite weight at {x:?}")));
            }
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += w * g * lam[i] * lam[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], local[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), &triplets)
}

/// Load vector `∫ f φ_i` over all vertices.
pub fn assemble_load(mesh: &TriMesh, f: &ScalarField) -> Result<Vec<f64>> {
    assemble_load_with(mesh, f, &QuadratureRule::default())
}

pub fn assemble_load_with(mesh: &TriMesh, f: &ScalarField, rule: &QuadratureRule) -> Result<Vec<f64>> {
    let mut load = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let area = mesh.area(t);
        for (lam, x, w) in rule.mapped(&pts, area) {
            let value = f(x);
            if !value.is_finite() {
                return Err(Error::Data(format!("non-finite load sample {value} at {x:?}")));
            }
            for k in 0..3 {
                load[tri[k]] += w * value * lam[k];
            }
        }
    }
    Ok(load)
}

/// Nodal interpolant `u(x_i)`.
pub fn interpolate_nodal(mesh: &TriMesh, u: &ScalarField) -> Result<Vec<f64>> {
    mesh.vertices()
        .iter()
        .map(|&x| {
            let v = u(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Data(format!("non-finite sample {v} at {x:?}")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_mesh() -> TriMesh {
        TriMesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], 1).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn reference_gradients() {
        let g = barycentric_gradients(&reference_mesh(), 0).unwrap();
        assert_eq!(g, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn gradients_sum_to_zero_and_reproduce_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let tri: [Point; 3] = std::array::from_fn(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let Ok((g, _)) = triangle_gradients(&tri) else { continue };
            let sx: f64 = g.iter().map(|v| v[0]).sum();
            let sy: f64 = g.iter().map(|v| v[1]).sum();
            let scale = g.iter().map(|v| v[0].abs() + v[1].abs()).fold(0.0, f64::max);
            assert!(sx.abs() <= 1e-14 * scale.max(1.0) && sy.abs() <= 1e-14 * scale.max(1.0));
            // λ_i is affine: λ_i(x_j) = λ_i(x_i) + ∇λ_i·(x_j − x_i) = 1 + ∇λ_i·(x_j − x_i) must vanish
            for i in 0..3 {
                for j in 0..3 {
                    let v = 1.0 + dot(g[i], [tri[j][0] - tri[i][0], tri[j][1] - tri[i][1]]);
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!(close(v, expected, 1e-10), "λ_{i}(x_{j}) = {v}");
                }
            }
        }
    }

    #[test]
    fn right_isoceles_hypotenuse_opposite_gradient() {
        let h = 0.125;
        let tri = [[0.0, 0.0], [h, 0.0], [0.0, h]];
        let (g, _) = triangle_gradients(&tri).unwrap();
        // λ_0 is the vertex at the right angle, opposite the hypotenuse.
        let norm = (g[0][0].powi(2) + g[0][1].powi(2)).sqrt();
        assert!(close(norm, 2f64.sqrt() / h, 1e-12));
    }

    #[test]
    fn degenerate_gradients() {
        let err = triangle_gradients(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn reference_local_mass() {
        let m = assemble_mass(&reference_mesh());
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let expected = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!(close(m.get(i, j), expected, 1e-16));
            }
        }
        // exact integration oracle of λ_iλ_j with the degree-5 rule
        let w = assemble_weighted_mass(&reference_mesh(), &constant_scalar(1.0), &QuadratureRule::seven_point()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(m.get(i, j), w.get(i, j), 1e-15));
            }
        }
    }

    #[test]
    fn mass_properties_on_structured_mesh() {
        let mesh = build_unit_square(3).unwrap();
        let m = assemble_mass(&mesh);
        assert_eq!(m.asymmetry(), 0.0);
        assert!(m.values().iter().all(|&v| v >= 0.0));
        let total: f64 = m.values().iter().sum();
        assert!(close(total, 1.0, 1e-13));
        let ones = vec![1.0; mesh.num_vertices()];
        let rows = m.mul_vec(&ones);
        for (r, p) in rows.iter().zip(mesh.patch_areas()) {
            assert!(close(*r, p / 3.0, 1e-15));
        }
    }

    #[test]
    fn reference_laplacian() {
        let coeff = CoefficientField::constant(1.0, [0.0, 0.0], 0.0);
        let a = assemble_galerkin_stiffness(&reference_mesh(), &coeff).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(a.get(i, j), expected[i][j], 1e-14));
            }
        }
    }

    #[test]
    fn reaction_only_equals_mass() {
        let mesh = build_unit_square(2).unwrap();
        let mut coeff = CoefficientField::constant(0.0, [0.0, 0.0], 1.0);
        coeff.eps_floor = 0.0;
        let a = assemble_galerkin_stiffness(&mesh, &coeff).unwrap();
        let m = assemble_mass(&mesh);
        for (r, c, v) in m.triplets() {
            assert!(close(a.get(r, c), v, 1e-15));
        }
    }

    #[test]
    fn convection_annihilates_constants_on_interior_rows() {
        let mesh = build_unit_square(3).unwrap();
        let coeff = CoefficientField::constant(1.0, [1.0, 0.0], 0.0);
        let a = assemble_galerkin_stiffness(&mesh, &coeff).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        let r = a.mul_vec(&ones);
        for i in mesh.interior_vertices() {
            assert!(r[i].abs() < 1e-14, "row {i}: {}", r[i]);
        }
    }

    #[test]
    fn laplacian_is_psd_with_constant_kernel() {
        let mesh = build_unit_square(2).unwrap();
        let a = assemble_galerkin_stiffness(&mesh, &CoefficientField::constant(2.0, [0.0, 0.0], 0.0)).unwrap();
        assert!(a.asymmetry() < 1e-14);
        let ones = vec![1.0; mesh.num_vertices()];
        assert!(a.mul_vec(&ones).iter().all(|v| v.abs() < 1e-13));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q: f64 = a.mul_vec(&x).iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!(q >= -1e-13);
        }
    }

    #[test]
    fn eps_below_floor_is_rejected() {
        let mesh = build_unit_square(1).unwrap();
        let mut coeff = CoefficientField::constant(1e-3, [0.0, 0.0], 0.0);
        coeff.eps_floor = 1e-2;
        assert!(matches!(assemble_galerkin_stiffness(&mesh, &coeff), Err(Error::Coefficient(_))));
    }

    #[test]
    fn gamma_assumption_uses_divergence() {
        let mesh = build_unit_square(1).unwrap();
        let mut coeff = CoefficientField::constant(1.0, [0.0, 0.0], 1.0).with_gamma_assumption(0.45);
        // ζ = (x, 0): ∇·ζ = 1, so γ − ½∇·ζ = 0.5; numeric divergence path
        coeff.zeta = Arc::new(|x: Point| [x[0], 0.0]);
        coeff.div_zeta = None;
        assert!(assemble_galerkin_stiffness(&mesh, &coeff).is_ok());
        coeff.gamma_assumption = 0.55;
        assert!(matches!(assemble_galerkin_stiffness(&mesh, &coeff), Err(Error::Coefficient(_))));
    }

    #[test]
    fn load_of_constant() {
        let mesh = build_unit_square(2).unwrap();
        let load = assemble_load(&mesh, &constant_scalar(1.0)).unwrap();
        for (l, p) in load.iter().zip(mesh.patch_areas()) {
            assert!(close(*l, p / 3.0, 1e-15));
        }
        assert!(close(load.iter().sum::<f64>(), 1.0, 1e-14));
    }

    #[test]
    fn load_of_linear_field_matches_exact_integral() {
        let mesh = build_unit_square(2).unwrap();
        let f: ScalarField = Arc::new(|x: Point| x[0]);
        let load = assemble_load(&mesh, &f).unwrap();
        // exact: ∫_T x λ_k = |T|/12 (x_sum + x_k)
        let mut exact = vec![0.0; mesh.num_vertices()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let pts = mesh.triangle_points(t);
            let sum: f64 = pts.iter().map(|p| p[0]).sum();
            for k in 0..3 {
                exact[tri[k]] += mesh.area(t) / 12.0 * (sum + pts[k][0]);
            }
        }
        for (a, b) in load.iter().zip(&exact) {
            assert!(close(*a, *b, 1e-14));
        }
    }

    #[test]
    fn non_finite_data_rejected() {
        let mesh = build_unit_square(1).unwrap();
        let f: ScalarField = Arc::new(|x: Point| if x[0] > 0.9 { f64::NAN } else { 0.0 });
        assert!(matches!(assemble_load(&mesh, &f), Err(Error::Data(_))));
        assert!(matches!(interpolate_nodal(&mesh, &f), Err(Error::Data(_))));
    }

    #[test]
    fn interpolation_of_constants_and_affines() {
        let mesh = build_unit_square(3).unwrap();
        assert!(interpolate_nodal(&mesh, &constant_scalar(2.5)).unwrap().iter().all(|&v| v == 2.5));
        let u: ScalarField = Arc::new(|x: Point| x[0] + 2.0 * x[1]);
        let nodal = interpolate_nodal(&mesh, &u).unwrap();
        let rule = QuadratureRule::seven_point();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let pts = mesh.triangle_points(t);
            for (lam, x, _) in rule.mapped(&pts, 1.0) {
                let uh: f64 = (0..3).map(|k| lam[k] * nodal[tri[k]]).sum();
                assert!(close(uh, u(x), 1e-14));
            }
        }
    }
}
