//! Benchmark problems with closed-form solutions and manufactured forcing.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use crate::fem::{constant_scalar, CoefficientField, ScalarField, VectorField};
use crate::mesh::Point;
use crate::verify::Region;

/// `η(z) = z³ − (e^{(z−1)/ε} − e^{−1/ε}) / (1 − e^{−1/ε})` and its first two derivatives.
///
/// For tiny `ε` the exponentials underflow to zero away from `z = 1`, and
/// `η(0) = η(1) = 0` hold exactly in floating point.
#[derive(Clone, Copy, Debug)]
pub struct LayerProfile {
    eps: f64,
    tail: f64,
}

impl LayerProfile {
    pub fn new(eps: f64) -> Self {
        LayerProfile { eps, tail: (-1.0 / eps).exp() }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn scaled(&self, z: f64) -> f64 {
        ((z - 1.0) / self.eps).exp() / (1.0 - self.tail)
    }

    /// The exponential part, so that `η(z) = z³ − layer(z)`.
    pub fn layer(&self, z: f64) -> f64 {
        (((z - 1.0) / self.eps).exp() - self.tail) / (1.0 - self.tail)
    }

    pub fn value(&self, z: f64) -> f64 {
        z * z * z - self.layer(z)
    }

    pub fn d1(&self, z: f64) -> f64 {
        3.0 * z * z - self.scaled(z) / self.eps
    }

    pub fn d2(&self, z: f64) -> f64 {
        6.0 * z - self.scaled(z) / (self.eps * self.eps)
    }
}

/// A coupled state/adjoint pair with constant coefficients and `∇·ζ = 0`,
/// together with the forcing that makes it exact:
///
/// `f = −εΔp + ζ·∇p + γp − y`, `g = −p + εΔy + ζ·∇y − γy`.
#[derive(Clone)]
pub struct Manufactured {
    pub name: String,
    pub eps: f64,
    pub zeta: [f64; 2],
    pub gamma: f64,
    pub y: ScalarField,
    pub grad_y: VectorField,
    pub p: ScalarField,
    pub grad_p: VectorField,
    pub f: ScalarField,
    pub g: ScalarField,
    /// Subdomain used for local error norms.
    pub local_region: Option<Region>,
}

impl std::fmt::Debug for Manufactured {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Manufactured")
            .field("name", &self.name)
            .field("eps", &self.eps)
            .field("zeta", &self.zeta)
            .field("gamma", &self.gamma)
            .field("local_region", &self.local_region)
            .finish_non_exhaustive()
    }
}

type Laplacian = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

impl Manufactured {
    #[allow(clippy::too_many_arguments)]
    pub fn from_fields(
        name: impl Into<String>,
        eps: f64,
        zeta: [f64; 2],
        gamma: f64,
        (y, grad_y, lap_y): (ScalarField, VectorField, Laplacian),
        (p, grad_p, lap_p): (ScalarField, VectorField, Laplacian),
    ) -> Self {
        let f: ScalarField = {
            let (y, p, grad_p) = (y.clone(), p.clone(), grad_p.clone());
            Arc::new(move |x| {
                let gp = grad_p(x);
                -eps * lap_p(x) + zeta[0] * gp[0] + zeta[1] * gp[1] + gamma * p(x) - y(x)
            })
        };
        let g: ScalarField = {
            let (y, p, grad_y) = (y.clone(), p.clone(), grad_y.clone());
            Arc::new(move |x| {
                let gy = grad_y(x);
                -p(x) + eps * lap_y(x) + zeta[0] * gy[0] + zeta[1] * gy[1] - gamma * y(x)
            })
        };
        Manufactured { name: name.into(), eps, zeta, gamma, y, grad_y, p, grad_p, f, g, local_region: None }
    }

    pub fn coefficients(&self) -> CoefficientField {
        CoefficientField::constant(self.eps, self.zeta, self.gamma)
    }

    pub fn with_local_region(mut self, region: Region) -> Self {
        self.local_region = Some(region);
        self
    }
}

/// Outflow boundary layers at `x₁ = 1, x₂ = 1` in `y` and at `x₁ = 0, x₂ = 0` in `p`.
pub fn boundary_layer(eps: f64) -> Manufactured {
    let eta = LayerProfile::new(eps);
    let y: ScalarField = Arc::new(move |x| eta.value(x[0]) * eta.value(x[1]));
    let grad_y: VectorField =
        Arc::new(move |x| [eta.d1(x[0]) * eta.value(x[1]), eta.value(x[0]) * eta.d1(x[1])]);
    let lap_y: Laplacian = Arc::new(move |x| eta.d2(x[0]) * eta.value(x[1]) + eta.value(x[0]) * eta.d2(x[1]));
    let p: ScalarField = Arc::new(move |x| eta.value(1.0 - x[0]) * eta.value(1.0 - x[1]));
    let grad_p: VectorField = Arc::new(move |x| {
        [-eta.d1(1.0 - x[0]) * eta.value(1.0 - x[1]), -eta.value(1.0 - x[0]) * eta.d1(1.0 - x[1])]
    });
    let lap_p: Laplacian = Arc::new(move |x| {
        eta.d2(1.0 - x[0]) * eta.value(1.0 - x[1]) + eta.value(1.0 - x[0]) * eta.d2(1.0 - x[1])
    });
    Manufactured::from_fields(
        "boundary-layer",
        eps,
        [-FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
        1.0,
        (y, grad_y, lap_y),
        (p, grad_p, lap_p),
    )
    .with_local_region(Region::new(0.4, 0.6, 0.4, 0.6))
}

fn bubble() -> (ScalarField, VectorField, Laplacian) {
    let u: ScalarField = Arc::new(|x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
    let grad: VectorField = Arc::new(|x| {
        [(1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]), x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1])]
    });
    let lap: Laplacian = Arc::new(|x| -2.0 * x[1] * (1.0 - x[1]) - 2.0 * x[0] * (1.0 - x[0]));
    (u, grad, lap)
}

/// Interior layer of `y` along `x₂ = 1/2`; `p` is a smooth bubble.
pub fn interior_layer(eps: f64) -> Manufactured {
    let y: ScalarField = Arc::new(move |x| (1.0 - x[0]).powi(3) * ((x[1] - 0.5) / eps).atan());
    let grad_y: VectorField = Arc::new(move |x| {
        let t = (x[1] - 0.5) / eps;
        let s = 1.0 - x[0];
        [-3.0 * s * s * t.atan(), s * s * s / (eps * (1.0 + t * t))]
    });
    let lap_y: Laplacian = Arc::new(move |x| {
        let t = (x[1] - 0.5) / eps;
        let s = 1.0 - x[0];
        let q = 1.0 + t * t;
        6.0 * s * t.atan() - s * s * s * 2.0 * t / (eps * eps * q * q)
    });
    Manufactured::from_fields("interior-layer", eps, [-1.0, 0.0], 1.0, (y, grad_y, lap_y), bubble())
        .with_local_region(Region::new(0.65, 1.0, 0.0, 1.0))
}

/// Layer-free pair `y = p = x₁(1−x₁)x₂(1−x₂)` with `ε = 1`, `ζ = (1, 1)`, `γ = 1`.
pub fn smooth() -> Manufactured {
    Manufactured::from_fields("smooth", 1.0, [1.0, 1.0], 1.0, bubble(), bubble())
}

/// Coefficients and desired state of the stability test: `ζ = (−1, 0)`, `γ = 0`, `y_d = 1`.
pub fn stability(eps: f64, y_d: f64) -> (CoefficientField, ScalarField) {
    (CoefficientField::constant(eps, [-1.0, 0.0], 0.0), constant_scalar(y_d))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FD_STEP: f64 = 1e-5;

    fn fd_grad(u: &ScalarField, x: Point) -> [f64; 2] {
        let h = FD_STEP;
        [
            (u([x[0] + h, x[1]]) - u([x[0] - h, x[1]])) / (2.0 * h),
            (u([x[0], x[1] + h]) - u([x[0], x[1] - h])) / (2.0 * h),
        ]
    }

    fn fd_laplacian(u: &ScalarField, x: Point) -> f64 {
        let h = FD_STEP;
        (u([x[0] + h, x[1]]) + u([x[0] - h, x[1]]) + u([x[0], x[1] + h]) + u([x[0], x[1] - h]) - 4.0 * u(x))
            / (h * h)
    }

    /// Forcing rebuilt from finite differences of the exact pair.
    fn fd_forcing(m: &Manufactured, x: Point) -> (f64, f64) {
        let (gy, gp) = (fd_grad(&m.y, x), fd_grad(&m.p, x));
        let (z, e, c) = (m.zeta, m.eps, m.gamma);
        let f = -e * fd_laplacian(&m.p, x) + z[0] * gp[0] + z[1] * gp[1] + c * (m.p)(x) - (m.y)(x);
        let g = -(m.p)(x) + e * fd_laplacian(&m.y, x) + z[0] * gy[0] + z[1] * gy[1] - c * (m.y)(x);
        (f, g)
    }

    fn assert_close(a: f64, b: f64, rel: f64, what: &str) {
        assert!((a - b).abs() <= rel * b.abs().max(1e-2), "{what}: {a} vs {b}");
    }

    fn check_against_fd(m: &Manufactured, points: &[Point]) {
        for &x in points {
            let (f, g) = fd_forcing(m, x);
            assert_close((m.f)(x), f, 1e-4, &format!("{} f at {x:?}", m.name));
            assert_close((m.g)(x), g, 1e-4, &format!("{} g at {x:?}", m.name));
            let (gy, gp) = (fd_grad(&m.y, x), fd_grad(&m.p, x));
            for d in 0..2 {
                assert_close((m.grad_y)(x)[d], gy[d], 1e-6, "grad y");
                assert_close((m.grad_p)(x)[d], gp[d], 1e-6, "grad p");
            }
        }
    }

    const OFF_LAYER: [Point; 5] = [[0.3, 0.4], [0.5, 0.2], [0.7, 0.6], [0.15, 0.85], [0.62, 0.33]];

    #[test]
    fn boundary_layer_forcing_matches_finite_differences() {
        check_against_fd(&boundary_layer(1e-2), &OFF_LAYER);
        check_against_fd(&boundary_layer(1e-9), &OFF_LAYER);
    }

    #[test]
    fn interior_layer_forcing_matches_finite_differences() {
        check_against_fd(&interior_layer(1e-2), &OFF_LAYER);
        // away from x₂ = 1/2 the derivatives of arctan are tame
        check_against_fd(&interior_layer(1e-1), &[[0.3, 0.45], [0.6, 0.58]]);
    }

    #[test]
    fn smooth_forcing_matches_finite_differences() {
        check_against_fd(&smooth(), &OFF_LAYER);
    }

    #[test]
    fn profile_endpoint_values_are_exact() {
        for eps in [1e-2, 1e-9] {
            let eta = LayerProfile::new(eps);
            assert_eq!(eta.value(0.0), 0.0);
            assert_eq!(eta.value(1.0), 0.0);
        }
        let eps = 1e-2;
        let eta = LayerProfile::new(eps);
        let z = 1.0 - 40.0 * eps;
        let expected = -((-40f64).exp() - (-100f64).exp()) / (1.0 - (-100f64).exp());
        assert!((-eta.layer(z) - expected).abs() <= 1e-15 * expected.abs());
        assert!((-eta.layer(z) + (-40f64).exp()).abs() <= 1e-15 * (-40f64).exp());
        assert!((eta.value(z) - z.powi(3)).abs() <= 1e-16);
        // the layer is invisible at ε = 10⁻⁹ away from z = 1
        let eta = LayerProfile::new(1e-9);
        assert_eq!(eta.value(0.999), 0.999f64.powi(3));
        assert_eq!(eta.d1(0.5), 0.75);
    }

    #[test]
    fn profile_derivatives_match_finite_differences() {
        let eta = LayerProfile::new(0.05);
        let h = 1e-6;
        for z in [0.1, 0.5, 0.9, 0.97] {
            let d1 = (eta.value(z + h) - eta.value(z - h)) / (2.0 * h);
            assert!((eta.d1(z) - d1).abs() < 1e-6 * eta.d1(z).abs().max(1.0));
            let d2 = (eta.d1(z + h) - eta.d1(z - h)) / (2.0 * h);
            assert!((eta.d2(z) - d2).abs() < 1e-5 * eta.d2(z).abs().max(1.0));
        }
    }

    #[test]
    fn exact_traces() {
        for m in [boundary_layer(1e-2), boundary_layer(1e-9)] {
            for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
                for x in [[t, 0.0], [t, 1.0], [0.0, t], [1.0, t]] {
                    assert_eq!((m.y)(x), 0.0);
                    assert_eq!((m.p)(x), 0.0);
                }
            }
        }
        let m = interior_layer(1e-2);
        assert!((m.y)([0.0, 0.0]).abs() > 1.0);
        assert_eq!((m.y)([1.0, 0.3]), 0.0);
        assert_eq!((m.p)([0.0, 0.4]), 0.0);
    }
}
