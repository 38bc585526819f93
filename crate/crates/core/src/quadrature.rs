//! Symmetric quadrature rules on triangles, in barycentric coordinates.

use crate::mesh::Point;

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    /// Barycentric coordinates of each point.
    pub points: Vec<[f64; 3]>,
    /// Weights normalized so they sum to one; multiply by the triangle area.
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: u32,
}

impl QuadratureRule {
    pub fn centroid() -> Self {
        QuadratureRule { points: vec![[1.0 / 3.0; 3]], weights: vec![1.0], degree: 1 }
    }

    /// Three interior points, degree 2.
    pub fn three_point() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        QuadratureRule { points: vec![[a, b, b], [b, a, b], [b, b, a]], weights: vec![1.0 / 3.0; 3], degree: 2 }
    }

    /// Seven-point degree-5 rule.
    pub fn seven_point() -> Self {
        let s15 = 15f64.sqrt();
        let b1 = (6.0 + s15) / 21.0;
        let a1 = (9.0 - 2.0 * s15) / 21.0;
        let b2 = (6.0 - s15) / 21.0;
        let a2 = (9.0 + 2.0 * s15) / 21.0;
        let w1 = (155.0 + s15) / 1200.0;
        let w2 = (155.0 - s15) / 1200.0;
        QuadratureRule {
            points: vec![
                [1.0 / 3.0; 3],
                [a1, b1, b1],
                [b1, a1, b1],
                [b1, b1, a1],
                [a2, b2, b2],
                [b2, a2, b2],
                [b2, b2, a2],
            ],
            weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
            degree: 5,
        }
    }

    /// The shipped rule with the smallest degree `>= degree`.
    pub fn with_degree(degree: u32) -> Option<Self> {
        match degree {
            0 | 1 => Some(Self::centroid()),
            2 => Some(Self::three_point()),
            3..=5 => Some(Self::seven_point()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical points and area-scaled weights on a triangle.
    pub fn mapped<'a>(&'a self, tri: &'a [Point; 3], area: f64) -> impl Iterator<Item = ([f64; 3], Point, f64)> + 'a {
        self.points.iter().zip(&self.weights).map(move |(lam, &w)| {
            let x = [
                lam[0] * tri[0][0] + lam[1] * tri[1][0] + lam[2] * tri[2][0],
                lam[0] * tri[0][1] + lam[1] * tri[1][1] + lam[2] * tri[2][1],
            ];
            (*lam, x, w * area)
        })
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::seven_point()
    }
}
