//! Quadrature rules on the unit segment and the reference triangle
//! `{(x, y) : x, y >= 0, x + y <= 1}`.

use crate::error::{invalid, Result};

/// Nodes and weights of a quadrature rule; weights sum to the reference
/// measure (1 for the unit segment, 1/2 for the reference triangle).
#[derive(Clone, Debug)]
pub struct QuadRule<P> {
    pub nodes: Vec<P>,
    pub weights: Vec<f64>,
}

pub type SegmentRule = QuadRule<f64>;
pub type TriangleRule = QuadRule<[f64; 2]>;

impl SegmentRule {
    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * len * f(a + x * len))
            .sum()
    }
}

impl TriangleRule {
    /// Integrate `f` over the physical triangle with the given corners.
    pub fn integrate(&self, tri: &[[f64; 2]; 3], mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let [p, q, r] = *tri;
        let jac = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&[u, v], &w)| {
                let x = p[0] + u * (q[0] - p[0]) + v * (r[0] - p[0]);
                let y = p[1] + u * (q[1] - p[1]) + v * (r[1] - p[1]);
                w * jac * f(x, y)
            })
            .sum()
    }
}

/// Gauss-Legendre rule on `[0, 1]`, exact for degree `2 * npoints - 1`.
/// Supports 1 through 5 points.
pub fn gauss_segment(npoints: usize) -> Result<SegmentRule> {
    // Nodes/weights on [-1, 1]; mapped below.
    let (nodes, weights): (&[f64], &[f64]) = match npoints {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.5773502691896257, 0.5773502691896257], &[1.0, 1.0]),
        3 => (
            &[-0.7745966692414834, 0.0, 0.7745966692414834],
            &[0.5555555555555556, 0.8888888888888889, 0.5555555555555556],
        ),
        4 => (
            &[
                -0.8611363115940526,
                -0.3399810435848563,
                0.3399810435848563,
                0.8611363115940526,
            ],
            &[
                0.3478548451374538,
                0.6521451548625461,
                0.6521451548625461,
                0.3478548451374538,
            ],
        ),
        5 => (
            &[
                -0.9061798459386640,
                -0.5384693101056831,
                0.0,
                0.5384693101056831,
                0.9061798459386640,
            ],
            &[
                0.2369268850561891,
                0.4786286704993665,
                0.5688888888888889,
                0.4786286704993665,
                0.2369268850561891,
            ],
        ),
        _ => return Err(invalid(format!("unsupported point count {npoints}"))),
    };
    Ok(SegmentRule {
        nodes: nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights: weights.iter().map(|w| 0.5 * w).collect(),
    })
}

/// Symmetric rule on the reference triangle, exact to `degree`.
/// Supported degrees: 1, 2, 4.
pub fn gauss_triangle(degree: usize) -> Result<TriangleRule> {
    let third = 1.0 / 3.0;
    match degree {
        1 => Ok(TriangleRule {
            nodes: vec![[third, third]],
            weights: vec![0.5],
        }),
        2 => Ok(TriangleRule {
            nodes: vec![[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]],
            weights: vec![1.0 / 6.0; 3],
        }),
        4 => {
            // Two symmetric three-point orbits.
            let a = 0.445948490915965;
            let wa = 0.223381589678011 * 0.5;
            let b = 0.091576213509771;
            let wb = 0.109951743655322 * 0.5;
            Ok(TriangleRule {
                nodes: vec![
                    [a, a],
                    [1.0 - 2.0 * a, a],
                    [a, 1.0 - 2.0 * a],
                    [b, b],
                    [1.0 - 2.0 * b, b],
                    [b, 1.0 - 2.0 * b],
                ],
                weights: vec![wa, wa, wa, wb, wb, wb],
            })
        }
        _ => Err(invalid(format!("unsupported triangle degree {degree}"))),
    }
}

/// Tensor-product Gauss rule collapsed onto the triangle, exact for
/// polynomials of degree `2 * n - 2`. Used for verification integrals
/// where the standard rules are too coarse.
pub fn duffy_triangle(n: usize) -> Result<TriangleRule> {
    let line = gauss_segment(n)?;
    let mut nodes = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&u, &wu) in line.nodes.iter().zip(&line.weights) {
        for (&v, &wv) in line.nodes.iter().zip(&line.weights) {
            nodes.push([u, v * (1.0 - u)]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Ok(TriangleRule { nodes, weights })
}
