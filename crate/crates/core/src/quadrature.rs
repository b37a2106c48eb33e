//! Quadrature on reference simplices and on the boundary facets of a mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::mesh::SymmetricMesh;

/// Barycentric points and positive weights summing to the reference simplex measure
/// (`1`, `1/2`, `1/6` for the segment, triangle and tetrahedron).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Simplex dimension of the rule (number of barycentric coordinates minus one).
    pub fn simplex_dim(&self) -> usize {
        self.points[0].len() - 1
    }

    pub fn reference_measure(&self) -> f64 {
        match self.simplex_dim() {
            1 => 1.0,
            2 => 0.5,
            3 => 1.0 / 6.0,
            d => panic!("no reference simplex of dimension {d}"),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Three-point Gauss rule on a segment, exact to degree 5.
    pub fn segment_degree5() -> Self {
        let a = 0.5 * (0.6f64).sqrt();
        let pts = [0.5 - a, 0.5, 0.5 + a];
        Self {
            points: pts.iter().map(|&t| vec![1.0 - t, t]).collect(),
            weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
        }
    }

    /// Three interior points, exact to degree 2.
    pub fn triangle_degree2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        Self {
            points: vec![vec![a, b, b], vec![b, a, b], vec![b, b, a]],
            weights: vec![1.0 / 6.0; 3],
        }
    }

    /// Six-point symmetric rule, exact to degree 4.
    pub fn triangle_degree4() -> Self {
        let a = 0.445_948_490_915_965;
        let wa = 0.223_381_589_678_011_5 / 2.0;
        let b = 0.091_576_213_509_770_74;
        let wb = 0.109_951_743_655_321_87 / 2.0;
        let (ca, cb) = (1.0 - 2.0 * a, 1.0 - 2.0 * b);
        Self {
            points: vec![
                vec![a, a, ca],
                vec![a, ca, a],
                vec![ca, a, a],
                vec![b, b, cb],
                vec![b, cb, b],
                vec![cb, b, b],
            ],
            weights: vec![wa, wa, wa, wb, wb, wb],
        }
    }

    /// Four interior points, exact to degree 2.
    pub fn tetrahedron_degree2() -> Self {
        let a = (5.0 - 5.0f64.sqrt()) / 20.0;
        let b = (5.0 + 3.0 * 5.0f64.sqrt()) / 20.0;
        Self {
            points: vec![vec![b, a, a, a], vec![a, b, a, a], vec![a, a, b, a], vec![a, a, a, b]],
            weights: vec![1.0 / 24.0; 4],
        }
    }

    /// Rule used on cells of a `dim`-dimensional mesh.
    pub fn for_cells(dim: usize) -> Self {
        if dim == 2 {
            Self::triangle_degree2()
        } else {
            Self::tetrahedron_degree2()
        }
    }

    /// Rule used on boundary facets of a `dim`-dimensional mesh.
    pub fn for_facets(dim: usize) -> Self {
        if dim == 2 {
            Self::segment_degree5()
        } else {
            Self::triangle_degree4()
        }
    }

    /// Integrates the monomial `x_1^{e_1} ... x_d^{e_d}` in reference coordinates
    /// (the barycentric coordinates after the first).
    pub fn integrate_monomial(&self, exponents: &[u32]) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * exponents.iter().enumerate().map(|(i, &e)| p[i + 1].powi(e as i32)).product::<f64>())
            .sum()
    }

    /// Highest total degree integrated exactly (to `tol`), checked against
    /// `int x^a y^b z^c = a! b! c! / (a + b + c + d)!` up to degree 8.
    pub fn exactness_degree(&self, tol: f64) -> usize {
        let d = self.simplex_dim();
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        let mut degree = 0;
        for total in 0..=8u32 {
            for e in exponent_tuples(d, total) {
                let exact = e.iter().map(|&x| fact(x)).product::<f64>() / fact(total + d as u32);
                if (self.integrate_monomial(&e) - exact).abs() > tol {
                    return degree;
                }
            }
            degree = total as usize;
        }
        degree
    }
}

fn exponent_tuples(d: usize, total: u32) -> Vec<Vec<u32>> {
    if d == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in exponent_tuples(d - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Per-facet quadrature on the polyhedral boundary: physical points, weights scaled by the
/// facet measure, and the shared barycentric rule for evaluating P1 fields.
#[derive(Debug, Clone)]
pub struct BoundaryQuadrature {
    pub rule: QuadratureRule,
    /// `points[f * nq + j]`.
    pub points: Vec<Point>,
    /// `weights[f * nq + j]`; they sum to the facet measure on each facet.
    pub weights: Vec<f64>,
    pub facet_measures: Vec<f64>,
}

impl BoundaryQuadrature {
    pub fn points_per_facet(&self) -> usize {
        self.rule.len()
    }

    /// Integral of a P1 field over the boundary.
    pub fn integrate<F: Fn(f64) -> f64>(&self, mesh: &SymmetricMesh, u: &[f64], f: F) -> f64 {
        let nq = self.points_per_facet();
        let per_facet: Vec<f64> = (0..mesh.num_facets())
            .map(|fi| {
                let verts = mesh.facet(fi);
                (0..nq)
                    .map(|j| {
                        let bary = &self.rule.points[j];
                        let v: f64 = verts.iter().zip(bary).map(|(&i, b)| b * u[i as usize]).sum();
                        self.weights[fi * nq + j] * f(v)
                    })
                    .sum()
            })
            .collect();
        geom::pairwise_sum(&per_facet)
    }
}

/// Builds the boundary rule for every facet; a facet of zero measure is an error naming it.
pub fn boundary_quadrature(mesh: &SymmetricMesh) -> Result<BoundaryQuadrature> {
    let rule = QuadratureRule::for_facets(mesh.dim);
    let scale = 1.0 / rule.reference_measure();
    let nf = mesh.num_facets();
    let mut points = Vec::with_capacity(nf * rule.len());
    let mut weights = Vec::with_capacity(nf * rule.len());
    let mut facet_measures = Vec::with_capacity(nf);
    for f in 0..nf {
        let p = mesh.facet_points(f);
        let measure = geom::facet_measure(mesh.dim, &p);
        if !(measure > 0.0) {
            return Err(Error::DegenerateFacet(f));
        }
        facet_measures.push(measure);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = p.iter().zip(bary).fold([0.0; 3], |acc, (&v, &b)| geom::add(acc, geom::scale(v, b)));
            points.push(x);
            weights.push(w * measure * scale);
        }
    }
    Ok(BoundaryQuadrature { rule, points, weights, facet_measures })
}
