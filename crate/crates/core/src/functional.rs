//! The quotient `I^lambda[u] = (|grad u|_p^p + lambda |u|_p^p) / |u|_{L_q(S)}^p` over P1 fields,
//! its Gateaux derivative, and boundary trace-mass diagnostics.
//!
//! The gradient integrand is regularized as `(eps^2 + |grad u|^2)^{p/2}`; with `eps = 0` the
//! quotient is exactly 0-homogeneous. Gradients are constant per cell, so the gradient term is
//! exact per cell. Volume `|u|^p` uses a degree-2 cell rule and the boundary `|u|^q` a degree-4
//! (3-D) or degree-5 (2-D) facet rule, both evaluating `|u(x_q)|` directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::mesh::SymmetricMesh;
use crate::quadrature::{boundary_quadrature, BoundaryQuadrature, QuadratureRule};
use crate::sparse::CsrPattern;
use crate::symmetry::OrbitalSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub p: f64,
    /// Critical trace exponent, always derived from `n` and `p`.
    pub q: f64,
    pub lambda: f64,
    /// Regularization of the `p`-Laplacian integrand.
    pub epsilon: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Params {
    pub fn new(n: usize, p: f64, lambda: f64) -> Result<Self> {
        let params = Self {
            n,
            p,
            q: critical_exponent(n, p),
            lambda,
            epsilon: 0.0,
            beta: 0.1,
            kappa: std::f64::consts::FRAC_PI_2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.n));
        }
        if !(self.p > 1.0 && self.p < self.n as f64) {
            return bad(format!("p must lie in (1, n) = (1, {}), got {}", self.n, self.p));
        }
        if (self.q - critical_exponent(self.n, self.p)).abs() > 1e-12 * self.q {
            return bad(format!("q = {} does not match the critical exponent", self.q));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        Ok(())
    }

    /// Warning text when `p > (n + 1) / 2`, where the upper energy bound used for existence is
    /// not available.
    pub fn regime_warning(&self) -> Option<String> {
        let bound = (self.n as f64 + 1.0) / 2.0;
        (self.p > bound).then(|| {
            format!("p = {} exceeds (n+1)/2 = {bound}; the upper energy bound may fail", self.p)
        })
    }
}

/// `q = (n - 1) p / (n - p)`.
pub fn critical_exponent(n: usize, p: f64) -> f64 {
    let n = n as f64;
    (n - 1.0) * p / (n - p)
}

#[inline]
fn abs_pow(x: f64, e: f64) -> f64 {
    let a = x.abs();
    if e == 2.0 {
        a * a
    } else if e == 4.0 {
        let a2 = a * a;
        a2 * a2
    } else if e == 3.0 {
        a * a * a
    } else {
        a.powf(e)
    }
}

/// `|x|^{e-2} x`, zero at `x = 0`.
#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if e == 2.0 {
        x
    } else if e == 4.0 {
        x * x * x
    } else if e == 3.0 {
        x * x.abs()
    } else {
        x.signum() * x.abs().powf(e - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `int_B (eps^2 + |grad u|^2)^{p/2}`.
    pub grad_term: f64,
    /// `int_B |u|^p`.
    pub mass_term: f64,
    /// `(int_S |u|^q)^{p/q}`.
    pub trace_term: f64,
    pub quotient: f64,
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
    pub epsilon: f64,
}

/// Weak-form pieces tested against every nodal basis function `phi_i`.
#[derive(Debug, Clone)]
pub struct WeakForm {
    /// `int (eps^2 + |grad u|^2)^{(p-2)/2} grad u . grad phi_i`
    pub stiffness: Vec<f64>,
    /// `int |u|^{p-2} u phi_i`
    pub mass: Vec<f64>,
    /// `int_S |u|^{q-2} u phi_i`
    pub trace: Vec<f64>,
}

/// Raw integrals `(int (eps^2+|grad u|^2)^{p/2}, int |u|^p, int_S |u|^q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawIntegrals {
    pub grad: f64,
    pub mass: f64,
    pub trace: f64,
}

/// Precomputed P1 geometry of a mesh: basis gradients, volumes and quadrature.
pub struct Discretization<'m> {
    pub mesh: &'m SymmetricMesh,
    /// `basis_grads[c * s + a]`: gradient of the barycentric coordinate `a` on cell `c`.
    basis_grads: Vec<Point>,
    pub volumes: Vec<f64>,
    pub cell_rule: QuadratureRule,
    pub boundary: BoundaryQuadrature,
    pattern: std::sync::OnceLock<CsrPattern>,
}

impl<'m> Discretization<'m> {
    pub fn new(mesh: &'m SymmetricMesh) -> Result<Self> {
        let dim = mesh.dim;
        let s = dim + 1;
        let mut basis_grads = Vec::with_capacity(mesh.num_cells() * s);
        let mut volumes = Vec::with_capacity(mesh.num_cells());
        for c in 0..mesh.num_cells() {
            let p = mesh.cell_points(c);
            let (grads, vol) = barycentric_gradients(dim, &p);
            if !(vol > 0.0) {
                return Err(Error::InvertedCell(c));
            }
            basis_grads.extend_from_slice(&grads[..s]);
            volumes.push(vol);
        }
        Ok(Self {
            mesh,
            basis_grads,
            volumes,
            cell_rule: QuadratureRule::for_cells(dim),
            boundary: boundary_quadrature(mesh)?,
            pattern: std::sync::OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn pattern(&self) -> &CsrPattern {
        self.pattern
            .get_or_init(|| CsrPattern::from_cells(self.mesh.num_vertices(), &self.mesh.cells, self.mesh.dim + 1))
    }

    fn check(&self, u: &[f64], params: &Params) -> Result<()> {
        self.mesh.check_field(u)?;
        if params.n != self.mesh.dim {
            return Err(Error::InvalidParams(format!(
                "params are for n = {} but the mesh has dimension {}",
                params.n, self.mesh.dim
            )));
        }
        Ok(())
    }

    #[inline]
    fn cell_gradient(&self, c: usize, u: &[f64]) -> Point {
        let s = self.dim() + 1;
        let verts = self.mesh.cell(c);
        let mut g = [0.0; 3];
        for a in 0..s {
            g = geom::add(g, geom::scale(self.basis_grads[c * s + a], u[verts[a] as usize]));
        }
        g
    }

    /// Per-cell gradient vectors of `u`.
    pub fn cell_gradients(&self, u: &[f64]) -> Vec<Point> {
        (0..self.mesh.num_cells()).map(|c| self.cell_gradient(c, u)).collect()
    }

    fn cell_values(&self, c: usize, u: &[f64], out: &mut [f64]) {
        let verts = self.mesh.cell(c);
        for (q, bary) in self.cell_rule.points.iter().enumerate() {
            out[q] = verts.iter().zip(bary).map(|(&i, b)| b * u[i as usize]).sum();
        }
    }

    fn facet_values(&self, f: usize, u: &[f64], out: &mut [f64]) {
        let verts = self.mesh.facet(f);
        for (q, bary) in self.boundary.rule.points.iter().enumerate() {
            out[q] = verts.iter().zip(bary).map(|(&i, b)| b * u[i as usize]).sum();
        }
    }

    fn cell_integrals(&self, c: usize, u: &[f64], params: &Params, vals: &mut [f64]) -> (f64, f64) {
        let g = self.cell_gradient(c, u);
        let g2 = geom::dot(g, g);
        let e2 = params.epsilon * params.epsilon;
        let grad = self.volumes[c] * (e2 + g2).powf(0.5 * params.p);
        self.cell_values(c, u, vals);
        let scale = self.volumes[c] / self.cell_rule.reference_measure();
        let mass: f64 = vals.iter().zip(&self.cell_rule.weights).map(|(&v, w)| w * abs_pow(v, params.p)).sum();
        (grad, mass * scale)
    }

    fn facet_integral(&self, f: usize, u: &[f64], q: f64, vals: &mut [f64]) -> f64 {
        self.facet_values(f, u, vals);
        let nq = self.boundary.points_per_facet();
        vals[..nq].iter().enumerate().map(|(j, &v)| self.boundary.weights[f * nq + j] * abs_pow(v, q)).sum()
    }

    /// Raw integrals over the cells and facets selected by the filters.
    fn integrals_where(
        &self,
        u: &[f64],
        params: &Params,
        cell_filter: impl Fn(usize) -> bool,
        facet_filter: impl Fn(usize) -> bool,
    ) -> RawIntegrals {
        let mut vals = vec![0.0; 8];
        let mut grads = Vec::with_capacity(self.mesh.num_cells());
        let mut masses = Vec::with_capacity(self.mesh.num_cells());
        for c in (0..self.mesh.num_cells()).filter(|&c| cell_filter(c)) {
            let (g, m) = self.cell_integrals(c, u, params, &mut vals);
            grads.push(g);
            masses.push(m);
        }
        let traces: Vec<f64> = (0..self.mesh.num_facets())
            .filter(|&f| facet_filter(f))
            .map(|f| self.facet_integral(f, u, params.q, &mut vals))
            .collect();
        RawIntegrals {
            grad: geom::pairwise_sum(&grads),
            mass: geom::pairwise_sum(&masses),
            trace: geom::pairwise_sum(&traces),
        }
    }

    pub fn raw_integrals(&self, u: &[f64], params: &Params) -> Result<RawIntegrals> {
        self.check(u, params)?;
        Ok(self.integrals_where(u, params, |_| true, |_| true))
    }

    /// Raw integrals restricted to the fundamental wedge (replica 0).
    pub fn wedge_integrals(&self, u: &[f64], params: &Params) -> Result<RawIntegrals> {
        self.check(u, params)?;
        let mesh = self.mesh;
        Ok(self.integrals_where(
            u,
            params,
            |c| mesh.cell_wedge(c) == 0,
            |f| mesh.cell_wedge(mesh.facet_cell[f] as usize) == 0,
        ))
    }

    /// `int_S |u|^q`.
    pub fn trace_integral(&self, u: &[f64], q: f64) -> f64 {
        self.boundary.integrate(self.mesh, u, |v| abs_pow(v, q))
    }

    /// `|u|_{L_q(S)}`.
    pub fn trace_norm(&self, u: &[f64], q: f64) -> f64 {
        self.trace_integral(u, q).powf(1.0 / q)
    }

    pub fn energy(&self, u: &[f64], params: &Params) -> Result<EnergyBreakdown> {
        let raw = self.raw_integrals(u, params)?;
        if !(raw.trace > 0.0) {
            return Err(Error::ZeroTrace);
        }
        let trace_term = raw.trace.powf(params.p / params.q);
        Ok(EnergyBreakdown {
            grad_term: raw.grad,
            mass_term: raw.mass,
            trace_term,
            quotient: (raw.grad + params.lambda * raw.mass) / trace_term,
            lambda: params.lambda,
            p: params.p,
            q: params.q,
            epsilon: params.epsilon,
        })
    }

    /// Tests the three nonlinear terms against every basis function.
    pub fn weak_form(&self, u: &[f64], params: &Params) -> Result<WeakForm> {
        self.check(u, params)?;
        Ok(self.weak_form_where(u, params, |_| true, |_| true))
    }

    /// Weak form assembled from the fundamental wedge only. For an invariant field, summing the
    /// result over a node orbit and multiplying by the group order gives the orbit sum of the
    /// full weak form.
    pub fn wedge_weak_form(&self, u: &[f64], params: &Params) -> Result<WeakForm> {
        self.check(u, params)?;
        let mesh = self.mesh;
        Ok(self.weak_form_where(
            u,
            params,
            |c| mesh.cell_wedge(c) == 0,
            |f| mesh.cell_wedge(mesh.facet_cell[f] as usize) == 0,
        ))
    }

    fn weak_form_where(
        &self,
        u: &[f64],
        params: &Params,
        cell_filter: impl Fn(usize) -> bool,
        facet_filter: impl Fn(usize) -> bool,
    ) -> WeakForm {
        let mesh = self.mesh;
        let nv = mesh.num_vertices();
        let s = self.dim() + 1;
        let e2 = params.epsilon * params.epsilon;
        let mut stiffness = vec![0.0; nv];
        let mut mass = vec![0.0; nv];
        let mut trace = vec![0.0; nv];
        let mut vals = vec![0.0; 8];
        let cell_scale = 1.0 / self.cell_rule.reference_measure();
        for c in (0..mesh.num_cells()).filter(|&c| cell_filter(c)) {
            let verts = mesh.cell(c);
            let g = self.cell_gradient(c, u);
            let g2 = geom::dot(g, g);
            let coeff = if e2 + g2 == 0.0 { 0.0 } else { (e2 + g2).powf(0.5 * (params.p - 2.0)) };
            let vol = self.volumes[c];
            self.cell_values(c, u, &mut vals);
            for a in 0..s {
                let i = verts[a] as usize;
                stiffness[i] += vol * coeff * geom::dot(g, self.basis_grads[c * s + a]);
                let mut m = 0.0;
                for (qi, bary) in self.cell_rule.points.iter().enumerate() {
                    m += self.cell_rule.weights[qi] * signed_pow(vals[qi], params.p) * bary[a];
                }
                mass[i] += vol * cell_scale * m;
            }
        }
        let nq = self.boundary.points_per_facet();
        for f in (0..mesh.num_facets()).filter(|&f| facet_filter(f)) {
            let verts = mesh.facet(f);
            self.facet_values(f, u, &mut vals);
            for (a, &i) in verts.iter().enumerate() {
                let mut t = 0.0;
                for (qi, bary) in self.boundary.rule.points.iter().enumerate() {
                    t += self.boundary.weights[f * nq + qi] * signed_pow(vals[qi], params.q) * bary[a];
                }
                trace[i as usize] += t;
            }
        }
        WeakForm { stiffness, mass, trace }
    }

    /// Nodal values `DI^lambda[u](phi_i)`.
    pub fn gradient(&self, u: &[f64], params: &Params) -> Result<Vec<f64>> {
        let e = self.energy(u, params)?;
        let w = self.weak_form(u, params)?;
        let p = params.p;
        let trace_int = e.trace_term.powf(params.q / p);
        let numer = e.grad_term + params.lambda * e.mass_term;
        let d = e.trace_term;
        // d(T^{p/q}) / du_i = p T^{p/q - 1} b_i
        let dd_scale = p * d / trace_int;
        Ok((0..u.len())
            .map(|i| {
                let dn = p * (w.stiffness[i] + params.lambda * w.mass[i]);
                dn / d - numer * dd_scale * w.trace[i] / (d * d)
            })
            .collect())
    }

    /// Fraction of the normalized boundary `q`-mass carried by each facet.
    pub fn trace_distribution(&self, u: &[f64], params: &Params) -> Result<Vec<f64>> {
        self.check(u, params)?;
        let mut vals = vec![0.0; 8];
        let per: Vec<f64> =
            (0..self.mesh.num_facets()).map(|f| self.facet_integral(f, u, params.q, &mut vals)).collect();
        let total = geom::pairwise_sum(&per);
        if !(total > 0.0) {
            return Err(Error::ZeroTrace);
        }
        Ok(per.into_iter().map(|m| m / total).collect())
    }

    /// Normalized `q`-mass at each boundary quadrature point (`f * nq + j` layout).
    pub fn trace_point_masses(&self, u: &[f64], params: &Params) -> Result<Vec<f64>> {
        self.check(u, params)?;
        self.point_masses(u, params.q)
    }

    /// As [`Self::trace_point_masses`] for an explicit exponent; `u` must already be checked.
    pub fn point_masses(&self, u: &[f64], q: f64) -> Result<Vec<f64>> {
        let nq = self.boundary.points_per_facet();
        let mut vals = vec![0.0; 8];
        let mut out = Vec::with_capacity(self.mesh.num_facets() * nq);
        for f in 0..self.mesh.num_facets() {
            self.facet_values(f, u, &mut vals);
            for (j, &v) in vals[..nq].iter().enumerate() {
                out.push(self.boundary.weights[f * nq + j] * abs_pow(v, q));
            }
        }
        let total = geom::pairwise_sum(&out);
        if !(total > 0.0) {
            return Err(Error::ZeroTrace);
        }
        for m in &mut out {
            *m /= total;
        }
        Ok(out)
    }

    /// Fraction of the normalized trace `q`-mass within geodesic distance `kappa` of the set.
    /// Facets straddling the neighbourhood edge are split by quadrature-point membership.
    pub fn neighborhood_mass(&self, u: &[f64], set: &OrbitalSet, params: &Params) -> Result<f64> {
        let masses = self.trace_point_masses(u, params)?;
        let inside: Vec<f64> = masses
            .iter()
            .zip(&self.boundary.points)
            .map(|(&m, &x)| if set.geodesic_distance(x) <= set.kappa { m } else { 0.0 })
            .collect();
        Ok(geom::pairwise_sum(&inside).min(1.0))
    }

    /// Values `p (K_w + lambda M_w)` of the lagged-coefficient operator on the P1 pattern. The
    /// weights are `(eps^2 + |grad u|^2)^{(p-2)/2}` and `|u|^{p-2}` (floored), so for `p = 2` this
    /// is `2 (K + lambda M)`.
    pub fn metric_values(&self, u: &[f64], params: &Params) -> Vec<f64> {
        let s = self.dim() + 1;
        let pattern = self.pattern();
        let mut values = vec![0.0; pattern.nnz()];
        let floors = self.metric_floors(u, params);
        let mut local = vec![0.0; s * s];
        for c in 0..self.mesh.num_cells() {
            self.local_metric(c, u, params, floors, &mut local);
            pattern.add_cell(&mut values, c, &local);
        }
        values
    }

    /// Floors `(eps_eff, delta)` for the lagged weights: the gradient weight uses
    /// `max(eps, c max|grad u|)` and the mass weight `max(mean |u|, c max|u|)`, `c = 1e-6`.
    pub fn metric_floors(&self, u: &[f64], params: &Params) -> (f64, f64) {
        if params.p == 2.0 {
            return (0.0, 0.0);
        }
        let gmax = (0..self.mesh.num_cells()).map(|c| geom::norm(self.cell_gradient(c, u))).fold(0.0, f64::max);
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (params.epsilon.max(METRIC_FLOOR * gmax).max(1e-12), (METRIC_FLOOR * umax).max(1e-12))
    }

    /// Dense `s x s` block of the metric on cell `c`, row-major.
    pub fn local_metric(&self, c: usize, u: &[f64], params: &Params, floors: (f64, f64), local: &mut [f64]) {
        let s = self.dim() + 1;
        let p = params.p;
        let vol = self.volumes[c];
        let (wk, wm) = if p == 2.0 {
            (1.0, 1.0)
        } else {
            let g = self.cell_gradient(c, u);
            let mean = self.mesh.cell(c).iter().map(|&i| u[i as usize].abs()).sum::<f64>() / s as f64;
            (
                (floors.0 * floors.0 + geom::dot(g, g)).powf(0.5 * (p - 2.0)),
                mean.max(floors.1).powf(p - 2.0),
            )
        };
        // consistent P1 mass: vol (1 + delta_ab) / ((d + 1)(d + 2))
        let mass_factor = 1.0 / ((s * (s + 1)) as f64);
        for a in 0..s {
            for b in 0..s {
                let k = vol * wk * geom::dot(self.basis_grads[c * s + a], self.basis_grads[c * s + b]);
                let m = vol * mass_factor * if a == b { 2.0 } else { 1.0 };
                local[a * s + b] = p * (k + params.lambda * wm * m);
            }
        }
    }
}

/// Relative floor of the lagged metric weights. Larger floors make the metric a poor model of
/// the Hessian where the field is small, and the descent crawls.
const METRIC_FLOOR: f64 = 1e-6;

/// Gradients of the barycentric coordinates and the (signed) volume of a simplex.
pub fn barycentric_gradients(dim: usize, p: &[Point]) -> ([Point; 4], f64) {
    let mut g = [[0.0; 3]; 4];
    let vol = geom::signed_volume(dim, p);
    match dim {
        2 => {
            let inv = 1.0 / (2.0 * vol);
            for a in 0..3 {
                let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                // opposite edge (b -> c) rotated by +90 degrees
                let e = geom::sub(p[c], p[b]);
                g[a] = [-e[1] * inv, e[0] * inv, 0.0];
            }
        }
        3 => {
            let e1 = geom::sub(p[1], p[0]);
            let e2 = geom::sub(p[2], p[0]);
            let e3 = geom::sub(p[3], p[0]);
            let det = 6.0 * vol;
            g[1] = geom::scale(geom::cross(e2, e3), 1.0 / det);
            g[2] = geom::scale(geom::cross(e3, e1), 1.0 / det);
            g[3] = geom::scale(geom::cross(e1, e2), 1.0 / det);
            g[0] = geom::scale(geom::add(geom::add(g[1], g[2]), g[3]), -1.0);
        }
        _ => unreachable!(),
    }
    (g, vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn critical_exponent_values() {
        assert_eq!(critical_exponent(3, 2.0), 4.0);
        assert_eq!(critical_exponent(2, 1.5), 3.0);
    }

    #[test]
    fn params_reject_bad_input() {
        assert!(Params::new(3, 3.0, 1.0).is_err());
        assert!(Params::new(3, 1.0, 1.0).is_err());
        assert!(Params::new(3, 2.0, 0.0).is_err());
        assert!(Params::new(3, 2.0, 1.0).unwrap().with_beta(1.5).validate().is_err());
    }

    #[test]
    fn regime_warning_above_bound() {
        assert!(Params::new(3, 2.0, 1.0).unwrap().regime_warning().is_none());
        assert!(Params::new(3, 2.5, 1.0).unwrap().regime_warning().is_some());
    }

    #[test]
    fn barycentric_gradients_reproduce_linear_functions() {
        let p = [[0.1, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 0.9, 0.1], [0.2, 0.3, 1.1]];
        let (g, vol) = barycentric_gradients(3, &p);
        assert!(vol > 0.0);
        // u(x) = 2x - y + 3z: gradient should come back exactly
        let u: Vec<f64> = p.iter().map(|x| 2.0 * x[0] - x[1] + 3.0 * x[2]).collect();
        let grad = (0..4).fold([0.0; 3], |acc, a| geom::add(acc, geom::scale(g[a], u[a])));
        assert!(geom::dist(grad, [2.0, -1.0, 3.0]) < 1e-13);
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.1, 0.0], [0.2, 0.8, 0.0]];
        let (g, _) = barycentric_gradients(2, &tri);
        let u: Vec<f64> = tri.iter().map(|x| -x[0] + 4.0 * x[1]).collect();
        let grad = (0..3).fold([0.0; 3], |acc, a| geom::add(acc, geom::scale(g[a], u[a])));
        assert!(geom::dist(grad, [-1.0, 4.0, 0.0]) < 1e-13);
    }

    #[test]
    fn zero_trace_is_an_error() {
        let mesh = build_mesh(2, 3, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let u: Vec<f64> = mesh.is_boundary.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect();
        let params = Params::new(2, 1.5, 1.0).unwrap();
        assert!(matches!(disc.energy(&u, &params), Err(Error::ZeroTrace)));
        assert!(matches!(disc.gradient(&u, &params), Err(Error::ZeroTrace)));
        assert!(matches!(disc.trace_distribution(&u, &params), Err(Error::ZeroTrace)));
    }

    #[test]
    fn field_length_is_checked() {
        let mesh = build_mesh(2, 3, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(2, 1.5, 1.0).unwrap();
        assert!(matches!(disc.energy(&[1.0; 3], &params), Err(Error::FieldLength { .. })));
    }
    fn smooth(mesh: &SymmetricMesh) -> Vec<f64> {
        mesh.vertices.iter().map(|x| 1.2 + x[0] + 0.5 * x[1] * x[1] - 0.3 * x[2] + 0.2 * (3.0 * x[1]).sin()).collect()
    }

    fn check_fd_gradient(dim: usize, p: f64, eps: f64) {
        let mesh = build_mesh(dim, 3, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(dim, p, 2.5).unwrap().with_epsilon(eps);
        let u = smooth(&mesh);
        let g = disc.gradient(&u, &params).unwrap();
        let h = 1e-6;
        for i in (0..u.len()).step_by(u.len() / 17 + 1) {
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (disc.energy(&up, &params).unwrap().quotient - disc.energy(&dn, &params).unwrap().quotient) / (2.0 * h);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((fd - g[i]).abs() < 1e-6 * scale.max(1.0), "node {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_2d() {
        check_fd_gradient(2, 1.5, 0.0);
        check_fd_gradient(2, 1.5, 0.05);
    }

    #[test]
    fn gradient_matches_finite_differences_3d() {
        check_fd_gradient(3, 2.0, 0.0);
        check_fd_gradient(3, 1.8, 0.01);
    }

    #[test]
    fn quotient_is_scale_invariant() {
        let mesh = build_mesh(2, 4, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(2, 1.5, 3.0).unwrap();
        let u = smooth(&mesh);
        let e = disc.energy(&u, &params).unwrap().quotient;
        for s in [1e-3, 0.7, -2.0, 1e4] {
            let v: Vec<f64> = u.iter().map(|x| s * x).collect();
            let es = disc.energy(&v, &params).unwrap().quotient;
            assert!((es - e).abs() < 1e-12 * e, "scale {s}");
        }
    }

    #[test]
    fn gradient_is_orthogonal_to_the_field() {
        // 0-homogeneity: DI[u](u) = 0
        let mesh = build_mesh(3, 2, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(3, 2.0, 1.0).unwrap();
        let u = smooth(&mesh);
        let g = disc.gradient(&u, &params).unwrap();
        let gu: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        let gn: f64 = g.iter().map(|a| a.abs()).sum::<f64>() * u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gu.abs() < 1e-10 * gn);
    }

    #[test]
    fn energy_is_group_invariant() {
        let mesh = build_mesh(3, 3, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(3, 2.0, 5.0).unwrap();
        let u = smooth(&mesh);
        let e = disc.energy(&u, &params).unwrap();
        for perm in &mesh.node_maps {
            let v: Vec<f64> = perm.iter().map(|&j| u[j as usize]).collect();
            let ev = disc.energy(&v, &params).unwrap();
            assert!((ev.quotient - e.quotient).abs() < 1e-11 * e.quotient);
        }
    }

    #[test]
    fn constant_field_closed_form() {
        let mesh = build_mesh(3, 2, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(3, 2.0, 7.0).unwrap();
        let u = vec![0.8; mesh.num_vertices()];
        let e = disc.energy(&u, &params).unwrap();
        let expected = 7.0 * mesh.volume() / mesh.boundary_measure().powf(0.5);
        assert!(e.grad_term < 1e-20);
        assert!((e.quotient - expected).abs() < 1e-12 * expected);
        // the discrete ball converges to the unit ball
        let cont = 7.0 * geom::unit_ball_volume(3) / geom::unit_sphere_area(3).sqrt();
        assert!((e.quotient - cont).abs() < 0.02 * cont);
    }

    #[test]
    fn quotient_grows_with_lambda() {
        let mesh = build_mesh(2, 3, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let u = smooth(&mesh);
        let mut last = 0.0;
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let q = disc.energy(&u, &Params::new(2, 1.5, lambda).unwrap()).unwrap().quotient;
            assert!(q > last);
            last = q;
        }
    }

    #[test]
    fn cap_mass_of_constant_field_is_the_cap_fraction() {
        let mesh = build_mesh(2, 3, 1).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(2, 1.5, 1.0).unwrap();
        let set = crate::symmetry::minimal_orbital_set(mesh.group.spec, Some(0.3)).unwrap();
        let u = vec![1.0; mesh.num_vertices()];
        let frac = disc.neighborhood_mass(&u, &set, &params).unwrap();
        let expected = 3.0 * 0.6 / (2.0 * std::f64::consts::PI);
        assert!((frac - expected).abs() < 0.01, "{frac} vs {expected}");
        let dist = disc.trace_distribution(&u, &params).unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_at_p2_is_symmetric_positive() {
        let mesh = build_mesh(2, 3, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(2, 1.5, 1.0).unwrap();
        let u = smooth(&mesh);
        let vals = disc.metric_values(&u, &params);
        let pat = disc.pattern();
        let x: Vec<f64> = (0..mesh.num_vertices()).map(|i| (i as f64 * 0.37).cos()).collect();
        let mut ax = vec![0.0; x.len()];
        pat.matvec(&vals, &x, &mut ax);
        assert!(crate::sparse::dot(&x, &ax) > 0.0);
    }
}
