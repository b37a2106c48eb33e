//! Minimization of the quotient over invariant fields, with bubble initialization and
//! continuation in `lambda` and `epsilon`.
//!
//! Invariant fields are stored by their values on node orbits, so every iterate is exactly
//! invariant and group averaging after each step is the identity. Energies, gradients and the
//! preconditioner are assembled on the fundamental wedge and multiplied by the group order,
//! which is exact for invariant fields because the cell blocks are images of each other.
//!
//! The descent direction comes from `P^{-1} grad`, with `P = p (K_w + lambda M_w)` built from
//! lagged weights, refined by limited-memory BFGS pairs, and each step backtracks on
//! `u <- |u - t d|` renormalized to `|u|_{L_q(S)} = 1`. Without stored pairs at `p = 2`, the
//! unit step is nonlinear inverse iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{residual_check, Classification, ResidualReport};
use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::functional::{Discretization, EnergyBreakdown, Params};
use crate::geom;
use crate::mesh::SymmetricMesh;
use crate::sparse::{dot, solve_cg, CsrPattern};
use crate::symmetry::{invariance_residual, GroupSpec, OrbitalSet, SymmetryGroup};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo constant.
    pub sufficient_decrease: f64,
    pub min_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { initial_step: 1.0, shrink: 0.5, sufficient_decrease: 1e-4, min_step: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// `params.lambda` is the stage value; sweeps overwrite it from the schedule.
    pub params: Params,
    pub lambda_schedule: Vec<f64>,
    pub epsilon_schedule: Vec<f64>,
    pub line_search: LineSearch,
    /// Iteration cap per `epsilon` stage.
    pub max_iters: usize,
    /// Stop when `max_i |DI[u](phi_i)| <= grad_tol`, with nodes held at zero by the sign
    /// projection measured as in [`ReducedSpace::projected_grad_norm`].
    pub grad_tol: f64,
    /// Bubble width; `None` means `kappa / 3`.
    pub bubble_width: Option<f64>,
    /// Relative amplitude of the seeded perturbation of the initial field.
    pub perturbation: f64,
    /// Relative tolerance of the inner conjugate-gradient solves.
    pub cg_tol: f64,
}

impl SolverConfig {
    pub fn new(params: Params) -> Self {
        Self {
            params,
            lambda_schedule: vec![10.0, 30.0, 100.0, 300.0, 1000.0],
            epsilon_schedule: vec![1e-2, 1e-4, 1e-6, 1e-8],
            line_search: LineSearch::default(),
            max_iters: 500,
            grad_tol: 1e-6,
            bubble_width: None,
            perturbation: 1e-2,
            cg_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        self.params.validate()?;
        if self.lambda_schedule.is_empty() || self.epsilon_schedule.is_empty() {
            return bad("lambda and epsilon schedules must be nonempty");
        }
        if self.lambda_schedule.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return bad("lambda schedule entries must be positive");
        }
        if self.lambda_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("lambda schedule must be strictly increasing");
        }
        if self.epsilon_schedule.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return bad("epsilon schedule entries must be non-negative");
        }
        if self.epsilon_schedule.windows(2).any(|w| w[1] > w[0]) {
            return bad("epsilon schedule must be non-increasing");
        }
        let ls = &self.line_search;
        if !(ls.initial_step > 0.0 && ls.shrink > 0.0 && ls.shrink < 1.0 && ls.min_step > 0.0) {
            return bad("line search needs positive steps and a shrink factor in (0, 1)");
        }
        if !(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 1.0) {
            return bad("sufficient decrease constant must lie in (0, 1)");
        }
        if !(self.grad_tol > 0.0 && self.cg_tol > 0.0 && self.max_iters > 0) {
            return bad("tolerances and the iteration cap must be positive");
        }
        if let Some(w) = self.bubble_width {
            if !(w > 0.0) {
                return bad("bubble width must be positive");
            }
        }
        if !(self.perturbation >= 0.0 && self.perturbation < 1.0) {
            return bad("perturbation must lie in [0, 1)");
        }
        Ok(())
    }

    /// The `epsilon` stages actually run. At `p = 2` the regularization does not enter the
    /// gradient, so only the final value is used.
    pub fn epsilon_stages(&self) -> Vec<f64> {
        if self.params.p == 2.0 {
            vec![*self.epsilon_schedule.last().expect("validated nonempty")]
        } else {
            self.epsilon_schedule.clone()
        }
    }

    pub fn width(&self) -> f64 {
        self.bubble_width.unwrap_or(self.params.kappa / 3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub grad_term: f64,
    pub mass_term: f64,
    pub trace_term: f64,
    pub quotient: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub lambda: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub quotient: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub failure: Option<String>,
}

/// One minimization at a fixed `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub group_spec: GroupSpec,
    pub orbital_set: OrbitalSet,
    pub lambda: f64,
    pub seed: u64,
    /// Normalized to `|u|_{L_q(S)} = 1`.
    pub field: NodalField,
    /// Full-mesh energy at `epsilon = 0`.
    pub energy: EnergyBreakdown,
    pub trace: Vec<TraceRow>,
    pub stages: Vec<StageRecord>,
    pub iterations: usize,
    /// `max_i |DI[u](phi_i)|` at the last stage.
    pub grad_norm: f64,
    pub converged: bool,
    pub failure: Option<String>,
    pub neighborhood_mass: f64,
    pub beta: f64,
    /// Whether `neighborhood_mass >= 1 - beta` held at termination.
    pub constraint_ok: bool,
    pub invariance_residual: f64,
    pub reinitialized: bool,
    pub classification: Option<Classification>,
}

impl Branch {
    /// A branch violating the neighbourhood constraint has escaped the admissible set.
    pub fn escaped(&self) -> bool {
        !self.constraint_ok
    }
}

/// Invariant fields in orbit coordinates, with wedge-assembled operators.
pub struct ReducedSpace<'d, 'm> {
    pub disc: &'d Discretization<'m>,
    /// Orbit index of every node.
    pub orbit_of: Vec<u32>,
    pub orbit_size: Vec<u32>,
    order: f64,
    wedge_cells: Vec<usize>,
    pattern: CsrPattern,
}

impl<'d, 'm> ReducedSpace<'d, 'm> {
    pub fn new(disc: &'d Discretization<'m>) -> Self {
        let mesh = disc.mesh;
        let mut orbit_of = vec![0u32; mesh.num_vertices()];
        let mut orbit_size = Vec::new();
        for (o, members) in mesh.node_orbits().enumerate() {
            for &i in members {
                orbit_of[i as usize] = o as u32;
            }
            orbit_size.push(members.len() as u32);
        }
        let wedge_cells: Vec<usize> = (0..mesh.num_cells()).filter(|&c| mesh.cell_wedge(c) == 0).collect();
        let orbit_cells: Vec<u32> =
            wedge_cells.iter().flat_map(|&c| mesh.cell(c).iter().map(|&i| orbit_of[i as usize])).collect();
        let pattern = CsrPattern::from_cells(orbit_size.len(), &orbit_cells, mesh.dim + 1);
        Self { disc, orbit_of, orbit_size, order: mesh.group.order() as f64, wedge_cells, pattern }
    }

    pub fn dim(&self) -> usize {
        self.orbit_size.len()
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.orbit_of.iter().map(|&o| x[o as usize]).collect()
    }

    /// Orbit values of an invariant field (the orbit mean, so any field is accepted).
    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (i, &o) in self.orbit_of.iter().enumerate() {
            x[o as usize] += u[i];
        }
        for (v, &n) in x.iter_mut().zip(&self.orbit_size) {
            *v /= n as f64;
        }
        x
    }

    pub fn energy(&self, u: &[f64], params: &Params) -> Result<EnergyBreakdown> {
        let raw = self.disc.wedge_integrals(u, params)?;
        let (grad, mass, trace) = (raw.grad * self.order, raw.mass * self.order, raw.trace * self.order);
        if !(trace > 0.0) {
            return Err(Error::ZeroTrace);
        }
        let trace_term = trace.powf(params.p / params.q);
        Ok(EnergyBreakdown {
            grad_term: grad,
            mass_term: mass,
            trace_term,
            quotient: (grad + params.lambda * mass) / trace_term,
            lambda: params.lambda,
            p: params.p,
            q: params.q,
            epsilon: params.epsilon,
        })
    }

    /// Energy and the orbit-coordinate gradient `sum_{i in O} DI[u](phi_i)`.
    pub fn gradient(&self, u: &[f64], params: &Params) -> Result<(EnergyBreakdown, Vec<f64>)> {
        let e = self.energy(u, params)?;
        let w = self.disc.wedge_weak_form(u, params)?;
        let p = params.p;
        let d = e.trace_term;
        let t = d.powf(params.q / p);
        let numer = e.grad_term + params.lambda * e.mass_term;
        let mut g = vec![0.0; self.dim()];
        for (i, &o) in self.orbit_of.iter().enumerate() {
            let gi = p * (w.stiffness[i] + params.lambda * w.mass[i]) / d - numer * p * w.trace[i] / (d * t);
            g[o as usize] += gi;
        }
        for v in &mut g {
            *v *= self.order;
        }
        Ok((e, g))
    }

    /// `max_i |DI[u](phi_i)|` from the orbit gradient: the nodal gradient of an invariant field
    /// is itself invariant, so it is the orbit sum over the orbit size.
    pub fn nodal_grad_norm(&self, g: &[f64]) -> f64 {
        g.iter().zip(&self.orbit_size).fold(0.0, |m, (v, &n)| m.max(v.abs() / n as f64))
    }

    /// Stationarity measure on the cone `u >= 0`: as [`Self::nodal_grad_norm`], except that an
    /// orbit pushed towards zero counts at most its own value `x`, i.e. `|x - max(x - g, 0)|`.
    pub fn projected_grad_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        g.iter().zip(&self.orbit_size).zip(x).fold(0.0, |m, ((v, &n), &xi)| {
            let gi = v / n as f64;
            m.max(if gi > 0.0 { gi.min(xi) } else { -gi })
        })
    }

    /// `S^T P S` for the lagged metric `P`, on the orbit pattern.
    pub fn metric(&self, u: &[f64], params: &Params) -> Vec<f64> {
        let s = self.disc.dim() + 1;
        let floors = self.disc.metric_floors(u, params);
        let mut values = vec![0.0; self.pattern.nnz()];
        let mut local = vec![0.0; s * s];
        for (pos, &c) in self.wedge_cells.iter().enumerate() {
            self.disc.local_metric(c, u, params, floors, &mut local);
            for v in &mut local {
                *v *= self.order;
            }
            self.pattern.add_cell(&mut values, pos, &local);
        }
        values
    }

    /// Scales orbit values to unit trace norm and returns the field.
    fn normalize(&self, x: &mut [f64], q: f64) -> Result<Vec<f64>> {
        let mut u = self.expand(x);
        let t = self.disc.trace_norm(&u, q);
        if !(t > 0.0) {
            return Err(Error::ZeroTrace);
        }
        for v in x.iter_mut() {
            *v /= t;
        }
        for v in u.iter_mut() {
            *v /= t;
        }
        Ok(u)
    }
}

/// Unsymmetrized sum of `exp(-|x - x_j| / w)` over the given points.
pub fn bubble_profile(points: &[geom::Point], w: f64, mesh: &SymmetricMesh) -> NodalField {
    NodalField(
        mesh.vertices
            .iter()
            .map(|&x| points.iter().map(|&c| (-geom::dist(x, c) / w).exp()).sum())
            .collect(),
    )
}

/// Exponential bumps at the orbit points, group averaged.
pub fn bubble_init(set: &OrbitalSet, w: f64, mesh: &SymmetricMesh) -> Result<NodalField> {
    let half_distance = 0.5 * set.min_geodesic_separation();
    if !(w > 0.0 && w < half_distance) {
        return Err(Error::OverlappingBubbles { width: w, half_distance });
    }
    let u = bubble_profile(&set.points, w, mesh);
    Ok(NodalField(mesh.orbit_average(&u)))
}

/// Multiplies every node by `1 + amplitude * xi` with `xi` uniform in `[-1, 1]` from the seed,
/// then group averages.
pub fn perturb(u: &[f64], seed: u64, amplitude: f64, mesh: &SymmetricMesh) -> NodalField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = u.iter().map(|&x| x * (1.0 + amplitude * rng.gen_range(-1.0..=1.0))).collect();
    NodalField(mesh.orbit_average(&v))
}

/// Runs the `epsilon` stages at `config.params.lambda` starting from `u0`.
pub fn minimize(
    u0: &[f64],
    config: &SolverConfig,
    group: &SymmetryGroup,
    mesh: &SymmetricMesh,
    set: &OrbitalSet,
) -> Result<Branch> {
    config.validate()?;
    if group.spec != mesh.group.spec {
        return Err(Error::GroupMismatch(format!("mesh {:?}, solver {:?}", mesh.group.spec, group.spec)));
    }
    mesh.check_field(u0)?;
    let disc = Discretization::new(mesh)?;
    let space = ReducedSpace::new(&disc);
    minimize_in(&space, u0, config, set)
}

/// As [`minimize`], reusing a prepared reduced space.
pub fn minimize_in(space: &ReducedSpace, u0: &[f64], config: &SolverConfig, set: &OrbitalSet) -> Result<Branch> {
    let mesh = space.disc.mesh;
    let lambda = config.params.lambda;
    let ls = config.line_search;
    let mut x: Vec<f64> = space.restrict(u0).iter().map(|v| v.abs()).collect();
    let mut u = space.normalize(&mut x, config.params.q)?;
    let mut trace = Vec::new();
    let mut stages = Vec::new();
    let mut total = 0usize;
    let mut grad_norm = f64::INFINITY;
    let mut failure = None;
    let mut converged = false;
    for eps in config.epsilon_stages() {
        let params = config.params.with_epsilon(eps);
        let (mut e, mut g) = space.gradient(&u, &params)?;
        let mut stage_failure = None;
        let mut stage_converged = false;
        let mut it = 0;
        let mut memory = Lbfgs::new(LBFGS_MEMORY);
        loop {
            if !e.quotient.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEnergy(total));
            }
            grad_norm = space.projected_grad_norm(&x, &g);
            trace.push(TraceRow {
                iteration: total,
                lambda,
                epsilon: eps,
                grad_term: e.grad_term,
                mass_term: e.mass_term,
                trace_term: e.trace_term,
                quotient: e.quotient,
                grad_norm,
            });
            if grad_norm <= config.grad_tol {
                stage_converged = true;
                break;
            }
            if it == config.max_iters {
                break;
            }
            if it >= STALL_WINDOW {
                let before = trace[trace.len() - 1 - STALL_WINDOW].quotient;
                if before - e.quotient <= STALL_TOL * e.quotient.abs() {
                    stage_failure = Some(format!("stalled at iteration {total} (|grad| = {grad_norm:e})"));
                    break;
                }
            }
            let metric = space.metric(&u, &params);
            let precondition = |r: &[f64]| solve_cg(&space.pattern, &metric, r, config.cg_tol, 10 * space.dim()).0;
            let mut d = memory.direction(&g, precondition);
            let mut slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            if !(slope > 0.0) && !memory.is_empty() {
                memory.clear();
                d = memory.direction(&g, precondition);
                slope = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            }
            let mut accepted = line_search(space, &x, &d, e.quotient, slope, &params, &ls, total)?;
            if accepted.is_none() && !memory.is_empty() {
                // retry along the plain preconditioned gradient
                memory.clear();
                d = memory.direction(&g, precondition);
                slope = g.iter().zip(&d).map(|(a, b)| a * b).sum();
                accepted = line_search(space, &x, &d, e.quotient, slope, &params, &ls, total)?;
            }
            let Some((xt, ut, t)) = accepted else {
                stage_failure = Some(format!("step underflow at iteration {total} (|grad| = {grad_norm:e})"));
                break;
            };
            let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            let g_old = std::mem::take(&mut g);
            x = xt;
            u = ut;
            (e, g) = space.gradient(&u, &params)?;
            if t >= MIN_CURVATURE_STEP {
                memory.push(step, g.iter().zip(&g_old).map(|(a, b)| a - b).collect());
            } else {
                // a heavily backtracked step carries round-off, not curvature
                memory.clear();
            }
            it += 1;
            total += 1;
        }
        log::debug!(
            "lambda {lambda} eps {eps}: {it} iterations, quotient {}, |grad| {grad_norm:e}",
            e.quotient
        );
        stages.push(StageRecord {
            lambda,
            epsilon: eps,
            iterations: it,
            quotient: e.quotient,
            grad_norm,
            converged: stage_converged,
            failure: stage_failure.clone(),
        });
        converged = stage_converged;
        failure = stage_failure;
    }
    let params = config.params;
    let energy = space.disc.energy(&u, &params.with_epsilon(0.0))?;
    let neighborhood_mass = space.disc.neighborhood_mass(&u, set, &params)?;
    let invariance = invariance_residual(&u, mesh, &mesh.group)?;
    log::info!(
        "k={} lambda={lambda}: quotient {} after {total} iterations, cap mass {neighborhood_mass:.4}",
        mesh.group.spec.k,
        energy.quotient
    );
    Ok(Branch {
        group_spec: mesh.group.spec,
        orbital_set: set.clone(),
        lambda,
        seed: 0,
        field: NodalField(u),
        energy,
        trace,
        stages,
        iterations: total,
        grad_norm,
        converged,
        failure,
        neighborhood_mass,
        beta: params.beta,
        constraint_ok: neighborhood_mass >= 1.0 - params.beta,
        invariance_residual: invariance,
        reinitialized: false,
        classification: None,
    })
}

/// Orbit values, nodal field and step length of an accepted line search.
type Accepted = (Vec<f64>, Vec<f64>, f64);

/// Armijo backtracking along `x <- |x - t d|`, renormalized. Returns the accepted orbit values
/// values, field and step, or `None` when the step underflows.
#[allow(clippy::too_many_arguments)]
fn line_search(
    space: &ReducedSpace,
    x: &[f64],
    d: &[f64],
    quotient: f64,
    slope: f64,
    params: &Params,
    ls: &LineSearch,
    iteration: usize,
) -> Result<Option<Accepted>> {
    let mut t = ls.initial_step;
    while t >= ls.min_step {
        let mut trial: Vec<f64> = x.iter().zip(d).map(|(a, b)| (a - t * b).abs()).collect();
        if let Ok(ut) = space.normalize(&mut trial, params.q) {
            let et = space.energy(&ut, params)?;
            if !et.quotient.is_finite() {
                return Err(Error::NonFiniteEnergy(iteration));
            }
            if et.quotient <= quotient - ls.sufficient_decrease * t * slope {
                return Ok(Some((trial, ut, t)));
            }
        }
        t *= ls.shrink;
    }
    Ok(None)
}

const LBFGS_MEMORY: usize = 8;
/// A stage whose quotient drops by at most `STALL_TOL` (relative) over `STALL_WINDOW`
/// iterations has reached round-off and stops.
const STALL_WINDOW: usize = 100;
const STALL_TOL: f64 = 1e-10;
/// Steps shorter than this (relative to the unit step) reset the quasi-Newton memory.
const MIN_CURVATURE_STEP: f64 = 1e-3;

/// Limited-memory BFGS pairs on top of the metric preconditioner.
struct Lbfgs {
    cap: usize,
    pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    fn new(cap: usize) -> Self {
        Self { cap, pairs: Default::default() }
    }

    fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion with `H_0 = P^{-1}`.
    fn direction(&self, g: &[f64], precondition: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let mut r = precondition(&q);
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &r);
            for (ri, si) in r.iter_mut().zip(s) {
                *ri += (a - b) * si;
            }
        }
        r
    }
}

/// Where a sweep starts: the stage index and, when resuming, the field to warm-start from.
#[derive(Debug, Clone, Default)]
pub struct SweepStart {
    pub stage: usize,
    pub field: Option<NodalField>,
}

/// Solves at each scheduled `lambda`, warm-starting from the previous minimizer. A stage that
/// fails with a non-finite energy is retried once from the bubble initialization and flagged.
pub fn lambda_sweep(
    config: &SolverConfig,
    group: &SymmetryGroup,
    set: &OrbitalSet,
    mesh: &SymmetricMesh,
    seed: u64,
) -> Result<Vec<Branch>> {
    let mut out = Vec::new();
    lambda_sweep_with(config, group, set, mesh, seed, SweepStart::default(), |b| {
        out.push(b.clone());
        Ok(())
    })?;
    Ok(out)
}

/// [`lambda_sweep`] with a resume point and a callback after every stage (for checkpoints).
pub fn lambda_sweep_with(
    config: &SolverConfig,
    group: &SymmetryGroup,
    set: &OrbitalSet,
    mesh: &SymmetricMesh,
    seed: u64,
    start: SweepStart,
    mut on_stage: impl FnMut(&Branch) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    if group.spec != mesh.group.spec {
        return Err(Error::GroupMismatch(format!("mesh {:?}, solver {:?}", mesh.group.spec, group.spec)));
    }
    let disc = Discretization::new(mesh)?;
    let space = ReducedSpace::new(&disc);
    let fresh = || -> Result<NodalField> {
        let bubble = bubble_init(set, config.width(), mesh)?;
        Ok(perturb(&bubble, seed, config.perturbation, mesh))
    };
    let mut u = match start.field {
        Some(f) => f,
        None => fresh()?,
    };
    for &lambda in config.lambda_schedule.iter().skip(start.stage) {
        let mut cfg = config.clone();
        cfg.params.lambda = lambda;
        let mut branch = match minimize_in(&space, &u, &cfg, set) {
            Ok(b) => b,
            Err(Error::NonFiniteEnergy(it)) => {
                log::warn!("lambda {lambda}: non-finite energy at iteration {it}, restarting from bubbles");
                let mut b = minimize_in(&space, &fresh()?, &cfg, set)?;
                b.reinitialized = true;
                b
            }
            Err(e) => return Err(e),
        };
        branch.seed = seed;
        u = branch.field.clone();
        on_stage(&branch)?;
    }
    Ok(())
}

/// A solution of the boundary problem recovered from a normalized minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSolution {
    /// Lagrange multiplier, equal to the final quotient.
    pub mu: f64,
    /// `1 / (q - p)`.
    pub exponent: f64,
    /// `mu^{1/(q-p)} u`.
    pub field: NodalField,
    pub residual: ResidualReport,
}

/// Scales the normalized minimizer by `mu^{1/(q-p)}` so that it solves the problem with unit
/// boundary coefficient, and reports the weak residual of that problem.
pub fn to_pde_solution(branch: &Branch, mesh: &SymmetricMesh) -> Result<PdeSolution> {
    let (p, q) = (branch.energy.p, branch.energy.q);
    if !(q > p) {
        return Err(Error::InvalidParams(format!("need q > p, got p = {p}, q = {q}")));
    }
    let mu = branch.energy.quotient;
    let exponent = scaling_exponent(p, q);
    let field = branch.field.scaled(mu.powf(exponent));
    let residual = residual_check(&field, branch.lambda, 1.0, p, q, mesh)?;
    Ok(PdeSolution { mu, exponent, field, residual })
}

/// Exponent `1/(q - p)` such that `mu^{1/(q-p)} u` has unit boundary coefficient when `u` is a
/// normalized critical point with multiplier `mu`.
pub fn scaling_exponent(p: f64, q: f64) -> f64 {
    1.0 / (q - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::symmetry::minimal_orbital_set;

    fn setup(dim: usize, k: usize, r: usize) -> (SymmetricMesh, OrbitalSet) {
        let mesh = build_mesh(dim, k, r).unwrap();
        let set = minimal_orbital_set(mesh.group.spec, None).unwrap();
        (mesh, set)
    }

    #[test]
    fn config_validation() {
        let params = Params::new(3, 2.0, 10.0).unwrap();
        let mut c = SolverConfig::new(params);
        assert!(c.validate().is_ok());
        c.lambda_schedule = vec![10.0, 5.0];
        assert!(c.validate().is_err());
        c.lambda_schedule = vec![];
        assert!(c.validate().is_err());
        let mut c = SolverConfig::new(params);
        c.epsilon_schedule = vec![1e-8, 1e-2];
        assert!(c.validate().is_err());
        let mut c = SolverConfig::new(params);
        c.grad_tol = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn p2_runs_a_single_epsilon_stage() {
        let c = SolverConfig::new(Params::new(3, 2.0, 10.0).unwrap());
        assert_eq!(c.epsilon_stages(), vec![1e-8]);
        let c = SolverConfig::new(Params::new(2, 1.5, 10.0).unwrap());
        assert_eq!(c.epsilon_stages().len(), 4);
    }

    #[test]
    fn scaling_exponent_at_n3_p2() {
        assert_eq!(scaling_exponent(2.0, 4.0), 0.5);
    }

    #[test]
    fn reduced_operators_match_the_full_mesh() {
        let (mesh, _) = setup(3, 3, 0);
        let disc = Discretization::new(&mesh).unwrap();
        let space = ReducedSpace::new(&disc);
        let params = Params::new(3, 2.0, 7.0).unwrap();
        let raw: Vec<f64> = mesh.vertices.iter().map(|x| 1.0 + x[0] * x[0] + 0.3 * x[2] * x[2] + x[1]).collect();
        let u = mesh.orbit_average(&raw);
        let full = disc.energy(&u, &params).unwrap();
        let (red, g) = space.gradient(&u, &params).unwrap();
        assert!((full.quotient - red.quotient).abs() < 1e-10 * full.quotient);
        let gfull = disc.gradient(&u, &params).unwrap();
        let mut gsum = vec![0.0; space.dim()];
        for (i, &o) in space.orbit_of.iter().enumerate() {
            gsum[o as usize] += gfull[i];
        }
        let scale = gsum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(&gsum) {
            assert!((a - b).abs() < 1e-10 * scale);
        }
        let gmax = gfull.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((space.nodal_grad_norm(&g) - gmax).abs() < 1e-10 * gmax);
    }

    #[test]
    fn bubble_init_is_symmetric_and_rejects_overlap() {
        let (mesh, set) = setup(2, 3, 1);
        let u = bubble_init(&set, set.kappa / 3.0, &mesh).unwrap();
        let at: Vec<f64> = set
            .points
            .iter()
            .map(|&x| {
                let i = (0..mesh.num_vertices())
                    .min_by(|&a, &b| geom::dist(mesh.vertices[a], x).total_cmp(&geom::dist(mesh.vertices[b], x)))
                    .unwrap();
                u[i]
            })
            .collect();
        for v in &at {
            assert!((v - at[0]).abs() <= 1e-12 * at[0]);
        }
        assert!(matches!(bubble_init(&set, set.kappa * 1.5, &mesh), Err(Error::OverlappingBubbles { .. })));
    }

    #[test]
    fn single_bubble_decays_from_its_centre() {
        let (mesh, _) = setup(2, 2, 0);
        let x0 = [0.0, 1.0, 0.0];
        let u = bubble_profile(&[x0], 0.3, &mesh);
        let mut order: Vec<usize> = (0..mesh.num_vertices()).collect();
        order.sort_by(|&a, &b| geom::dist(mesh.vertices[a], x0).total_cmp(&geom::dist(mesh.vertices[b], x0)));
        for w in order.windows(2) {
            assert!(u[w[1]] <= u[w[0]]);
        }
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let (mesh, set) = setup(3, 2, 0);
        let group = mesh.group.clone();
        let mut cfg = SolverConfig::new(Params::new(3, 2.0, 5.0).unwrap().with_kappa(set.kappa));
        cfg.grad_tol = 1e-9;
        cfg.max_iters = 2000;
        let u0 = bubble_init(&set, set.kappa / 3.0, &mesh).unwrap();
        let first = minimize(&u0, &cfg, &group, &mesh, &set).unwrap();
        assert!(first.converged, "{:?}", first.stages);
        let again = minimize(&first.field, &cfg, &group, &mesh, &set).unwrap();
        assert!(again.iterations <= 2);
        assert!((again.energy.quotient - first.energy.quotient).abs() <= 1e-10 * first.energy.quotient);
    }

    #[test]
    fn descent_is_monotone_and_invariant() {
        let (mesh, set) = setup(3, 2, 0);
        let group = mesh.group.clone();
        let mut cfg = SolverConfig::new(Params::new(3, 2.0, 30.0).unwrap().with_kappa(set.kappa));
        cfg.max_iters = 40;
        let u0 = perturb(&bubble_init(&set, set.kappa / 3.0, &mesh).unwrap(), 7, 0.05, &mesh);
        let b = minimize(&u0, &cfg, &group, &mesh, &set).unwrap();
        for w in b.trace.windows(2) {
            assert!(w[1].quotient <= w[0].quotient);
        }
        assert!(b.invariance_residual <= 1e-12);
        assert!(b.field.iter().all(|&v| v >= 0.0));
        let norm = Discretization::new(&mesh).unwrap().trace_norm(&b.field, 4.0);
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
