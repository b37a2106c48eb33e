//! Small wasm front end over `ctl-core` for the static demo page in `www/`.
//!
//! Every export returns a JSON string so the page needs no generated type glue beyond the
//! functions themselves. The plain Rust functions below are what the exports wrap.

use ctl_core::analysis::{default_mass_floor, default_r_peak, detect_peaks};
use ctl_core::functional::{Discretization, Params};
use ctl_core::mesh::{build_mesh, SymmetricMesh};
use ctl_core::optimizer::{bubble_init, perturb, SolverConfig};
use ctl_core::symmetry::{minimal_orbital_set, OrbitalSet};
use ctl_core::trace_constant::{closed_form_p2, halfspace_oracle, threshold, Method};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Keeps a single solve interactive in the browser.
pub const MAX_REFINEMENT: usize = 3;
const ORACLE_RADIUS: f64 = 10.0;
const ORACLE_RESOLUTION: usize = 8;

pub type DemoResult<T> = Result<T, String>;

#[derive(Debug, Clone, Serialize)]
pub struct Disk {
    pub k: usize,
    pub refinement: usize,
    /// `[x0, y0, x1, y1, ..]`
    pub vertices: Vec<f64>,
    pub triangles: Vec<u32>,
    pub orbit: Vec<[f64; 2]>,
    pub kappa: f64,
    pub field: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakView {
    pub x: f64,
    pub y: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub disk: Disk,
    pub p: f64,
    pub lambda: f64,
    pub quotient: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub failure: Option<String>,
    /// Quotient after every accepted step.
    pub history: Vec<f64>,
    pub peaks: Vec<PeakView>,
    pub captured_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub m: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdTable {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub method: Method,
    pub k_estimate: f64,
    pub rows: Vec<ThresholdRow>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn planar(k: usize, refinement: usize) -> DemoResult<(SymmetricMesh, OrbitalSet)> {
    if refinement > MAX_REFINEMENT {
        return Err(format!("refinement {refinement} exceeds the demo limit {MAX_REFINEMENT}"));
    }
    let mesh = build_mesh(2, k, refinement).map_err(err)?;
    let set = minimal_orbital_set(mesh.group.spec, None).map_err(err)?;
    Ok((mesh, set))
}

fn disk(k: usize, refinement: usize, mesh: &SymmetricMesh, set: &OrbitalSet, field: Vec<f64>) -> Disk {
    Disk {
        k,
        refinement,
        vertices: mesh.vertices.iter().flat_map(|v| [v[0], v[1]]).collect(),
        triangles: mesh.cells.clone(),
        orbit: set.points.iter().map(|x| [x[0], x[1]]).collect(),
        kappa: set.kappa,
        field,
    }
}

/// The `C_k`-symmetric disk mesh with its bubble initialization.
pub fn initial_disk(k: usize, refinement: usize) -> DemoResult<Disk> {
    let (mesh, set) = planar(k, refinement)?;
    let u = bubble_init(&set, set.kappa / 3.0, &mesh).map_err(err)?;
    Ok(disk(k, refinement, &mesh, &set, u.0))
}

/// Minimizes on the disk from the perturbed bubble start and locates the boundary peaks.
pub fn solve_disk(k: usize, refinement: usize, p: f64, lambda: f64, seed: u64) -> DemoResult<Solution> {
    let (mesh, set) = planar(k, refinement)?;
    let params = Params::new(2, p, lambda).map_err(err)?.with_kappa(set.kappa);
    let cfg = SolverConfig::new(params);
    let u0 = bubble_init(&set, cfg.width(), &mesh).map_err(err)?;
    let u0 = perturb(&u0, seed, cfg.perturbation, &mesh);
    let b = ctl_core::optimizer::minimize(&u0, &cfg, &mesh.group, &mesh, &set).map_err(err)?;
    let disc = Discretization::new(&mesh).map_err(err)?;
    let report = detect_peaks(&b.field, &disc, params.q, default_r_peak(&set), default_mass_floor(&set), Some(&set))
        .map_err(err)?;
    Ok(Solution {
        p,
        lambda,
        quotient: b.energy.quotient,
        iterations: b.iterations,
        grad_norm: b.grad_norm,
        converged: b.converged,
        failure: b.failure.clone(),
        history: b.trace.iter().map(|t| t.quotient).collect(),
        peaks: report.peaks.iter().map(|pk| PeakView { x: pk.location[0], y: pk.location[1], mass: pk.mass }).collect(),
        captured_mass: report.total_mass,
        disk: disk(k, refinement, &mesh, &set, b.field.0),
    })
}

/// Threshold levels `K m^{1-p/q}` for `m = 1..=max_m`. Uses the closed form at `p = 2` and a
/// coarse half-space oracle otherwise.
pub fn threshold_table(n: usize, p: f64, max_m: usize) -> DemoResult<ThresholdTable> {
    let params = Params::new(n, p, 1.0).map_err(err)?;
    let (method, k_estimate) = if p == 2.0 {
        (Method::ClosedForm, closed_form_p2(n).map_err(err)?)
    } else {
        (Method::Oracle, halfspace_oracle(n, p, ORACLE_RADIUS, ORACLE_RESOLUTION).map_err(err)?.k_estimate)
    };
    let rows = (1..=max_m).map(|m| ThresholdRow { m, threshold: threshold(n, p, m, k_estimate, method).threshold }).collect();
    Ok(ThresholdTable { n, p, q: params.q, method, k_estimate, rows })
}

fn to_js<T: Serialize>(r: DemoResult<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = initialDisk)]
pub fn initial_disk_js(k: usize, refinement: usize) -> Result<String, JsError> {
    to_js(initial_disk(k, refinement))
}

#[wasm_bindgen(js_name = solveDisk)]
pub fn solve_disk_js(k: usize, refinement: usize, p: f64, lambda: f64, seed: u32) -> Result<String, JsError> {
    to_js(solve_disk(k, refinement, p, lambda, seed as u64))
}

#[wasm_bindgen(js_name = thresholdTable)]
pub fn threshold_table_js(n: usize, p: f64, max_m: usize) -> Result<String, JsError> {
    to_js(threshold_table(n, p, max_m))
}
