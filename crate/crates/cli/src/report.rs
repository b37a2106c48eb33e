//! CSV tables, the summary document and the plots of a set of branches.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use ctl_core::analysis::{nonequivalence_report, sharpening_series, is_monotone_nondecreasing, NonequivalenceReport, ResidualReport};
use ctl_core::functional::Discretization;
use ctl_core::mesh::SymmetricMesh;
use ctl_core::optimizer::Branch;
use ctl_core::trace_constant::ThresholdSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::svg::{color, BarChart, LineChart, RefLine, Scale, Series};

/// Azimuthal bins of the boundary mass density plot.
pub const DENSITY_BINS: usize = 180;

/// A solved branch with the quantities derived from it after the solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    /// Has its `classification` filled in.
    pub branch: Branch,
    pub threshold: ThresholdSpec,
    /// Multiplier of the scaled solution, equal to the final quotient.
    pub mu: f64,
    pub residual: ResidualReport,
}

/// One CSV row per branch per `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub k: usize,
    pub l: usize,
    pub seed: u64,
    pub lambda: f64,
    pub quotient: f64,
    pub grad_term: f64,
    pub mass_term: f64,
    pub trace_term: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub failure: String,
    pub neighborhood_mass: f64,
    pub constraint_ok: bool,
    pub invariance_residual: f64,
    pub reinitialized: bool,
    pub peak_count: usize,
    pub captured_mass: f64,
    /// Semicolon-separated.
    pub peak_masses: String,
    pub matched: bool,
    pub concentrated: bool,
    pub threshold: f64,
    pub threshold_ratio: f64,
    pub threshold_margin: f64,
    pub residual_invariant_max: f64,
    pub residual_full_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    pub k: usize,
    pub seed: u64,
    pub lambda: f64,
    pub iteration: usize,
    pub epsilon: f64,
    pub grad_term: f64,
    pub mass_term: f64,
    pub trace_term: f64,
    pub quotient: f64,
    pub grad_norm: f64,
}

/// Per-family facts across the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub k: usize,
    pub seed: u64,
    /// Smallest swept `lambda` at which the branch is concentrated.
    pub lambda_0: Option<f64>,
    /// Mean cap mass per `lambda`, in schedule order.
    pub sharpening: Vec<f64>,
    pub sharpens_monotonically: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub lambda: f64,
    pub branches: Vec<BranchRow>,
    pub nonequivalent_count: usize,
    pub classes: NonequivalenceReport,
    pub families: Vec<FamilySummary>,
}

pub fn branch_row(r: &BranchRecord) -> BranchRow {
    let b = &r.branch;
    let c = b.classification.as_ref();
    BranchRow {
        k: b.group_spec.k,
        l: b.group_spec.l,
        seed: b.seed,
        lambda: b.lambda,
        quotient: b.energy.quotient,
        grad_term: b.energy.grad_term,
        mass_term: b.energy.mass_term,
        trace_term: b.energy.trace_term,
        iterations: b.iterations,
        grad_norm: b.grad_norm,
        converged: b.converged,
        failure: b.failure.clone().unwrap_or_default(),
        neighborhood_mass: b.neighborhood_mass,
        constraint_ok: b.constraint_ok,
        invariance_residual: b.invariance_residual,
        reinitialized: b.reinitialized,
        peak_count: c.map_or(0, |c| c.peak_count),
        captured_mass: c.map_or(0.0, |c| c.captured_mass),
        peak_masses: c.map_or(String::new(), |c| {
            c.peak_masses.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";")
        }),
        matched: c.is_some_and(|c| c.matched),
        concentrated: c.is_some_and(|c| c.concentrated),
        threshold: r.threshold.threshold,
        threshold_ratio: b.energy.quotient / r.threshold.threshold,
        threshold_margin: r.threshold.threshold - b.energy.quotient,
        residual_invariant_max: r.residual.invariant_max,
        residual_full_max: r.residual.full_max,
    }
}

/// Orders records by `(k, seed, lambda)` so every output is independent of completion order.
pub fn sort_records(records: &mut [BranchRecord]) {
    records.sort_by(|a, b| {
        (a.branch.group_spec.k, a.branch.seed)
            .cmp(&(b.branch.group_spec.k, b.branch.seed))
            .then(a.branch.lambda.total_cmp(&b.branch.lambda))
    });
}

pub fn write_branches_csv(path: &Path, records: &[BranchRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(branch_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traces_csv(path: &Path, records: &[BranchRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        let b = &r.branch;
        for t in &b.trace {
            w.serialize(TraceCsvRow {
                k: b.group_spec.k,
                seed: b.seed,
                lambda: t.lambda,
                iteration: t.iteration,
                epsilon: t.epsilon,
                grad_term: t.grad_term,
                mass_term: t.mass_term,
                trace_term: t.trace_term,
                quotient: t.quotient,
                grad_norm: t.grad_norm,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn families(records: &[BranchRecord]) -> BTreeMap<(usize, u64), Vec<&BranchRecord>> {
    let mut out: BTreeMap<(usize, u64), Vec<&BranchRecord>> = BTreeMap::new();
    for r in records {
        out.entry((r.branch.group_spec.k, r.branch.seed)).or_default().push(r);
    }
    out
}

/// Summary at the largest `lambda` common to all families. `meshes` maps `k` to its mesh and is
/// needed for the sharpening series.
pub fn summarize(records: &[BranchRecord], meshes: &BTreeMap<usize, SymmetricMesh>) -> CliResult<Summary> {
    let branches: Vec<Branch> = records.iter().map(|r| r.branch.clone()).collect();
    let classes = nonequivalence_report(&branches);
    let mut fams = Vec::new();
    for ((k, seed), rs) in families(records) {
        let bs: Vec<Branch> = rs.iter().map(|r| r.branch.clone()).collect();
        let sharpening = match meshes.get(&k) {
            Some(mesh) => sharpening_series(&bs, mesh)?,
            None => Vec::new(),
        };
        let lambda_0 = rs
            .iter()
            .find(|r| r.branch.classification.as_ref().is_some_and(|c| c.concentrated))
            .map(|r| r.branch.lambda);
        fams.push(FamilySummary {
            k,
            seed,
            lambda_0,
            sharpens_monotonically: is_monotone_nondecreasing(&sharpening),
            sharpening,
        });
    }
    Ok(Summary {
        lambda: classes.lambda,
        branches: records.iter().filter(|r| r.branch.lambda == classes.lambda).map(branch_row).collect(),
        nonequivalent_count: classes.nonequivalent_count,
        classes,
        families: fams,
    })
}

pub fn energy_chart(records: &[BranchRecord]) -> LineChart {
    let fams = families(records);
    let mut series = Vec::new();
    let mut ref_lines: BTreeMap<usize, RefLine> = BTreeMap::new();
    let ks: Vec<usize> = {
        let mut ks: Vec<usize> = fams.keys().map(|(k, _)| *k).collect();
        ks.dedup();
        ks
    };
    for ((k, seed), rs) in &fams {
        let c = color(ks.iter().position(|x| x == k).unwrap_or(0));
        series.push(Series {
            label: format!("k={k} seed={seed}"),
            color: c,
            points: rs.iter().map(|r| (r.branch.lambda, r.branch.energy.quotient)).collect(),
            markers: true,
        });
        ref_lines.entry(*k).or_insert(RefLine { label: format!("K k^(1-p/q), k={k}"), color: c, y: rs[0].threshold.threshold });
    }
    LineChart {
        title: "Minimal quotient along the lambda sweep".into(),
        x_label: "lambda".into(),
        y_label: "quotient".into(),
        x_scale: Scale::Log10,
        series,
        ref_lines: ref_lines.into_values().collect(),
    }
}

/// Normalized boundary `q`-mass per radian of azimuth (around the rotation axis).
pub fn azimuthal_density(u: &[f64], disc: &Discretization, q: f64, bins: usize) -> CliResult<Vec<f64>> {
    let masses = disc.point_masses(u, q)?;
    let mut hist = vec![0.0; bins];
    for (m, x) in masses.iter().zip(&disc.boundary.points) {
        let phi = x[1].atan2(x[0]).rem_euclid(TAU);
        let b = ((phi / TAU * bins as f64) as usize).min(bins - 1);
        hist[b] += m;
    }
    let width = TAU / bins as f64;
    Ok(hist.into_iter().map(|h| h / width).collect())
}

/// Density plot of the final-`lambda` branch of every family.
pub fn density_chart(records: &[BranchRecord], meshes: &BTreeMap<usize, SymmetricMesh>) -> CliResult<LineChart> {
    let mut series = Vec::new();
    for (i, ((k, seed), rs)) in families(records).into_iter().enumerate() {
        let Some(mesh) = meshes.get(&k) else { continue };
        let last = rs[rs.len() - 1];
        let disc = Discretization::new(mesh)?;
        let dens = azimuthal_density(&last.branch.field, &disc, last.branch.energy.q, DENSITY_BINS)?;
        let step = 360.0 / DENSITY_BINS as f64;
        series.push(Series {
            label: format!("k={k} seed={seed}"),
            color: color(i),
            points: dens.iter().enumerate().map(|(j, d)| ((j as f64 + 0.5) * step, *d)).collect(),
            markers: false,
        });
    }
    Ok(LineChart {
        title: "Boundary q-mass density at the final lambda".into(),
        x_label: "azimuth (degrees)".into(),
        y_label: "mass per radian".into(),
        x_scale: Scale::Linear,
        series,
        ref_lines: Vec::new(),
    })
}

pub fn peak_chart(records: &[BranchRecord]) -> BarChart {
    let groups = families(records)
        .into_iter()
        .map(|((k, seed), rs)| {
            let last = rs[rs.len() - 1];
            let masses = last.branch.classification.as_ref().map(|c| c.peak_masses.clone()).unwrap_or_default();
            (format!("k={k} s={seed}"), masses, Some(1.0 / k as f64))
        })
        .collect();
    BarChart { title: "Peak masses at the final lambda (dashed: 1/k)".into(), y_label: "q-mass".into(), groups }
}

/// Writes the CSV tables, `summary.json` and the three plots into `dir`.
pub fn write_all(dir: &Path, records: &[BranchRecord], meshes: &BTreeMap<usize, SymmetricMesh>) -> CliResult<Summary> {
    std::fs::create_dir_all(dir)?;
    write_branches_csv(&dir.join("branches.csv"), records)?;
    write_traces_csv(&dir.join("traces.csv"), records)?;
    let summary = summarize(records, meshes)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    std::fs::write(dir.join("energy_vs_lambda.svg"), energy_chart(records).render())?;
    std::fs::write(dir.join("mass_density.svg"), density_chart(records, meshes)?.render())?;
    std::fs::write(dir.join("peak_masses.svg"), peak_chart(records).render())?;
    Ok(summary)
}
