//! Concentration diagnostics, the weak Euler-Lagrange residual, and branch classification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{critical_exponent, Discretization, Params};
use crate::geom::{self, Point};
use crate::mesh::SymmetricMesh;
use crate::optimizer::Branch;
use crate::symmetry::OrbitalSet;
use crate::trace_constant::ThresholdSpec;

/// Per-peak mass tolerance around `1 / m(A)`.
pub const PEAK_MASS_TOLERANCE: f64 = 0.05;

/// Number of highest-density quadrature points tried as cap centres.
const CANDIDATES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub location: Point,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub peaks: Vec<Peak>,
    pub total_mass: f64,
    /// `mass - 1/m(A)` per peak (empty without an expected orbit).
    pub deviations: Vec<f64>,
    pub matched_orbit: bool,
    pub r_peak: f64,
    pub mass_floor: f64,
}

/// Greedy cap covering of the normalized trace `q`-mass. Each round takes the quadrature point
/// whose geodesic cap of radius `r_peak` captures the most unclaimed mass, among centres whose
/// caps are disjoint from earlier ones, and stops when the best capture drops below
/// `mass_floor`. With an expected orbit the peaks are matched against its points.
pub fn detect_peaks(
    u: &[f64],
    disc: &Discretization,
    q: f64,
    r_peak: f64,
    mass_floor: f64,
    expected: Option<&OrbitalSet>,
) -> Result<PeakReport> {
    disc.mesh.check_field(u)?;
    let pts = &disc.boundary.points;
    let weights = &disc.boundary.weights;
    let nq = disc.boundary.points_per_facet();
    // per-point masses, normalized, from the field at the quadrature points
    let mut density = Vec::with_capacity(pts.len());
    let mut mass = Vec::with_capacity(pts.len());
    for f in 0..disc.mesh.num_facets() {
        let verts = disc.mesh.facet(f);
        for (j, bary) in disc.boundary.rule.points.iter().enumerate() {
            let v: f64 = verts.iter().zip(bary).map(|(&i, b)| b * u[i as usize]).sum();
            let d = v.abs().powf(q);
            density.push(d);
            mass.push(weights[f * nq + j] * d);
        }
    }
    let total = geom::pairwise_sum(&mass);
    if !(total > 0.0) {
        return Err(Error::ZeroTrace);
    }
    for m in &mut mass {
        *m /= total;
    }
    let unit: Vec<Point> = pts.iter().map(|&x| geom::normalize(x)).collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| density[b].total_cmp(&density[a]).then(a.cmp(&b)));
    order.truncate(CANDIDATES);
    let mut peaks: Vec<Peak> = Vec::new();
    let mut claimed = vec![false; pts.len()];
    // geodesic comparisons through dot products of unit vectors
    let (cos_r, cos_2r) = (r_peak.cos(), (2.0 * r_peak).min(std::f64::consts::PI).cos());
    loop {
        let mut best: Option<(usize, f64)> = None;
        for &c in &order {
            if peaks.iter().any(|p| geom::dot(p.location, unit[c]) >= cos_2r) {
                continue;
            }
            let captured: f64 = (0..pts.len())
                .filter(|&i| !claimed[i] && geom::dot(unit[c], unit[i]) >= cos_r)
                .map(|i| mass[i])
                .sum();
            if best.is_none_or(|(_, m)| captured > m) {
                best = Some((c, captured));
            }
        }
        match best {
            Some((c, m)) if m >= mass_floor => {
                for i in 0..pts.len() {
                    if geom::dot(unit[c], unit[i]) >= cos_r {
                        claimed[i] = true;
                    }
                }
                peaks.push(Peak { location: unit[c], mass: m });
            }
            _ => break,
        }
    }
    let total_mass = peaks.iter().map(|p| p.mass).sum();
    let (deviations, matched_orbit) = match expected {
        Some(set) => {
            let target = 1.0 / set.m_a as f64;
            let deviations = peaks.iter().map(|p| p.mass - target).collect();
            let mut used = vec![false; set.points.len()];
            let mut matched = peaks.len() == set.points.len();
            for p in &peaks {
                let hit = (0..set.points.len())
                    .filter(|&j| !used[j])
                    .find(|&j| geom::geodesic(p.location, set.points[j]) <= r_peak);
                match hit {
                    Some(j) => used[j] = true,
                    None => matched = false,
                }
            }
            (deviations, matched)
        }
        None => (Vec::new(), false),
    };
    Ok(PeakReport { peaks, total_mass, deviations, matched_orbit, r_peak, mass_floor })
}

/// Default cap radius `kappa / 2`.
pub fn default_r_peak(set: &OrbitalSet) -> f64 {
    0.5 * set.kappa
}

/// Default floor `1 / (2 m(A))`.
pub fn default_mass_floor(set: &OrbitalSet) -> f64 {
    0.5 / set.m_a as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Over all nodal test functions.
    pub full_max: f64,
    pub full_rms: f64,
    /// Over orbit-averaged test functions (the invariant test space).
    pub invariant_max: f64,
    pub invariant_rms: f64,
}

/// Nodal weak residual `int |grad u|^{p-2} grad u . grad phi + lambda int |u|^{p-2} u phi
/// - mu int_S |u|^{q-2} u phi`.
pub fn residual_check(u: &[f64], lambda: f64, mu: f64, p: f64, q: f64, mesh: &SymmetricMesh) -> Result<ResidualReport> {
    let params = Params::new(mesh.dim, p, lambda)?;
    if (critical_exponent(mesh.dim, p) - q).abs() > 1e-12 * q {
        return Err(Error::InvalidParams(format!("q = {q} is not the critical exponent for p = {p}")));
    }
    let disc = Discretization::new(mesh)?;
    let w = disc.weak_form(u, &params)?;
    let r: Vec<f64> = (0..u.len()).map(|i| w.stiffness[i] + lambda * w.mass[i] - mu * w.trace[i]).collect();
    let rms = |xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / xs.len().max(1) as f64).sqrt();
    let max = |xs: &[f64]| xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let inv: Vec<f64> =
        mesh.node_orbits().map(|o| o.iter().map(|&i| r[i as usize]).sum::<f64>() / o.len() as f64).collect();
    Ok(ResidualReport { full_max: max(&r), full_rms: rms(&r), invariant_max: max(&inv), invariant_rms: rms(&inv) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EquivalenceKey {
    pub k: usize,
    pub l: usize,
    pub peak_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub peak_count: usize,
    pub peak_masses: Vec<f64>,
    pub captured_mass: f64,
    pub matched: bool,
    pub energy: f64,
    pub threshold: f64,
    /// `energy / threshold`.
    pub threshold_ratio: f64,
    pub key: EquivalenceKey,
    pub escaped: bool,
    pub concentrated: bool,
}

/// Peak count, orbit match and energy ratio of a branch. It is concentrated when it has not
/// escaped, its caps capture at least `1 - beta`, the peaks sit on the orbit, and every peak
/// carries `1/m(A) +- 0.05`.
pub fn classify_branch(branch: &Branch, mesh: &SymmetricMesh, threshold: &ThresholdSpec) -> Result<Classification> {
    let disc = Discretization::new(mesh)?;
    let set = &branch.orbital_set;
    let report = detect_peaks(
        &branch.field,
        &disc,
        branch.energy.q,
        default_r_peak(set),
        default_mass_floor(set),
        Some(set),
    )?;
    let beta = branch.beta;
    let target = 1.0 / set.m_a as f64;
    let masses: Vec<f64> = report.peaks.iter().map(|p| p.mass).collect();
    let escaped = branch.escaped();
    let concentrated = !escaped
        && report.matched_orbit
        && report.total_mass >= 1.0 - beta
        && masses.iter().all(|m| (m - target).abs() <= PEAK_MASS_TOLERANCE);
    Ok(Classification {
        peak_count: report.peaks.len(),
        peak_masses: masses,
        captured_mass: report.total_mass,
        matched: report.matched_orbit,
        energy: branch.energy.quotient,
        threshold: threshold.threshold,
        threshold_ratio: branch.energy.quotient / threshold.threshold,
        key: EquivalenceKey { k: branch.group_spec.k, l: branch.group_spec.l, peak_count: report.peaks.len() },
        escaped,
        concentrated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub key: EquivalenceKey,
    pub branches: usize,
    pub concentrated: usize,
    pub lowest_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonequivalenceReport {
    pub lambda: f64,
    pub classes: Vec<ClassRow>,
    /// Distinct peak counts among concentrated branches at `lambda`.
    pub nonequivalent_count: usize,
}

/// Groups classified branches at the largest `lambda` reached by every `(k, l)` family. Rotations
/// preserve peak counts, so concentrated branches with different counts are non-equivalent.
pub fn nonequivalence_report(branches: &[Branch]) -> NonequivalenceReport {
    let mut last_per_family: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for b in branches {
        let e = last_per_family.entry((b.group_spec.k, b.group_spec.l)).or_insert(b.lambda);
        *e = e.max(b.lambda);
    }
    let lambda = last_per_family.values().copied().fold(f64::INFINITY, f64::min);
    let mut classes: BTreeMap<EquivalenceKey, ClassRow> = BTreeMap::new();
    for b in branches.iter().filter(|b| b.lambda == lambda) {
        let Some(c) = &b.classification else { continue };
        let row = classes.entry(c.key).or_insert(ClassRow {
            key: c.key,
            branches: 0,
            concentrated: 0,
            lowest_energy: f64::INFINITY,
        });
        row.branches += 1;
        row.concentrated += usize::from(c.concentrated);
        row.lowest_energy = row.lowest_energy.min(c.energy);
    }
    let mut counts: Vec<usize> =
        classes.values().filter(|r| r.concentrated > 0).map(|r| r.key.peak_count).collect();
    counts.sort_unstable();
    counts.dedup();
    NonequivalenceReport {
        lambda: if lambda.is_finite() { lambda } else { 0.0 },
        classes: classes.into_values().collect(),
        nonequivalent_count: counts.len(),
    }
}

/// Mean per-peak mass of each branch of one sweep, in schedule order.
pub fn sharpening_series(branches: &[Branch], mesh: &SymmetricMesh) -> Result<Vec<f64>> {
    let disc = Discretization::new(mesh)?;
    branches
        .iter()
        .map(|b| {
            let set = &b.orbital_set;
            let r = default_r_peak(set);
            let caps = cap_masses(&b.field, &disc, b.energy.q, set, r)?;
            Ok(caps.iter().sum::<f64>() / caps.len() as f64)
        })
        .collect()
}

/// Normalized `q`-mass in the geodesic cap of radius `r` around each orbit point.
pub fn cap_masses(u: &[f64], disc: &Discretization, q: f64, set: &OrbitalSet, r: f64) -> Result<Vec<f64>> {
    disc.mesh.check_field(u)?;
    let masses = disc.point_masses(u, q)?;
    Ok(set
        .points
        .iter()
        .map(|&a| {
            masses
                .iter()
                .zip(&disc.boundary.points)
                .filter(|(_, &x)| geom::geodesic(x, a) <= r)
                .map(|(m, _)| m)
                .sum()
        })
        .collect())
}

/// Whether the series never decreases.
pub fn is_monotone_nondecreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::optimizer::bubble_init;
    use crate::symmetry::minimal_orbital_set;

    #[test]
    fn triple_bump_has_three_equal_peaks_on_the_orbit() {
        let mesh = build_mesh(2, 3, 2).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let set = minimal_orbital_set(mesh.group.spec, None).unwrap();
        let u = bubble_init(&set, set.kappa / 12.0, &mesh).unwrap();
        let rep = detect_peaks(&u, &disc, 3.0, default_r_peak(&set), default_mass_floor(&set), Some(&set)).unwrap();
        assert_eq!(rep.peaks.len(), 3);
        assert!(rep.matched_orbit);
        for p in &rep.peaks {
            assert!((p.mass - 1.0 / 3.0).abs() < 0.01, "{}", p.mass);
        }
        assert!(rep.total_mass <= 1.0 + 1e-12);
    }

    #[test]
    fn constant_field_has_no_peaks() {
        let mesh = build_mesh(2, 3, 1).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let set = minimal_orbital_set(mesh.group.spec, None).unwrap();
        let u = vec![1.0; mesh.num_vertices()];
        let rep = detect_peaks(&u, &disc, 3.0, 0.2, default_mass_floor(&set), Some(&set)).unwrap();
        assert!(rep.peaks.is_empty());
        assert!(!rep.matched_orbit);
    }

    #[test]
    fn residual_of_constant_vanishes_against_the_constant_test_function() {
        // u = 1 with mu = lambda |B| / |S|: testing with sum_i phi_i = 1 gives
        // lambda |B| - mu |S| = 0
        let mesh = build_mesh(2, 4, 0).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let lambda = 3.0;
        let mu = lambda * mesh.volume() / mesh.boundary_measure();
        let u = vec![1.0; mesh.num_vertices()];
        let params = Params::new(2, 1.5, lambda).unwrap();
        let w = disc.weak_form(&u, &params).unwrap();
        let total: f64 = (0..u.len()).map(|i| lambda * w.mass[i] - mu * w.trace[i]).sum();
        assert!(total.abs() < 1e-12);
        let rep = residual_check(&u, lambda, mu, 1.5, 3.0, &mesh).unwrap();
        assert!(rep.full_max > 0.0);
    }

    #[test]
    fn monotone_series() {
        assert!(is_monotone_nondecreasing(&[0.1, 0.2, 0.2, 0.3]));
        assert!(!is_monotone_nondecreasing(&[0.1, 0.3, 0.2]));
    }
}
