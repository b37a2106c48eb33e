use std::f64::consts::TAU;

use ctl_core::analysis::{classify_branch, default_mass_floor, default_r_peak, detect_peaks};
use ctl_core::functional::{Discretization, Params};
use ctl_core::mesh::build_mesh;
use ctl_core::optimizer::{bubble_init, bubble_profile, lambda_sweep, minimize, SolverConfig};
use ctl_core::symmetry::minimal_orbital_set;
use ctl_core::trace_constant::{threshold, Method};

#[test]
fn polygon_perimeter_converges_at_second_order() {
    let errs: Vec<f64> = (0..4).map(|r| (build_mesh(2, 3, r).unwrap().boundary_measure() - TAU).abs()).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "{errs:?}");
    }
    assert!(errs[2] < 0.05 * 4f64.powi(-2), "{errs:?}");
}

#[test]
fn bubble_init_puts_most_mass_near_the_orbit() {
    for (dim, p, k) in [(2, 1.5, 3), (3, 2.0, 3), (3, 2.0, 4)] {
        let mesh = build_mesh(dim, k, 2).unwrap();
        let set = minimal_orbital_set(mesh.group.spec, None).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let params = Params::new(dim, p, 10.0).unwrap().with_kappa(set.kappa);
        let u = bubble_init(&set, set.kappa / 3.0, &mesh).unwrap();
        let m = disc.neighborhood_mass(&u, &set, &params).unwrap();
        assert!(m >= 0.9, "dim {dim} k {k}: {m}");
    }
}

#[test]
fn one_bump_has_one_dominant_peak() {
    let mesh = build_mesh(3, 2, 2).unwrap();
    let set = minimal_orbital_set(mesh.group.spec, None).unwrap();
    let disc = Discretization::new(&mesh).unwrap();
    let q = Params::new(3, 2.0, 1.0).unwrap().q;
    let u = bubble_profile(&set.points[..1], set.kappa / 6.0, &mesh);
    let report = detect_peaks(&u, &disc, q, default_r_peak(&set), default_mass_floor(&set), None).unwrap();
    assert_eq!(report.peaks.len(), 1, "{report:?}");
    assert!(report.peaks[0].mass >= 0.9, "{report:?}");
}

/// The sign projection should never leave an exact zero at a converged minimizer.
#[test]
fn minimizer_is_positive_at_large_lambda_in_the_plane() {
    let mesh = build_mesh(2, 3, 1).unwrap();
    let set = minimal_orbital_set(mesh.group.spec, None).unwrap();
    let cfg = SolverConfig::new(Params::new(2, 1.5, 300.0).unwrap().with_kappa(set.kappa));
    let u0 = bubble_init(&set, cfg.width(), &mesh).unwrap();
    let b = minimize(&u0, &cfg, &mesh.group, &mesh, &set).unwrap();
    let min = b.field.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    assert!(min > 0.0, "min nodal value {min}");
}

#[test]
fn warm_start_halves_the_iterations() {
    let mesh = build_mesh(3, 2, 2).unwrap();
    let set = minimal_orbital_set(mesh.group.spec, None).unwrap();
    let mut cfg = SolverConfig::new(Params::new(3, 2.0, 300.0).unwrap().with_kappa(set.kappa));
    let u0 = bubble_init(&set, cfg.width(), &mesh).unwrap();
    let prev = minimize(&u0, &cfg, &mesh.group, &mesh, &set).unwrap();
    cfg.params.lambda = 1000.0;
    let cold = minimize(&u0, &cfg, &mesh.group, &mesh, &set).unwrap();
    let warm = minimize(&prev.field, &cfg, &mesh.group, &mesh, &set).unwrap();
    assert!(cold.converged && warm.converged, "{:?} {:?}", cold.failure, warm.failure);
    assert!((cold.energy.quotient - warm.energy.quotient).abs() < 1e-6 * cold.energy.quotient);
    assert!(2 * warm.iterations <= cold.iterations, "warm {} cold {}", warm.iterations, cold.iterations);
}

#[test]
fn seeds_land_in_the_same_class() {
    let mesh = build_mesh(2, 3, 1).unwrap();
    let set = minimal_orbital_set(mesh.group.spec, None).unwrap();
    let mut cfg = SolverConfig::new(Params::new(2, 1.5, 10.0).unwrap().with_kappa(set.kappa));
    cfg.lambda_schedule = vec![10.0, 30.0];
    let th = threshold(2, 1.5, set.m_a, 1.0, Method::Oracle);
    let keys: Vec<_> = [1u64, 2, 3]
        .iter()
        .map(|&seed| {
            let last = lambda_sweep(&cfg, &mesh.group, &set, &mesh, seed).unwrap().pop().unwrap();
            classify_branch(&last, &mesh, &th).unwrap().key
        })
        .collect();
    assert!(keys.iter().all(|k| *k == keys[0]), "{keys:?}");
    assert_eq!(keys[0].peak_count, 3);
}

/// Nodal `|u|` does not lower the discrete quotient in general. The gradient term drops, but
/// the interpolant of `|u|` lies above `|u_h|` inside sign-changing cells, so the mass term can
/// grow faster than the trace term. Descent is therefore checked at the projected point.
#[test]
fn nodal_absolute_value_can_raise_the_quotient() {
    let mesh = build_mesh(2, 3, 1).unwrap();
    let disc = Discretization::new(&mesh).unwrap();
    let params = Params::new(2, 1.5, 1000.0).unwrap();
    let u: Vec<f64> = mesh.vertices.iter().map(|x| (2.0 * x[0] - 1.5 * x[1]).sin() + 0.2).collect();
    let a: Vec<f64> = u.iter().map(|v| v.abs()).collect();
    let eu = disc.energy(&u, &params).unwrap();
    let ea = disc.energy(&a, &params).unwrap();
    assert!(ea.grad_term < eu.grad_term);
    assert!(ea.mass_term > eu.mass_term);
    assert!(ea.quotient > eu.quotient, "{} vs {}", ea.quotient, eu.quotient);
}

#[test]
fn hat_at_one_boundary_node_has_a_finite_positive_quotient() {
    let mesh = build_mesh(2, 3, 3).unwrap();
    let disc = Discretization::new(&mesh).unwrap();
    let node = mesh.is_boundary.iter().position(|b| *b).unwrap();
    let mut u = vec![0.0; mesh.num_vertices()];
    u[node] = 1.0;
    let e = disc.energy(&u, &Params::new(2, 1.5, 10.0).unwrap()).unwrap();
    assert!(e.quotient.is_finite() && e.quotient > 0.0, "{e:?}");
}
