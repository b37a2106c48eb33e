use std::sync::OnceLock;

use ctl_core::analysis::detect_peaks;
use ctl_core::functional::{Discretization, Params};
use ctl_core::mesh::{build_mesh, SymmetricMesh};
use ctl_core::symmetry::{invariance_residual, symmetrize};
use ctl_core::trace_constant::{threshold, Method};
use proptest::prelude::*;

fn plane() -> &'static SymmetricMesh {
    static M: OnceLock<SymmetricMesh> = OnceLock::new();
    M.get_or_init(|| build_mesh(2, 3, 1).unwrap())
}

fn ball() -> &'static SymmetricMesh {
    static M: OnceLock<SymmetricMesh> = OnceLock::new();
    M.get_or_init(|| build_mesh(3, 2, 0).unwrap())
}

/// Smooth-ish positive field from a few random Gaussian bumps plus a floor.
fn field(mesh: &SymmetricMesh, bumps: &[([f64; 3], f64)], floor: f64) -> Vec<f64> {
    mesh.vertices
        .iter()
        .map(|x| {
            floor
                + bumps
                    .iter()
                    .map(|(c, h)| {
                        let d2: f64 = (0..3).map(|i| (x[i] - c[i]).powi(2)).sum();
                        h * (-d2 / 0.1).exp()
                    })
                    .sum::<f64>()
        })
        .collect()
}

fn bumps() -> impl Strategy<Value = Vec<([f64; 3], f64)>> {
    prop::collection::vec(([-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64], 0.1..2.0f64).prop_map(|(c, h)| (c, h)), 1..4)
}

fn planar(bs: Vec<([f64; 3], f64)>) -> Vec<([f64; 3], f64)> {
    bs.into_iter().map(|([x, y, _], h)| ([x, y, 0.0], h)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quotient_is_homogeneous_of_degree_zero(bs in bumps(), c in -3.0..3.0f64, lambda in 0.1..1e3f64) {
        let c = 10f64.powf(c);
        for (mesh, p, bs) in [(plane(), 1.5, planar(bs.clone())), (ball(), 2.0, bs.clone()), (ball(), 1.7, bs)] {
            let disc = Discretization::new(mesh).unwrap();
            let params = Params::new(mesh.dim, p, lambda).unwrap();
            let u = field(mesh, &bs, 0.05);
            let cu: Vec<f64> = u.iter().map(|v| c * v).collect();
            let a = disc.energy(&u, &params).unwrap().quotient;
            let b = disc.energy(&cu, &params).unwrap().quotient;
            prop_assert!(rel(a, b) < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn symmetrize_is_idempotent_and_invariant(bs in bumps()) {
        for (mesh, bs) in [(plane(), planar(bs.clone())), (ball(), bs)] {
            let u = field(mesh, &bs, 0.0);
            let s = symmetrize(&u, mesh, &mesh.group).unwrap();
            let ss = symmetrize(&s, mesh, &mesh.group).unwrap();
            prop_assert_eq!(&s.0, &ss.0);
            prop_assert_eq!(invariance_residual(&s, mesh, &mesh.group).unwrap(), 0.0);
        }
    }

    #[test]
    fn wedge_integrals_times_order_match_the_full_mesh(bs in bumps(), lambda in 0.1..1e3f64) {
        for (mesh, p, bs) in [(plane(), 1.5, planar(bs.clone())), (ball(), 2.0, bs)] {
            let disc = Discretization::new(mesh).unwrap();
            let params = Params::new(mesh.dim, p, lambda).unwrap().with_epsilon(1e-3);
            let u = symmetrize(&field(mesh, &bs, 0.02), mesh, &mesh.group).unwrap();
            let full = disc.raw_integrals(&u, &params).unwrap();
            let wedge = disc.wedge_integrals(&u, &params).unwrap();
            let g = mesh.group.order() as f64;
            prop_assert!(rel(full.grad, g * wedge.grad) < 1e-10);
            prop_assert!(rel(full.mass, g * wedge.mass) < 1e-10);
            prop_assert!(rel(full.trace, g * wedge.trace) < 1e-10);
        }
    }

    #[test]
    fn peak_masses_are_unchanged_by_group_elements(bs in bumps()) {
        for (mesh, p, bs) in [(plane(), 1.5, planar(bs.clone())), (ball(), 2.0, bs)] {
            let disc = Discretization::new(mesh).unwrap();
            let q = Params::new(mesh.dim, p, 1.0).unwrap().q;
            let u = field(mesh, &bs, 0.0);
            let masses = |v: &[f64]| -> Vec<f64> {
                let mut m: Vec<f64> = detect_peaks(v, &disc, q, 0.4, 0.05, None).unwrap().peaks.iter().map(|p| p.mass).collect();
                m.sort_by(f64::total_cmp);
                m
            };
            let base = masses(&u);
            for perm in &mesh.node_maps {
                let moved: Vec<f64> = perm.iter().map(|&j| u[j as usize]).collect();
                let m = masses(&moved);
                prop_assert_eq!(m.len(), base.len());
                for (a, b) in m.iter().zip(&base) {
                    prop_assert!((a - b).abs() < 1e-9, "{m:?} vs {base:?}");
                }
            }
        }
    }

    #[test]
    fn threshold_is_strictly_subadditive(n in 3usize..6, t in 0.0..1.0f64, m1 in 1usize..40, m2 in 1usize..40, k in 0.1..10.0f64) {
        // p ranges over (1, (n+1)/2]
        let p = 1.0 + 1e-3 + t * ((n as f64 + 1.0) / 2.0 - 1.0 - 1e-3);
        let th = |m| threshold(n, p, m, k, Method::Oracle).threshold;
        prop_assert!(th(m1 + m2) < th(m1) + th(m2));
    }

    #[test]
    fn nodal_absolute_value_never_lowers_mass_or_trace(a in -3.0..3.0f64, b in -3.0..3.0f64, shift in -0.5..0.5f64) {
        let mesh = plane();
        let disc = Discretization::new(mesh).unwrap();
        let params = Params::new(2, 1.5, 10.0).unwrap();
        let u: Vec<f64> = mesh.vertices.iter().map(|x| (a * x[0] + b * x[1]).sin() + shift).collect();
        let abs: Vec<f64> = u.iter().map(|v| v.abs()).collect();
        let (Ok(eu), Ok(ea)) = (disc.energy(&u, &params), disc.energy(&abs, &params)) else { return Ok(()) };
        prop_assert!(ea.mass_term >= eu.mass_term * (1.0 - 1e-12));
        prop_assert!(ea.trace_term >= eu.trace_term * (1.0 - 1e-12));
    }
}
