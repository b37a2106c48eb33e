use ctl_web::{initial_disk, solve_disk, threshold_table, MAX_REFINEMENT};

#[test]
fn initial_disk_is_consistent() {
    let d = initial_disk(3, 1).unwrap();
    assert_eq!(d.vertices.len(), 2 * d.field.len());
    assert_eq!(d.triangles.len() % 3, 0);
    assert!(d.triangles.iter().all(|&i| (i as usize) < d.field.len()));
    assert_eq!(d.orbit.len(), 3);
    assert!(d.field.iter().all(|v| *v > 0.0));
}

#[test]
fn oversized_requests_are_refused() {
    assert!(initial_disk(3, MAX_REFINEMENT + 1).is_err());
    assert!(initial_disk(1, 1).is_err());
    assert!(solve_disk(3, 1, 1.5, -1.0, 0).is_err());
}

#[test]
fn solve_finds_one_peak_per_orbit_point() {
    let s = solve_disk(3, 1, 1.5, 30.0, 7).unwrap();
    assert!(s.converged, "{:?}", s.failure);
    assert_eq!(s.peaks.len(), 3);
    for pk in &s.peaks {
        assert!((pk.mass - 1.0 / 3.0).abs() < 0.05, "{:?}", s.peaks);
    }
    assert!(s.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    let json = serde_json::to_value(&s).unwrap();
    assert!(json["disk"]["vertices"].is_array());
}

#[test]
fn threshold_table_at_p2_uses_the_closed_form() {
    let t = threshold_table(3, 2.0, 4).unwrap();
    assert_eq!(t.q, 4.0);
    assert!((t.k_estimate - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    assert!((t.rows[3].threshold - 2.0 * t.k_estimate).abs() < 1e-12);
}
