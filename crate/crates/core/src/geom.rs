//! Small fixed-size vector helpers. Planar points carry a zero third coordinate.

pub type Point = [f64; 3];

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

pub fn normalize(a: Point) -> Point {
    let n = norm(a);
    if n == 0.0 {
        a
    } else {
        scale(a, 1.0 / n)
    }
}

/// Great-circle distance between the radial projections of `a` and `b` onto the unit sphere.
pub fn geodesic(a: Point, b: Point) -> f64 {
    let c = dot(normalize(a), normalize(b)).clamp(-1.0, 1.0);
    c.acos()
}

pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

/// Signed measure of a simplex given its vertices (triangle in the plane or tetrahedron).
pub fn signed_volume(dim: usize, v: &[Point]) -> f64 {
    match dim {
        2 => {
            let e1 = sub(v[1], v[0]);
            let e2 = sub(v[2], v[0]);
            0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        }
        3 => {
            let e1 = sub(v[1], v[0]);
            let e2 = sub(v[2], v[0]);
            let e3 = sub(v[3], v[0]);
            dot(e1, cross(e2, e3)) / 6.0
        }
        _ => unreachable!("simplices exist only in 2 and 3 dimensions here"),
    }
}

/// Measure of a boundary facet: segment length (dim 2) or triangle area (dim 3).
pub fn facet_measure(dim: usize, v: &[Point]) -> f64 {
    match dim {
        2 => dist(v[0], v[1]),
        3 => 0.5 * norm(cross(sub(v[1], v[0]), sub(v[2], v[0]))),
        _ => unreachable!("facets exist only in 2 and 3 dimensions here"),
    }
}

/// Sum in a fixed pairwise order; result depends only on the slice contents.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Euclidean volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    unit_sphere_area(n) / n as f64
}

/// Area of the unit sphere `S^{n-1}` in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n)
}

/// `Gamma(n / 2)` for a positive integer `n`.
pub fn gamma_half(n: usize) -> f64 {
    assert!(n > 0);
    if n.is_multiple_of(2) {
        (1..n / 2).map(|i| i as f64).product()
    } else {
        // Gamma(1/2) = sqrt(pi), Gamma(x + 1) = x Gamma(x)
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < n as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}
