//! The groups `G_{k,1} = H_{k,1} x O(m)` acting on the disk (`m = 0`) and the ball (`m = 1`),
//! their orbits on the sphere, and exact group averaging of nodal fields.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::geom::{self, Point};
use crate::mesh::SymmetricMesh;

/// Default tolerance when deduplicating orbit points.
pub const ORBIT_TOL: f64 = 1e-9;

/// Number of quasi-random samples used to certify local minimality.
pub const CERTIFICATE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSpec {
    /// Rotation order of each planar block.
    pub k: usize,
    /// Number of planar blocks.
    pub l: usize,
    /// Dimension of the residual factor acted on by `O(m)`.
    pub m: usize,
}

impl GroupSpec {
    pub fn new(k: usize, l: usize, m: usize) -> Result<Self> {
        let spec = Self { k, l, m };
        spec.validate()?;
        Ok(spec)
    }

    /// The supported group for a ball of the given dimension: rotations by `2 pi / k`,
    /// plus the reflection `z -> -z` in three dimensions.
    pub fn for_dim(dim: usize, k: usize) -> Result<Self> {
        match dim {
            2 => Self::new(k, 1, 0),
            3 => Self::new(k, 1, 1),
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidRotationOrder(self.k));
        }
        if self.l != 1 || self.m > 1 {
            return Err(Error::UnsupportedGroup { k: self.k, l: self.l, m: self.m });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.l + self.m
    }

    pub fn has_reflection(&self) -> bool {
        self.m == 1
    }

    /// `k^l * l! * 2^{min(m,1)}`.
    pub fn order(&self) -> usize {
        let factorial: usize = (1..=self.l).product();
        self.k.pow(self.l as u32) * factorial * if self.m > 0 { 2 } else { 1 }
    }

    /// Size of a minimal orbit of the planar factor: `k * l`.
    pub fn minimal_orbit_size(&self) -> usize {
        self.k * self.l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub matrix: [[f64; 3]; 3],
    /// Rotation index `r`: rotation by `2 pi r / k`.
    pub rotation: usize,
    /// Whether `z -> -z` is applied.
    pub reflection: bool,
}

impl GroupElement {
    fn new(k: usize, rotation: usize, reflection: bool) -> Self {
        let theta = 2.0 * PI * rotation as f64 / k as f64;
        let (s, c) = theta.sin_cos();
        let zz = if reflection { -1.0 } else { 1.0 };
        Self { matrix: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, zz]], rotation, reflection }
    }

    pub fn apply(&self, x: Point) -> Point {
        let m = &self.matrix;
        [
            m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
            m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
            m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
        ]
    }

    fn mul(&self, other: &Self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|l| self.matrix[i][l] * other.matrix[l][j]).sum();
            }
        }
        out
    }

    /// Largest entry of `M^T M - I`.
    pub fn orthogonality_defect(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let g: f64 = (0..3).map(|l| m[l][i] * m[l][j]).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - id).abs());
            }
        }
        worst
    }
}

fn matrix_distance(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((a[i][j] - b[i][j]).abs());
        }
    }
    worst
}

/// Enumerates the full finite group. Element `r + k * s` is the rotation by `2 pi r / k`
/// composed with `s` reflections; closure and the identity are verified.
pub fn enumerate_group(spec: GroupSpec) -> Result<Vec<GroupElement>> {
    spec.validate()?;
    let reflections: &[bool] = if spec.has_reflection() { &[false, true] } else { &[false] };
    let elements: Vec<GroupElement> = reflections
        .iter()
        .flat_map(|&s| (0..spec.k).map(move |r| GroupElement::new(spec.k, r, s)))
        .collect();
    debug_assert_eq!(elements.len(), spec.order());
    let id = GroupElement::new(spec.k, 0, false);
    assert!(matrix_distance(&elements[0].matrix, &id.matrix) == 0.0, "identity must come first");
    for a in &elements {
        for b in &elements {
            let ab = a.mul(b);
            let closed = elements.iter().any(|c| matrix_distance(&c.matrix, &ab) < 1e-12);
            assert!(closed, "group is not closed under composition");
        }
    }
    Ok(elements)
}

/// An enumerated group together with its composition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryGroup {
    pub spec: GroupSpec,
    pub elements: Vec<GroupElement>,
}

impl SymmetryGroup {
    pub fn new(spec: GroupSpec) -> Result<Self> {
        Ok(Self { spec, elements: enumerate_group(spec)? })
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Index of `elements[a] * elements[b]`.
    pub fn compose(&self, a: usize, b: usize) -> usize {
        let k = self.spec.k;
        let (ra, sa) = (a % k, a / k);
        let (rb, sb) = (b % k, b / k);
        // rotations about z commute with z -> -z
        (ra + rb) % k + k * (sa ^ sb)
    }

    pub fn orbit(&self, x: Point, tol: f64) -> Vec<Point> {
        orbit(x, &self.elements, tol)
    }
}

/// Deduplicated image set `{g x}`.
pub fn orbit(x: Point, group: &[GroupElement], tol: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(group.len());
    for g in group {
        let y = g.apply(x);
        if !out.iter().any(|&z| geom::dist(y, z) <= tol) {
            out.push(y);
        }
    }
    out
}

/// A single group orbit on the sphere where concentration is sought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitalSet {
    pub points: Vec<Point>,
    pub m_a: usize,
    /// Geodesic neighbourhood radius.
    pub kappa: f64,
    pub locally_minimal: bool,
    #[serde(default)]
    pub samples_checked: usize,
}

impl OrbitalSet {
    /// A one-point set, useful for single-bubble fixtures.
    pub fn single(point: Point, kappa: f64) -> Self {
        Self { points: vec![geom::normalize(point)], m_a: 1, kappa, locally_minimal: false, samples_checked: 0 }
    }

    /// Smallest pairwise geodesic distance between the points (`pi` for a single point).
    pub fn min_geodesic_separation(&self) -> f64 {
        let mut best = PI;
        for (i, &a) in self.points.iter().enumerate() {
            for &b in &self.points[i + 1..] {
                best = best.min(geom::geodesic(a, b));
            }
        }
        best
    }

    /// Geodesic distance from `x` (radially projected) to the nearest point of the set.
    pub fn geodesic_distance(&self, x: Point) -> f64 {
        self.points.iter().map(|&a| geom::geodesic(x, a)).fold(f64::INFINITY, f64::min)
    }
}

/// Radical inverse of `i` in the given base (Halton coordinate).
fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// The equatorial orbit `{(cos 2 pi j/k, sin 2 pi j/k, 0)}` with `m(A) = k`, certified locally
/// minimal by sampling. `kappa` defaults to half the minimal geodesic distance between its points.
///
/// The certificate is checked against the invariant carrier containing the orbit: the whole
/// circle for `m = 0`, and the equator `z = 0` for `m = 1`. Points on the carrier share the orbit
/// size `m(A)`; every sampled point of the neighbourhood off the carrier must have a larger orbit.
pub fn minimal_orbital_set(spec: GroupSpec, kappa: Option<f64>) -> Result<OrbitalSet> {
    let group = SymmetryGroup::new(spec)?;
    let k = spec.k;
    let points: Vec<Point> = (0..k)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / k as f64;
            [t.cos(), t.sin(), 0.0]
        })
        .collect();
    let m_a = group.orbit(points[0], ORBIT_TOL).len();
    let mut set = OrbitalSet { points, m_a, kappa: 0.0, locally_minimal: false, samples_checked: 0 };
    set.kappa = kappa.unwrap_or(0.5 * set.min_geodesic_separation());
    if set.kappa <= 0.0 || !set.kappa.is_finite() {
        return Err(Error::InvalidParams(format!("kappa must be positive, got {}", set.kappa)));
    }

    let mut ok = m_a == spec.minimal_orbit_size();
    for s in 0..CERTIFICATE_SAMPLES {
        let a = set.points[s % m_a];
        let d = set.kappa * radical_inverse(s + 1, 2);
        let psi = 2.0 * PI * radical_inverse(s + 1, 3);
        let y = if spec.dim() == 2 {
            let t = a[1].atan2(a[0]) + if psi < PI { d } else { -d };
            [t.cos(), t.sin(), 0.0]
        } else {
            let e1 = [0.0, 0.0, 1.0];
            let e2 = geom::cross(e1, a);
            let dir = geom::add(geom::scale(e1, psi.cos()), geom::scale(e2, psi.sin()));
            geom::add(geom::scale(a, d.cos()), geom::scale(dir, d.sin()))
        };
        let size = group.orbit(y, ORBIT_TOL).len();
        let on_carrier = spec.dim() == 2 || y[2].abs() <= ORBIT_TOL;
        // Lagrange: orbit sizes divide the group order
        ok &= group.order() % size == 0;
        ok &= if on_carrier { size == m_a } else { size > m_a };
    }
    assert!(ok, "locally minimal certificate failed for {spec:?}");
    set.locally_minimal = ok;
    set.samples_checked = CERTIFICATE_SAMPLES;
    Ok(set)
}

fn check_group(mesh: &SymmetricMesh, group: &SymmetryGroup) -> Result<()> {
    if mesh.group.spec != group.spec {
        return Err(Error::GroupMismatch(format!(
            "mesh built for {:?}, field projected with {:?}",
            mesh.group.spec, group.spec
        )));
    }
    Ok(())
}

/// Projects `u` onto the `G`-invariant fields: each node receives the mean over its node orbit,
/// which equals the average of `u o perm_g` over the group. Members of one orbit receive the
/// same bits.
pub fn symmetrize(u: &[f64], mesh: &SymmetricMesh, group: &SymmetryGroup) -> Result<NodalField> {
    check_group(mesh, group)?;
    mesh.check_field(u)?;
    Ok(NodalField(mesh.orbit_average(u)))
}

/// `max_g |u o perm_g - u|_inf / |u|_inf`, zero for the zero field.
pub fn invariance_residual(u: &[f64], mesh: &SymmetricMesh, group: &SymmetryGroup) -> Result<f64> {
    check_group(mesh, group)?;
    mesh.check_field(u)?;
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut worst: f64 = 0.0;
    for perm in &mesh.node_maps {
        for (i, &pi) in perm.iter().enumerate() {
            worst = worst.max((u[pi as usize] - u[i]).abs());
        }
    }
    Ok(worst / scale)
}
