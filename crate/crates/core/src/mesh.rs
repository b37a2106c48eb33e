//! Simplicial meshes of the unit disk and ball on which the rotation (and reflection) group acts
//! by exact node permutations.
//!
//! One fundamental wedge `{0 <= phi <= 2 pi / k}` (intersected with `z >= 0` in 3-D) is meshed,
//! then copied by every group element. Cells are stored replica by replica, so block `r` of the
//! cell array is the image of block 0 under element `r`, and refinement only ever subdivides
//! block 0 before copying again.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::symmetry::{GroupSpec, SymmetryGroup};

/// Default cap on the number of mesh vertices.
pub const DEFAULT_NODE_BUDGET: usize = 200_000;

/// Edge subdivisions of each coarse simplex in a refinement-0 mesh.
pub const BASE_SUBDIVISIONS: usize = 8;

/// Tolerance used when matching replicated vertex coordinates.
const MATCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SymmetricMesh {
    pub dim: usize,
    pub vertices: Vec<Point>,
    /// Flat cell connectivity, `dim + 1` indices per cell.
    pub cells: Vec<u32>,
    /// Flat boundary facets, `dim` indices per facet, outward oriented.
    pub boundary_facets: Vec<u32>,
    /// Owning cell of each boundary facet.
    pub facet_cell: Vec<u32>,
    pub group: SymmetryGroup,
    /// `node_maps[g][i]` is the vertex at `g * vertices[i]`.
    pub node_maps: Vec<Vec<u32>>,
    /// Fundamental-domain replica each vertex is assigned to.
    pub wedge_id: Vec<u32>,
    pub is_boundary: Vec<bool>,
    pub refinement: usize,
    pub node_budget: usize,
    orbit_members: Vec<u32>,
    orbit_offsets: Vec<usize>,
}

impl SymmetricMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn num_facets(&self) -> usize {
        self.boundary_facets.len() / self.dim
    }

    pub fn cell(&self, c: usize) -> &[u32] {
        let s = self.dim + 1;
        &self.cells[c * s..(c + 1) * s]
    }

    pub fn facet(&self, f: usize) -> &[u32] {
        let s = self.dim;
        &self.boundary_facets[f * s..(f + 1) * s]
    }

    /// Cells per wedge replica; cell `c` belongs to replica `c / cells_per_wedge()`.
    pub fn cells_per_wedge(&self) -> usize {
        self.num_cells() / self.group.order()
    }

    pub fn cell_wedge(&self, c: usize) -> usize {
        c / self.cells_per_wedge()
    }

    pub fn cell_points(&self, c: usize) -> Vec<Point> {
        self.cell(c).iter().map(|&i| self.vertices[i as usize]).collect()
    }

    pub fn facet_points(&self, f: usize) -> Vec<Point> {
        self.facet(f).iter().map(|&i| self.vertices[i as usize]).collect()
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        geom::signed_volume(self.dim, &self.cell_points(c))
    }

    pub fn facet_measure(&self, f: usize) -> f64 {
        geom::facet_measure(self.dim, &self.facet_points(f))
    }

    /// Total measure of the polyhedral boundary.
    pub fn boundary_measure(&self) -> f64 {
        let m: Vec<f64> = (0..self.num_facets()).map(|f| self.facet_measure(f)).collect();
        geom::pairwise_sum(&m)
    }

    /// Total volume of the polyhedral domain.
    pub fn volume(&self) -> f64 {
        let v: Vec<f64> = (0..self.num_cells()).map(|c| self.cell_volume(c)).collect();
        geom::pairwise_sum(&v)
    }

    /// Largest edge length over all cells.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for c in 0..self.num_cells() {
            let p = self.cell_points(c);
            for a in 0..p.len() {
                for b in a + 1..p.len() {
                    h = h.max(geom::dist(p[a], p[b]));
                }
            }
        }
        h
    }

    pub fn check_field(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.num_vertices() {
            return Err(Error::FieldLength { expected: self.num_vertices(), found: u.len() });
        }
        Ok(())
    }

    /// Node orbits under the group, each sorted ascending.
    pub fn node_orbits(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.orbit_offsets.windows(2).map(move |w| &self.orbit_members[w[0]..w[1]])
    }

    /// Replaces each value by the mean over its node orbit.
    pub fn orbit_average(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for orbit in self.node_orbits() {
            let mean = orbit.iter().map(|&i| u[i as usize]).sum::<f64>() / orbit.len() as f64;
            for &i in orbit {
                out[i as usize] = mean;
            }
        }
        out
    }

    /// Checks every structural invariant and returns the measured residuals.
    pub fn check_invariants(&self) -> Result<InvariantReport> {
        let mut report = InvariantReport::default();
        for (i, x) in self.vertices.iter().enumerate() {
            if self.is_boundary[i] {
                report.max_boundary_radius_error =
                    report.max_boundary_radius_error.max((geom::norm(*x) - 1.0).abs());
            }
        }
        report.min_cell_volume = f64::INFINITY;
        for c in 0..self.num_cells() {
            let v = self.cell_volume(c);
            if v <= 0.0 {
                return Err(Error::InvertedCell(c));
            }
            report.min_cell_volume = report.min_cell_volume.min(v);
        }
        for (g, perm) in self.group.elements.iter().zip(&self.node_maps) {
            for (i, &j) in perm.iter().enumerate() {
                let d = geom::dist(self.vertices[j as usize], g.apply(self.vertices[i]));
                report.max_group_residual = report.max_group_residual.max(d);
            }
        }
        for f in 0..self.num_facets() {
            if self.facet_measure(f) <= 0.0 {
                return Err(Error::DegenerateFacet(f));
            }
        }
        report.boundary_measure = self.boundary_measure();
        report.volume = self.volume();
        Ok(report)
    }

    pub fn to_document(&self) -> MeshDocument {
        MeshDocument {
            dim: self.dim,
            vertices: self.vertices.iter().map(|x| x[..self.dim].to_vec()).collect(),
            cells: (0..self.num_cells()).map(|c| self.cell(c).to_vec()).collect(),
            boundary_facets: (0..self.num_facets()).map(|f| self.facet(f).to_vec()).collect(),
            group: GroupDocument { k: self.group.spec.k, reflection: self.group.spec.has_reflection() },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    /// Rebuilds a mesh from its document. Node maps are recovered by coordinate matching and the
    /// cells must be an exact union of group images of the fundamental-wedge cells.
    pub fn from_document(doc: MeshDocument) -> Result<Self> {
        let dim = doc.dim;
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if doc.group.reflection != (dim == 3) {
            return Err(Error::MalformedMesh("reflection flag must match the dimension".into()));
        }
        let group = SymmetryGroup::new(GroupSpec::for_dim(dim, doc.group.k)?)?;
        let mut vertices = Vec::with_capacity(doc.vertices.len());
        for v in &doc.vertices {
            if v.len() != dim {
                return Err(Error::MalformedMesh(format!("vertex with {} coordinates", v.len())));
            }
            vertices.push([v[0], v[1], if dim == 3 { v[2] } else { 0.0 }]);
        }
        let nv = vertices.len() as u32;
        for c in &doc.cells {
            if c.len() != dim + 1 || c.iter().any(|&i| i >= nv) {
                return Err(Error::MalformedMesh("bad cell".into()));
            }
        }

        let locator = PointLocator::new(&vertices);
        let mut node_maps = Vec::with_capacity(group.order());
        for g in &group.elements {
            let mut perm = Vec::with_capacity(vertices.len());
            for x in &vertices {
                let j = locator.find(&vertices, g.apply(*x)).ok_or_else(|| {
                    Error::GroupMismatch("vertex set is not invariant under the group".into())
                })?;
                perm.push(j);
            }
            node_maps.push(perm);
        }

        let alpha = 2.0 * PI / group.spec.k as f64;
        let in_wedge = |p: Point| {
            let mut phi = p[1].atan2(p[0]);
            if phi < 0.0 {
                phi += 2.0 * PI;
            }
            // angles within rounding of 2 pi belong to the start of the wedge
            if phi > 2.0 * PI - 1e-12 {
                phi = 0.0;
            }
            phi < alpha && (dim == 2 || p[2] > 0.0)
        };
        let mut base = Vec::new();
        for c in &doc.cells {
            let pts: Vec<Point> = c.iter().map(|&i| vertices[i as usize]).collect();
            let centroid = geom::scale(pts.iter().fold([0.0; 3], |a, &b| geom::add(a, b)), 1.0 / pts.len() as f64);
            if in_wedge(centroid) {
                base.extend_from_slice(c);
            }
        }
        let cells = replicate_cells(dim, &group, &node_maps, &base, &vertices);
        let mut imported: Vec<Vec<u32>> = doc.cells.iter().map(|c| sorted(c)).collect();
        let mut rebuilt: Vec<Vec<u32>> = cells.chunks(dim + 1).map(sorted).collect();
        imported.sort();
        rebuilt.sort();
        if imported != rebuilt {
            return Err(Error::GroupMismatch("cells are not group images of one wedge".into()));
        }
        let mut mesh = assemble(dim, vertices, cells, group, node_maps, 0, DEFAULT_NODE_BUDGET);
        if mesh.num_facets() != doc.boundary_facets.len() {
            return Err(Error::MalformedMesh("boundary facets do not match the cells".into()));
        }
        mesh.refinement = 0;
        Ok(mesh)
    }
}

fn sorted(c: &[u32]) -> Vec<u32> {
    let mut v = c.to_vec();
    v.sort_unstable();
    v
}

/// Measured residuals of the mesh invariants.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InvariantReport {
    pub max_boundary_radius_error: f64,
    pub min_cell_volume: f64,
    pub max_group_residual: f64,
    pub boundary_measure: f64,
    pub volume: f64,
}

/// JSON exchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<u32>>,
    pub boundary_facets: Vec<Vec<u32>>,
    pub group: GroupDocument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDocument {
    pub k: usize,
    pub reflection: bool,
}

/// Hash-grid lookup of coordinates.
struct PointLocator {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl PointLocator {
    fn new(points: &[Point]) -> Self {
        let mut loc = Self { cell: 1e-6, buckets: HashMap::new() };
        for (i, p) in points.iter().enumerate() {
            loc.insert(*p, i as u32);
        }
        loc
    }

    fn key(&self, p: Point) -> [i64; 3] {
        [
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
            (p[2] / self.cell).floor() as i64,
        ]
    }

    fn insert(&mut self, p: Point, i: u32) {
        let key = self.key(p);
        self.buckets.entry(key).or_default().push(i);
    }

    fn find(&self, points: &[Point], p: Point) -> Option<u32> {
        let k = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &i in b {
                            if geom::dist(points[i as usize], p) <= MATCH_TOL {
                                return Some(i);
                            }
                        }
                    }
                }
            }
        }
        None
    }
}

/// Builds the mesh of the unit disk (`dim = 2`, group `C_k`) or unit ball (`dim = 3`, group
/// `C_k x {z -> +-z}`), refined `refinement` times.
pub fn build_mesh(dim: usize, k: usize, refinement: usize) -> Result<SymmetricMesh> {
    build_mesh_with_budget(dim, k, refinement, DEFAULT_NODE_BUDGET)
}

pub fn build_mesh_with_budget(dim: usize, k: usize, refinement: usize, node_budget: usize) -> Result<SymmetricMesh> {
    if dim != 2 && dim != 3 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let spec = GroupSpec::for_dim(dim, k)?;
    let group = SymmetryGroup::new(spec)?;
    let (wedge_vertices, wedge_cells) = fundamental_wedge(dim, k, BASE_SUBDIVISIONS);

    // replicate vertices; vertex i of the global list first appeared as (replica, local)
    let mut vertices: Vec<Point> = Vec::new();
    let mut locator = PointLocator { cell: 1e-6, buckets: HashMap::new() };
    let mut origin: Vec<(usize, usize)> = Vec::new();
    let mut global = vec![vec![0u32; wedge_vertices.len()]; group.order()];
    for (r, g) in group.elements.iter().enumerate() {
        for (v, x) in wedge_vertices.iter().enumerate() {
            let y = g.apply(*x);
            let idx = match locator.find(&vertices, y) {
                Some(i) => i,
                None => {
                    let i = vertices.len() as u32;
                    vertices.push(y);
                    locator.insert(y, i);
                    origin.push((r, v));
                    i
                }
            };
            global[r][v] = idx;
        }
    }
    if vertices.len() > node_budget {
        return Err(Error::NodeBudgetExceeded { requested: vertices.len(), budget: node_budget });
    }
    let node_maps: Vec<Vec<u32>> = (0..group.order())
        .map(|a| origin.iter().map(|&(r, v)| global[group.compose(a, r)][v]).collect())
        .collect();
    let base: Vec<u32> = wedge_cells.iter().map(|&i| global[0][i as usize]).collect();
    let cells = replicate_cells(dim, &group, &node_maps, &base, &vertices);
    let mut mesh = assemble(dim, vertices, cells, group, node_maps, 0, node_budget);
    for _ in 0..refinement {
        mesh = refine(&mesh)?;
    }
    Ok(mesh)
}

/// Meshes the fundamental wedge: coarse simplices from the origin to flat boundary faces,
/// each cut into `n^dim` pieces, then pushed radially onto the ball by the gauge of the
/// coarse polytope.
fn fundamental_wedge(dim: usize, k: usize, n: usize) -> (Vec<Point>, Vec<u32>) {
    let alpha = 2.0 * PI / k as f64;
    let sectors = ((alpha / (PI / 3.0)) - 1e-9).ceil().max(1.0) as usize;
    let mut coarse: Vec<Point> = vec![[0.0; 3]];
    for j in 0..=sectors {
        let t = alpha * j as f64 / sectors as f64;
        coarse.push([t.cos(), t.sin(), 0.0]);
    }
    let north = coarse.len() as u32;
    if dim == 3 {
        coarse.push([0.0, 0.0, 1.0]);
    }
    let coarse_cells: Vec<Vec<u32>> = (0..sectors as u32)
        .map(|j| {
            let mut c = vec![0, 1 + j, 2 + j];
            if dim == 3 {
                c.push(north);
            }
            c
        })
        .collect();

    let kuhn = kuhn_simplices(dim, n);
    let mut keys: HashMap<Vec<(u32, u32)>, u32> = HashMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let mut cells: Vec<u32> = Vec::new();
    for cc in &coarse_cells {
        for simplex in &kuhn {
            let mut ids = Vec::with_capacity(dim + 1);
            for y in simplex {
                // barycentric counts against the coarse vertices
                let mut counts = vec![0u32; dim + 1];
                counts[0] = (n - y[0]) as u32;
                for t in 1..dim {
                    counts[t] = (y[t - 1] - y[t]) as u32;
                }
                counts[dim] = y[dim - 1] as u32;
                let mut key: Vec<(u32, u32)> =
                    cc.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(&v, &c)| (v, c)).collect();
                key.sort_unstable();
                let next = vertices.len() as u32;
                let id = *keys.entry(key.clone()).or_insert_with(|| {
                    vertices.push(gauge_map(&coarse, &key, n));
                    next
                });
                ids.push(id);
            }
            let pts: Vec<Point> = ids.iter().map(|&i| vertices[i as usize]).collect();
            if geom::signed_volume(dim, &pts) < 0.0 {
                ids.swap(dim - 1, dim);
            }
            cells.extend_from_slice(&ids);
        }
    }
    (vertices, cells)
}

/// Maps a lattice point of the coarse polytope radially onto the ball. Vertex 0 is the origin,
/// so the gauge is one minus its barycentric weight.
fn gauge_map(coarse: &[Point], key: &[(u32, u32)], n: usize) -> Point {
    let mut x = [0.0; 3];
    let mut origin_count = 0;
    for &(v, c) in key {
        if v == 0 {
            origin_count = c;
        }
        x = geom::add(x, geom::scale(coarse[v as usize], c as f64 / n as f64));
    }
    let r = geom::norm(x);
    if r == 0.0 {
        return [0.0; 3];
    }
    let gauge = (n as u32 - origin_count) as f64 / n as f64;
    geom::scale(x, gauge / r)
}

/// Freudenthal subdivision of the scaled simplex `{n >= y_1 >= ... >= y_d >= 0}` into `n^d`
/// simplices, as lattice coordinates.
fn kuhn_simplices(dim: usize, n: usize) -> Vec<Vec<Vec<usize>>> {
    let perms: Vec<Vec<usize>> = if dim == 2 {
        vec![vec![0, 1], vec![1, 0]]
    } else {
        vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]]
    };
    let mut out = Vec::new();
    let total = n.pow(dim as u32);
    for flat in 0..total {
        let mut a = vec![0usize; dim];
        let mut f = flat;
        for ai in a.iter_mut() {
            *ai = f % n;
            f /= n;
        }
        for p in &perms {
            let mut y = a.clone();
            let mut simplex = vec![y.clone()];
            for &axis in p {
                y[axis] += 1;
                simplex.push(y.clone());
            }
            let centroid: Vec<f64> = (0..dim)
                .map(|i| simplex.iter().map(|s| s[i] as f64).sum::<f64>() / (dim + 1) as f64)
                .collect();
            let inside = centroid[0] < n as f64
                && centroid[dim - 1] > 0.0
                && centroid.windows(2).all(|w| w[0] > w[1]);
            if inside {
                out.push(simplex);
            }
        }
    }
    debug_assert_eq!(out.len(), total);
    out
}

/// Copies the block-0 cells by every group element, flipping orientation for reflections.
fn replicate_cells(
    dim: usize,
    group: &SymmetryGroup,
    node_maps: &[Vec<u32>],
    base: &[u32],
    vertices: &[Point],
) -> Vec<u32> {
    let s = dim + 1;
    let mut cells = Vec::with_capacity(base.len() * group.order());
    for (r, perm) in node_maps.iter().enumerate() {
        for c in base.chunks(s) {
            let mut img: Vec<u32> = c.iter().map(|&i| perm[i as usize]).collect();
            if group.elements[r].reflection {
                img.swap(dim - 1, dim);
            }
            debug_assert!({
                let pts: Vec<Point> = img.iter().map(|&i| vertices[i as usize]).collect();
                geom::signed_volume(dim, &pts) > 0.0
            });
            cells.extend_from_slice(&img);
        }
    }
    cells
}

/// Derives boundary facets, wedge ids and node orbits from the cells.
fn assemble(
    dim: usize,
    vertices: Vec<Point>,
    cells: Vec<u32>,
    group: SymmetryGroup,
    node_maps: Vec<Vec<u32>>,
    refinement: usize,
    node_budget: usize,
) -> SymmetricMesh {
    let s = dim + 1;
    let ncells = cells.len() / s;
    let cells_per_wedge = ncells / group.order();

    let mut face_count: HashMap<Vec<u32>, u32> = HashMap::with_capacity(ncells * 2);
    for c in cells.chunks(s) {
        for skip in 0..s {
            let face: Vec<u32> = sorted(&face_without(c, skip));
            *face_count.entry(face).or_insert(0) += 1;
        }
    }
    let mut boundary_facets = Vec::new();
    let mut facet_cell = Vec::new();
    for (ci, c) in cells.chunks(s).enumerate() {
        for skip in 0..s {
            let mut face = face_without(c, skip);
            if face_count[&sorted(&face)] != 1 {
                continue;
            }
            let opp = vertices[c[skip] as usize];
            let p: Vec<Point> = face.iter().map(|&i| vertices[i as usize]).collect();
            let outward = if dim == 2 {
                let d = geom::sub(p[1], p[0]);
                let normal = [d[1], -d[0], 0.0];
                geom::dot(normal, geom::sub(opp, p[0])) < 0.0
            } else {
                let normal = geom::cross(geom::sub(p[1], p[0]), geom::sub(p[2], p[0]));
                geom::dot(normal, geom::sub(opp, p[0])) < 0.0
            };
            if !outward {
                face.swap(0, 1);
            }
            boundary_facets.extend_from_slice(&face);
            facet_cell.push(ci as u32);
        }
    }

    let mut is_boundary = vec![false; vertices.len()];
    for &i in &boundary_facets {
        is_boundary[i as usize] = true;
    }
    let mut wedge_id = vec![u32::MAX; vertices.len()];
    for (ci, c) in cells.chunks(s).enumerate() {
        let w = (ci / cells_per_wedge) as u32;
        for &i in c {
            wedge_id[i as usize] = wedge_id[i as usize].min(w);
        }
    }

    let mut orbit_of = vec![u32::MAX; vertices.len()];
    let mut orbit_members = Vec::with_capacity(vertices.len());
    let mut orbit_offsets = vec![0];
    for i in 0..vertices.len() {
        if orbit_of[i] != u32::MAX {
            continue;
        }
        let mut members: Vec<u32> = node_maps.iter().map(|p| p[i]).collect();
        members.sort_unstable();
        members.dedup();
        let id = orbit_offsets.len() as u32 - 1;
        for &m in &members {
            orbit_of[m as usize] = id;
        }
        orbit_members.extend_from_slice(&members);
        orbit_offsets.push(orbit_members.len());
    }

    SymmetricMesh {
        dim,
        vertices,
        cells,
        boundary_facets,
        facet_cell,
        group,
        node_maps,
        wedge_id,
        is_boundary,
        refinement,
        node_budget,
        orbit_members,
        orbit_offsets,
    }
}

/// The facet of `c` opposite local vertex `skip`, oriented consistently with the cell.
fn face_without(c: &[u32], skip: usize) -> Vec<u32> {
    c.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect()
}

/// Uniform refinement: every edge is bisected, boundary midpoints are projected back onto the
/// sphere, triangles split into 4 and tetrahedra into 8 (interior octahedron cut along its
/// shortest diagonal). Node maps are carried over combinatorially.
pub fn refine(mesh: &SymmetricMesh) -> Result<SymmetricMesh> {
    let dim = mesh.dim;
    let s = dim + 1;
    let nv = mesh.num_vertices();

    let mut edge_index: HashMap<(u32, u32), u32> = HashMap::new();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for c in mesh.cells.chunks(s) {
        for a in 0..s {
            for b in a + 1..s {
                let e = (c[a].min(c[b]), c[a].max(c[b]));
                edge_index.entry(e).or_insert_with(|| {
                    edges.push(e);
                    (nv + edges.len() - 1) as u32
                });
            }
        }
    }
    let requested = nv + edges.len();
    if requested > mesh.node_budget {
        return Err(Error::NodeBudgetExceeded { requested, budget: mesh.node_budget });
    }

    let mut boundary_edges: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
    for f in mesh.boundary_facets.chunks(dim) {
        for a in 0..dim {
            for b in a + 1..dim {
                boundary_edges.insert((f[a].min(f[b]), f[a].max(f[b])));
            }
        }
    }

    let mut vertices = mesh.vertices.clone();
    vertices.reserve(edges.len());
    for e in &edges {
        let m = geom::midpoint(mesh.vertices[e.0 as usize], mesh.vertices[e.1 as usize]);
        vertices.push(if boundary_edges.contains(e) { geom::normalize(m) } else { m });
    }
    let mid = |a: u32, b: u32| edge_index[&(a.min(b), a.max(b))];

    let node_maps: Vec<Vec<u32>> = mesh
        .node_maps
        .iter()
        .map(|perm| {
            let mut p = perm.clone();
            p.extend(edges.iter().map(|&(a, b)| mid(perm[a as usize], perm[b as usize])));
            p
        })
        .collect();

    let mut base: Vec<u32> = Vec::with_capacity(mesh.cells_per_wedge() * s * (1 << dim));
    for c in mesh.cells[..mesh.cells_per_wedge() * s].chunks(s) {
        let children = if dim == 2 { split_triangle(c, &mid) } else { split_tetrahedron(c, &mid, &vertices) };
        for mut child in children {
            let pts: Vec<Point> = child.iter().map(|&i| vertices[i as usize]).collect();
            if geom::signed_volume(dim, &pts) < 0.0 {
                child.swap(dim - 1, dim);
            }
            base.extend_from_slice(&child);
        }
    }
    let cells = replicate_cells(dim, &mesh.group, &node_maps, &base, &vertices);
    Ok(assemble(dim, vertices, cells, mesh.group.clone(), node_maps, mesh.refinement + 1, mesh.node_budget))
}

fn split_triangle(c: &[u32], mid: &impl Fn(u32, u32) -> u32) -> Vec<Vec<u32>> {
    let (v0, v1, v2) = (c[0], c[1], c[2]);
    let (m01, m12, m02) = (mid(v0, v1), mid(v1, v2), mid(v0, v2));
    vec![vec![v0, m01, m02], vec![m01, v1, m12], vec![m02, m12, v2], vec![m01, m12, m02]]
}

fn split_tetrahedron(c: &[u32], mid: &impl Fn(u32, u32) -> u32, vertices: &[Point]) -> Vec<Vec<u32>> {
    let mut children: Vec<Vec<u32>> = (0..4)
        .map(|i| {
            let mut child = vec![c[i]];
            child.extend((0..4).filter(|&j| j != i).map(|j| mid(c[i], c[j])));
            child
        })
        .collect();
    // diagonals join midpoints of opposite edges: (ab, cd)
    let pairs = [(0, 2, 1, 3), (0, 1, 2, 3), (0, 3, 1, 2)];
    let len = |&(a, b, cc, d): &(usize, usize, usize, usize)| {
        geom::dist(vertices[mid(c[a], c[b]) as usize], vertices[mid(c[cc], c[d]) as usize])
    };
    let mut best = pairs[0];
    for p in &pairs[1..] {
        if len(p) < len(&best) {
            best = *p;
        }
    }
    let (a, b, cc, d) = best;
    let (p, q) = (mid(c[a], c[b]), mid(c[cc], c[d]));
    let ring = [mid(c[a], c[cc]), mid(c[a], c[d]), mid(c[b], c[d]), mid(c[b], c[cc])];
    for i in 0..4 {
        children.push(vec![p, q, ring[i], ring[(i + 1) % 4]]);
    }
    children
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kuhn_subdivision_counts() {
        assert_eq!(kuhn_simplices(2, 4).len(), 16);
        assert_eq!(kuhn_simplices(3, 3).len(), 27);
    }

    #[test]
    fn rejects_small_k() {
        assert!(matches!(build_mesh(2, 1, 0), Err(Error::InvalidRotationOrder(1))));
    }

    #[test]
    fn rejects_unsupported_dimension() {
        assert!(matches!(build_mesh(4, 3, 0), Err(Error::UnsupportedDimension(4))));
    }

    #[test]
    fn budget_is_enforced() {
        let err = build_mesh_with_budget(2, 3, 3, 1000).unwrap_err();
        assert!(matches!(err, Error::NodeBudgetExceeded { budget: 1000, .. }));
    }

    #[test]
    fn quarter_turn_maps_nodes_to_nodes() {
        let mesh = build_mesh(2, 4, 0).unwrap();
        let g = &mesh.group.elements[1];
        for (i, &j) in mesh.node_maps[1].iter().enumerate() {
            let x = mesh.vertices[i];
            let rotated = [-x[1], x[0], 0.0];
            assert!(geom::dist(mesh.vertices[j as usize], rotated) < 1e-12);
            assert!(geom::dist(mesh.vertices[j as usize], g.apply(x)) < 1e-12);
        }
    }

    #[test]
    fn triangle_count_quadruples() {
        let m0 = build_mesh(2, 3, 0).unwrap();
        let m1 = refine(&m0).unwrap();
        let m2 = refine(&m1).unwrap();
        assert_eq!(m1.num_cells(), 4 * m0.num_cells());
        assert_eq!(m2.num_cells(), 4 * m1.num_cells());
    }

    #[test]
    fn tetrahedron_count_multiplies_by_eight() {
        let m0 = build_mesh(3, 3, 0).unwrap();
        let m1 = refine(&m0).unwrap();
        assert_eq!(m1.num_cells(), 8 * m0.num_cells());
    }

    #[test]
    fn reflection_maps_vertex_set_to_itself() {
        let mesh = build_mesh(3, 3, 1).unwrap();
        let locator = PointLocator::new(&mesh.vertices);
        for x in &mesh.vertices {
            let j = locator.find(&mesh.vertices, [x[0], x[1], -x[2]]).expect("reflected vertex");
            let y = mesh.vertices[j as usize];
            assert_eq!(y[2], -x[2]);
            assert!(geom::dist(y, [x[0], x[1], -x[2]]) == 0.0);
        }
    }

    #[test]
    fn invariants_hold_after_refinement() {
        for (dim, k, r) in [(2, 2, 2), (2, 5, 1), (3, 2, 1), (3, 4, 1)] {
            let mesh = build_mesh(dim, k, r).unwrap();
            let rep = mesh.check_invariants().unwrap();
            assert!(rep.max_boundary_radius_error < 1e-12, "{rep:?}");
            assert!(rep.max_group_residual < 1e-12, "{rep:?}");
            assert!(rep.min_cell_volume > 0.0);
        }
    }

    #[test]
    fn wedge_partition_has_group_order_replicas() {
        let mesh = build_mesh(3, 3, 0).unwrap();
        let mut counts = vec![0usize; mesh.group.order()];
        for &w in &mesh.wedge_id {
            counts[w as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0));
        assert_eq!(counts.iter().sum::<usize>(), mesh.num_vertices());
    }

    #[test]
    fn boundary_facets_are_outward() {
        let mesh = build_mesh(3, 2, 0).unwrap();
        for f in 0..mesh.num_facets() {
            let p = mesh.facet_points(f);
            let n = geom::cross(geom::sub(p[1], p[0]), geom::sub(p[2], p[0]));
            let c = geom::scale(geom::add(geom::add(p[0], p[1]), p[2]), 1.0 / 3.0);
            assert!(geom::dot(n, c) > 0.0);
        }
        let disk = build_mesh(2, 3, 0).unwrap();
        for f in 0..disk.num_facets() {
            let p = disk.facet_points(f);
            let d = geom::sub(p[1], p[0]);
            assert!(geom::dot([d[1], -d[0], 0.0], p[0]) > 0.0);
        }
    }

    #[test]
    fn json_round_trip_preserves_structure() {
        let mesh = build_mesh(3, 3, 0).unwrap();
        let back = SymmetricMesh::from_json(&mesh.to_json().unwrap()).unwrap();
        assert_eq!(back.num_vertices(), mesh.num_vertices());
        assert_eq!(back.num_cells(), mesh.num_cells());
        assert_eq!(back.num_facets(), mesh.num_facets());
        assert!(back.check_invariants().unwrap().max_group_residual < 1e-12);
        let again = refine(&back).unwrap();
        assert_eq!(again.num_cells(), 8 * mesh.num_cells());
    }

    #[test]
    fn import_rejects_asymmetric_cells() {
        let mesh = build_mesh(2, 3, 0).unwrap();
        let mut doc = mesh.to_document();
        doc.cells.pop();
        assert!(SymmetricMesh::from_document(doc).is_err());
    }
}
