//! Symmetric sparse matrices on a fixed P1 sparsity pattern, and Jacobi-preconditioned CG.

/// CSR pattern of a P1 operator together with, for every cell, the positions of its local
/// `(a, b)` entries so values can be re-assembled without searching.
#[derive(Debug, Clone)]
pub struct CsrPattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    /// `cell_slots[c * s * s + a * s + b]` with `s` the cell size.
    cell_slots: Vec<u32>,
    cell_size: usize,
}

impl CsrPattern {
    pub fn from_cells(n: usize, cells: &[u32], cell_size: usize) -> Self {
        let mut neighbours: Vec<Vec<u32>> = vec![Vec::new(); n];
        for c in cells.chunks(cell_size) {
            for &a in c {
                for &b in c {
                    neighbours[a as usize].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in neighbours.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let mut cell_slots = Vec::with_capacity(cells.len() * cell_size);
        for c in cells.chunks(cell_size) {
            for &a in c {
                let row = &col_idx[row_ptr[a as usize]..row_ptr[a as usize + 1]];
                for &b in c {
                    let pos = row.binary_search(&b).expect("pattern contains every cell pair");
                    cell_slots.push((row_ptr[a as usize] + pos) as u32);
                }
            }
        }
        Self { n, row_ptr, col_idx, cell_slots, cell_size }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Adds a dense cell matrix (row-major, `s x s`) into `values`.
    pub fn add_cell(&self, values: &mut [f64], cell: usize, local: &[f64]) {
        let s2 = self.cell_size * self.cell_size;
        let slots = &self.cell_slots[cell * s2..(cell + 1) * s2];
        for (slot, v) in slots.iter().zip(local) {
            values[*slot as usize] += v;
        }
    }

    pub fn matvec(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += values[p] * x[self.col_idx[p] as usize];
            }
            *yi = acc;
        }
    }

    pub fn diagonal(&self, values: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
                let pos = row.binary_search(&(i as u32)).expect("diagonal present");
                values[self.row_ptr[i] + pos]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for SPD `A` by conjugate gradients with a Jacobi preconditioner, starting
/// from `x = 0`.
pub fn solve_cg(pattern: &CsrPattern, values: &[f64], b: &[f64], rel_tol: f64, max_iter: usize) -> (Vec<f64>, CgOutcome) {
    let n = pattern.n;
    let inv_diag: Vec<f64> = pattern.diagonal(values).iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return (x, CgOutcome { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 0..max_iter {
        pattern.matvec(values, &p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return (x, CgOutcome { iterations: it, relative_residual: rel, converged: false });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= rel_tol {
            return (x, CgOutcome { iterations: it + 1, relative_residual: rel, converged: true });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, CgOutcome { iterations: max_iter, relative_residual: rel, converged: false })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
