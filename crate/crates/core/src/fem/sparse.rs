//! Compressed sparse row matrices with a fixed pattern.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sorted column lists per row.
    pub fn from_pattern(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            indices.extend(r);
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        CsrMatrix { nrows: indptr.len() - 1, ncols, indptr, indices, data: vec![0.0; nnz] }
    }

    /// Block pattern of P1 couplings: `block` dofs per vertex, interleaved.
    pub fn fem_pattern(mesh: &Mesh, block: usize) -> Self {
        let nv = mesh.n_vertices();
        let mut adj: Vec<Vec<usize>> = (0..nv).map(|v| vec![v]).collect();
        for c in mesh.cells() {
            for &a in c {
                for &b in c {
                    adj[a].push(b);
                }
            }
        }
        let mut rows = Vec::with_capacity(nv * block);
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        for a in &adj {
            let cols: Vec<usize> = a.iter().flat_map(|&b| (0..block).map(move |k| b * block + k)).collect();
            for _ in 0..block {
                rows.push(cols.clone());
            }
        }
        Self::from_pattern(nv * block, rows)
    }

    pub fn from_triplets(nrows: usize, ncols: usize, t: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, _) in t {
            if i >= nrows || j >= ncols {
                return Err(Error::Dimension(format!("triplet ({i}, {j}) outside {nrows}x{ncols}")));
            }
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(ncols, rows);
        for &(i, j, v) in t {
            m.add(i, j, v);
        }
        Ok(m)
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let m = a.first().map_or(0, |r| r.len());
        let rows = a.iter().map(|r| (0..m).filter(|&j| r[j] != 0.0).collect()).collect();
        let mut out = Self::from_pattern(m, rows);
        for i in 0..n {
            for j in 0..m {
                if a[i][j] != 0.0 {
                    out.add(i, j, a[i][j]);
                }
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.data.len()
    }
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }
    pub fn row_mut(&mut self, i: usize) -> (&[usize], &mut [f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &mut self.data[r])
    }
    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn values(&self) -> &[f64] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|k| self.indptr[i] + k)
    }

    /// Add to an entry that must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is outside the sparsity pattern"));
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.data[k])
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            let mut s = 0.0;
            for k in 0..c.len() {
                s += v[k] * x[c[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows = vec![Vec::new(); self.ncols];
        let mut vals = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for k in 0..c.len() {
                rows[c[k]].push(i);
                vals[c[k]].push(v[k]);
            }
        }
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for (r, v) in rows.into_iter().zip(vals) {
            indices.extend(r);
            data.extend(v);
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, indptr, indices, data }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for k in 0..c.len() {
                d[i][c[k]] += v[k];
            }
        }
        d
    }

    /// Submatrix on the given (sorted) row and column index sets.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &j) in cols.iter().enumerate() {
            map[j] = k;
        }
        let mut t = Vec::new();
        for (ri, &i) in rows.iter().enumerate() {
            let (c, v) = self.row(i);
            for k in 0..c.len() {
                if map[c[k]] != usize::MAX {
                    t.push((ri, map[c[k]], v[k]));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), &t).expect("indices in range")
    }

    /// Largest absolute entrywise difference, over the union of both patterns.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for k in 0..c.len() {
                m = m.max((v[k] - other.get(i, c[k])).abs());
            }
            let (c, v) = other.row(i);
            for k in 0..c.len() {
                m = m.max((v[k] - self.get(i, c[k])).abs());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Matrix Market coordinate text.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for k in 0..c.len() {
                let _ = writeln!(s, "{} {} {:e}", i + 1, c[k] + 1, v[k]);
            }
        }
        s
    }
}

/// Strongly imposed values on a set of dofs.
#[derive(Clone, Debug, Default)]
pub struct Dirichlet {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

impl Dirichlet {
    pub fn new(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        pairs.dedup_by_key(|p| p.0);
        let (dofs, values) = pairs.into_iter().unzip();
        Dirichlet { dofs, values }
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &d in &self.dofs {
            m[d] = true;
        }
        m
    }

    pub fn free_dofs(&self, n: usize) -> Vec<usize> {
        let m = self.mask(n);
        (0..n).filter(|&i| !m[i]).collect()
    }

    /// Replace constrained rows by identity rows with the prescribed value.
    /// With `symmetric`, constrained columns are also eliminated into `b`.
    pub fn apply(&self, a: &mut CsrMatrix, b: &mut [f64], symmetric: bool) {
        let mask = self.mask(a.nrows());
        if symmetric {
            let mut xd = vec![0.0; a.ncols()];
            for (&d, &v) in self.dofs.iter().zip(&self.values) {
                xd[d] = v;
            }
            for i in 0..a.nrows() {
                if mask[i] {
                    continue;
                }
                let (c, vals) = a.row_mut(i);
                for k in 0..c.len() {
                    if mask[c[k]] {
                        b[i] -= vals[k] * xd[c[k]];
                        vals[k] = 0.0;
                    }
                }
            }
        }
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            let (c, vals) = a.row_mut(d);
            for k in 0..c.len() {
                vals[k] = if c[k] == d { 1.0 } else { 0.0 };
            }
            b[d] = v;
        }
    }

    /// Identity rows with zero right-hand side, for corrections of a state
    /// that already satisfies the constraint.
    pub fn apply_homogeneous(&self, a: &mut CsrMatrix, b: &mut [f64]) {
        let zero = Dirichlet { dofs: self.dofs.clone(), values: vec![0.0; self.dofs.len()] };
        zero.apply(a, b, false);
    }
}
