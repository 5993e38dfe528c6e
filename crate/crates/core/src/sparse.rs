//! Compressed sparse rows, reverse Cuthill–McKee ordering and an envelope
//! (skyline) Cholesky factorization for symmetric positive definite systems.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Square CSR matrix with sorted column indices in every row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed in input
    /// order, so the result is reproducible bit for bit.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut slot = counts.clone();
        let mut order = vec![0usize; triplets.len()];
        for (k, &(r, _, _)) in triplets.iter().enumerate() {
            order[slot[r]] = k;
            slot[r] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for r in 0..n {
            let mut entries: Vec<(usize, usize)> = order[counts[r]..counts[r + 1]]
                .iter()
                .map(|&k| (triplets[k].1, k))
                .collect();
            // Stable: equal columns keep input order.
            entries.sort_by_key(|&(c, _)| c);
            let mut last = usize::MAX;
            for (c, k) in entries {
                if c == last {
                    *values.last_mut().unwrap() += triplets[k].2;
                } else {
                    col_idx.push(c);
                    values.push(triplets[k].2);
                    last = c;
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Largest |A_ij − A_ji| over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `self + alpha * other`, on the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                trip.push((i, j, v));
            }
            for (j, v) in other.row(i) {
                trip.push((i, j, alpha * v));
            }
        }
        CsrMatrix::from_triplets(self.n, &trip)
    }

    /// Principal submatrix on `keep` (new index i ↔ old index keep[i]).
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut new_of_old = vec![usize::MAX; self.n];
        for (i, &o) in keep.iter().enumerate() {
            new_of_old[o] = i;
        }
        let mut trip = Vec::new();
        for (i, &o) in keep.iter().enumerate() {
            for (j, v) in self.row(o) {
                let nj = new_of_old[j];
                if nj != usize::MAX {
                    trip.push((i, nj, v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reverse Cuthill–McKee permutation: `perm[new] = old`.
pub fn rcm_order(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n)
        .map(|i| a.row(i).filter(|&(j, _)| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // Start each component from a pseudo-peripheral vertex.
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        let start = pseudo_peripheral(a, seed, &degree);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a
                .row(v)
                .map(|(j, _)| j)
                .filter(|&j| !visited[j])
                .collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &CsrMatrix, start: usize) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; a.n];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for (j, _) in a.row(v) {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                queue.push_back(j);
            }
        }
    }
    (level, last)
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut v = seed;
    let (mut levels, _) = bfs_levels(a, v);
    let mut ecc = levels.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
    for _ in 0..8 {
        let far = levels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == ecc)
            .map(|(i, _)| i)
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        let (nl, _) = bfs_levels(a, far);
        let ne = nl.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
        if ne <= ecc {
            break;
        }
        v = far;
        levels = nl;
        ecc = ne;
    }
    v
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ` in row-skyline storage.
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    n: usize,
    perm: Vec<usize>,
    /// first[i] is the first stored column of row i (permuted numbering).
    first: Vec<usize>,
    /// start[i] is the offset of row i's entries first[i]..=i in `data`.
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let perm = rcm_order(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (oj, _) in a.row(old) {
                let j = inv[oj];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for old in 0..n {
            let i = inv[old];
            for (oj, v) in a.row(old) {
                let j = inv[oj];
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }
        // Row-oriented envelope factorization.
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let ri = start[i] + lo - fi;
                let rj = start[j] + lo - fj;
                let len = j - lo;
                let s = dot(&data[ri..ri + len], &data[rj..rj + len]);
                let ljj = data[start[j] + j - fj];
                let idx = start[i] + j - fi;
                data[idx] = (data[idx] - s) / ljj;
            }
            let row = &data[start[i]..start[i] + i - fi];
            let d = data[start[i] + i - fi] - dot(row, row);
            if !(d > 0.0) {
                return Err(Error::Argument(format!(
                    "matrix is not positive definite (pivot {d:e} at row {i})"
                )));
            }
            data[start[i] + i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            first,
            start,
            data,
        })
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i] + i - fi];
            let s = dot(row, &y[fi..i]);
            y[i] = (y[i] - s) / self.data[self.start[i] + i - fi];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.data[self.start[i] + i - fi];
            let yi = y[i];
            let row = &self.data[self.start[i]..self.start[i] + i - fi];
            for (k, &l) in row.iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 0.5), (0, 1, 2.0)]);
        assert_eq!(a.get(0, 0), 1.5);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn rcm_is_permutation() {
        let a = laplacian_1d(50, 0.1);
        let mut p = rcm_order(&a);
        p.sort();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_solves() {
        // 2-D grid Laplacian, shifted to be definite.
        let m = 12;
        let n = m * m;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                t.push((k, k, 4.1));
                if i > 0 {
                    t.push((k, k - m, -1.0));
                    t.push((k - m, k, -1.0));
                }
                if j > 0 {
                    t.push((k, k - 1, -1.0));
                    t.push((k - 1, k, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let f = SkylineCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = f.solve(&b);
        let r: Vec<f64> = a.mul(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm(&r) < 1e-12 * norm(&b));
        assert!(f.envelope_size() < n * n / 3);
    }

    #[test]
    fn indefinite_rejected() {
        let a = laplacian_1d(5, -3.0);
        assert!(SkylineCholesky::factor(&a).is_err());
    }
}
