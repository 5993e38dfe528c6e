//! Lowest eigenpairs of a symmetric pencil by shift-invert block Krylov
//! iteration with full reorthogonalization in the M-inner product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{residual, Pencil};
use crate::geometry::{HomotopyMap, SymmetryFamily};
use crate::sparse::{dot, SkylineCholesky};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_SEED: u64 = 0x5eed_2024;
const BLOCK: usize = 4;
const DENSE_LIMIT: usize = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub family: Option<SymmetryFamily>,
    pub map: Option<HomotopyMap>,
    pub t: f64,
    pub h: f64,
    pub n_requested: usize,
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// M-orthonormal DOF vectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
        }
    }
}

/// `|λ_j − λ_{j+1}| / λ_j`, or infinity when `λ_j ≤ 1e-12`.
pub fn relative_gap(spectrum: &Spectrum, j: usize) -> Result<f64> {
    if j + 1 >= spectrum.eigenvalues.len() {
        return Err(Error::Argument(format!(
            "gap index {j} needs {} eigenvalues, spectrum has {}",
            j + 2,
            spectrum.eigenvalues.len()
        )));
    }
    Ok(gap(spectrum.eigenvalues[j], spectrum.eigenvalues[j + 1]))
}

pub fn gap(a: f64, b: f64) -> f64 {
    if a <= 1e-12 {
        f64::INFINITY
    } else {
        (a - b).abs() / a
    }
}

pub fn smallest_eigenpairs(pencil: &Pencil, n: usize, tol: f64) -> Result<Spectrum> {
    smallest_eigenpairs_with(pencil, n, &SolverOptions { tol, ..Default::default() })
}

pub fn smallest_eigenpairs_with(pencil: &Pencil, n: usize, opts: &SolverOptions) -> Result<Spectrum> {
    if n == 0 || n > pencil.n_dof {
        return Err(Error::Argument(format!(
            "requested {n} eigenpairs of a pencil with {} DOFs",
            pencil.n_dof
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Argument(format!("tolerance {} must be positive", opts.tol)));
    }
    let (values, vectors) = if pencil.n_dof <= DENSE_LIMIT {
        dense_solve(pencil, n)?
    } else {
        krylov_solve(pencil, n, opts)?
    };
    let mut residuals = Vec::with_capacity(n);
    for (v, &l) in vectors.iter().zip(&values) {
        residuals.push(residual(pencil, v, l)?);
    }
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > opts.tol {
        return Err(Error::NotConverged {
            worst_residual: worst,
            iterations: 0,
        });
    }
    Ok(Spectrum {
        eigenvalues: values,
        vectors,
        residuals,
        meta: SpectrumMeta {
            n_requested: n,
            ..Default::default()
        },
    })
}

fn normalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn sorted_symmetric_eigen(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

fn dense_solve(pencil: &Pencil, n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = pencil.n_dof;
    let to_dense = |a: &crate::sparse::CsrMatrix| {
        let rows = a.to_dense();
        DMatrix::from_fn(d, d, |i, j| rows[i][j])
    };
    let k = to_dense(&pencil.k);
    let m = to_dense(&pencil.m);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Assembly("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Assembly("mass matrix factor is singular".into()))?;
    let a = &linv * k * linv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let (vals, vecs) = sorted_symmetric_eigen(a);
    let lt_inv = linv.transpose();
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        let x = &lt_inv * vecs.column(c);
        let mut v: Vec<f64> = x.iter().copied().collect();
        normalize_sign(&mut v);
        out.push(v);
    }
    Ok((vals[..n].to_vec(), out))
}

struct Basis {
    q: Vec<Vec<f64>>,
    mq: Vec<Vec<f64>>,
    kq: Vec<Vec<f64>>,
}

impl Basis {
    /// M-orthogonalize `w` against the basis twice and normalize it. Returns
    /// `None` when `w` is numerically inside the span.
    fn orthonormalize(&self, pencil: &Pencil, mut w: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut mw = pencil.m.mul(&w);
        let start = dot(&w, &mw).sqrt();
        for _ in 0..2 {
            let coeffs: Vec<f64> = self.mq.iter().map(|mq| dot(mq, &w)).collect();
            for (c, (q, mq)) in coeffs.iter().zip(self.q.iter().zip(&self.mq)) {
                for i in 0..w.len() {
                    w[i] -= c * q[i];
                    mw[i] -= c * mq[i];
                }
            }
        }
        let nrm = dot(&w, &mw).max(0.0).sqrt();
        if !(nrm > 1e-10 * start) {
            return None;
        }
        w.iter_mut().for_each(|x| *x /= nrm);
        // Recompute M w to avoid drift in the stored product.
        let mw = pencil.m.mul(&w);
        Some((w, mw))
    }

    fn push(&mut self, pencil: &Pencil, w: Vec<f64>, mw: Vec<f64>) {
        self.kq.push(pencil.k.mul(&w));
        self.q.push(w);
        self.mq.push(mw);
    }
}

/// Negative shift for the shift-invert operator: `−0.01·tr K / tr M`, capped
/// in magnitude by `1/area` (`tr M` is half the area for P1 mass). The
/// uncapped value grows like `h⁻²` and stalls convergence on fine meshes.
pub fn shift(pencil: &Pencil) -> f64 {
    let tm = pencil.m.trace();
    -(0.01 * pencil.k.trace() / tm).min(0.5 / tm)
}

fn krylov_solve(pencil: &Pencil, n: usize, opts: &SolverOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dim = pencil.n_dof;
    let sigma = shift(pencil);
    let shifted = pencil.k.add_scaled(-sigma, &pencil.m);
    let chol = SkylineCholesky::factor(&shifted)?;
    let max_dim = dim.min((10 * n).max(n + 200));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis = Basis {
        q: Vec::new(),
        mq: Vec::new(),
        kq: Vec::new(),
    };
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.random::<f64>() - 0.5).collect() };

    let mut frontier: Vec<usize> = Vec::new();
    while basis.q.len() < BLOCK.min(dim) {
        let w = chol.solve(&pencil.m.mul(&random_vec(&mut rng)));
        if let Some((w, mw)) = basis.orthonormalize(pencil, w) {
            basis.push(pencil, w, mw);
            frontier.push(basis.q.len() - 1);
        }
    }
    let mut worst = f64::INFINITY;
    let mut last_check = 0;
    loop {
        let size = basis.q.len();
        if size >= n + BLOCK && (size - last_check >= 2 * BLOCK || size >= max_dim) {
            last_check = size;
            let (vals, vecs, res) = rayleigh_ritz(pencil, &basis, n);
            worst = res.iter().cloned().fold(0.0, f64::max);
            if worst <= 0.5 * opts.tol || size >= dim {
                return Ok((vals, vecs));
            }
        }
        if size >= max_dim {
            return Err(Error::NotConverged {
                worst_residual: worst,
                iterations: size,
            });
        }
        // Next block: apply the shift-inverted operator to the newest vectors.
        let mut next = Vec::new();
        for &i in &frontier {
            if basis.q.len() >= max_dim {
                break;
            }
            let w = chol.solve(&basis.mq[i]);
            if let Some((w, mw)) = basis.orthonormalize(pencil, w) {
                basis.push(pencil, w, mw);
                next.push(basis.q.len() - 1);
            }
        }
        // Invariant subspace found: restart the lost directions randomly.
        let mut attempts = 0;
        while next.len() < frontier.len().min(max_dim - basis.q.len().min(max_dim)) && attempts < 8 {
            attempts += 1;
            let w = chol.solve(&pencil.m.mul(&random_vec(&mut rng)));
            if let Some((w, mw)) = basis.orthonormalize(pencil, w) {
                basis.push(pencil, w, mw);
                next.push(basis.q.len() - 1);
            }
        }
        if next.is_empty() {
            let (vals, vecs, res) = rayleigh_ritz(pencil, &basis, n.min(basis.q.len()));
            worst = res.iter().cloned().fold(0.0, f64::max);
            if vals.len() == n && worst <= opts.tol {
                return Ok((vals, vecs));
            }
            return Err(Error::NotConverged {
                worst_residual: worst,
                iterations: basis.q.len(),
            });
        }
        frontier = next;
    }
}

fn rayleigh_ritz(pencil: &Pencil, basis: &Basis, n: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let d = basis.q.len();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = 0.5 * (dot(&basis.q[i], &basis.kq[j]) + dot(&basis.q[j], &basis.kq[i]));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let (vals, y) = sorted_symmetric_eigen(h);
    let dim = pencil.n_dof;
    let mut vecs = Vec::with_capacity(n);
    let mut res = Vec::with_capacity(n);
    for c in 0..n {
        let yc: DVector<f64> = y.column(c).into_owned();
        let mut x = vec![0.0; dim];
        let mut kx = vec![0.0; dim];
        let mut mx = vec![0.0; dim];
        for (k, &coef) in yc.iter().enumerate() {
            let (q, kq, mq) = (&basis.q[k], &basis.kq[k], &basis.mq[k]);
            for i in 0..dim {
                x[i] += coef * q[i];
                kx[i] += coef * kq[i];
                mx[i] += coef * mq[i];
            }
        }
        let l = vals[c];
        let r: f64 = kx.iter().zip(&mx).map(|(a, b)| (a - l * b).powi(2)).sum::<f64>().sqrt();
        let mnorm = dot(&mx, &mx).sqrt();
        res.push(r / (mnorm * l.max(1.0)));
        normalize_sign(&mut x);
        vecs.push(x);
    }
    (vals[..n].to_vec(), vecs, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::geometry::fundamental_domain;
    use crate::mesh::triangulate;
    use crate::sparse::CsrMatrix;

    fn diag_pencil(d: &[f64]) -> Pencil {
        let n = d.len();
        let kt: Vec<_> = d.iter().enumerate().map(|(i, &x)| (i, i, x)).collect();
        let mt: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Pencil {
            k: CsrMatrix::from_triplets(n, &kt),
            m: CsrMatrix::from_triplets(n, &mt),
            dof_of_vertex: (0..n).map(Some).collect(),
            vertex_of_dof: (0..n).collect(),
            n_dof: n,
        }
    }

    #[test]
    fn diagonal_example() {
        let s = smallest_eigenpairs(&diag_pencil(&[0.0, 1.0, 4.0]), 3, 1e-9).unwrap();
        assert_eq!(s.eigenvalues.len(), 3);
        for (i, &l) in [0.0, 1.0, 4.0].iter().enumerate() {
            assert!((s.eigenvalues[i] - l).abs() < 1e-12);
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s.vectors[i][j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_diagonal_uses_krylov() {
        let d: Vec<f64> = (0..500).map(|i| ((i * 37) % 500) as f64 * 0.1).collect();
        let s = smallest_eigenpairs(&diag_pencil(&d), 10, 1e-9).unwrap();
        for (i, &l) in s.eigenvalues.iter().enumerate() {
            assert!((l - 0.1 * i as f64).abs() < 1e-9, "{i}: {l}");
        }
    }

    #[test]
    fn argument_errors() {
        let p = diag_pencil(&[0.0, 1.0]);
        assert!(smallest_eigenpairs(&p, 3, 1e-9).is_err());
        assert!(smallest_eigenpairs(&p, 1, 0.0).is_err());
    }

    #[test]
    fn gap_examples() {
        let mut s = smallest_eigenpairs(&diag_pencil(&[0.0, 1.0, 4.0]), 3, 1e-9).unwrap();
        s.eigenvalues = vec![0.0, 10.0, 10.0, 100.0, 101.0];
        assert_eq!(relative_gap(&s, 1).unwrap(), 0.0);
        assert!((relative_gap(&s, 3).unwrap() - 0.01).abs() < 1e-15);
        assert!(relative_gap(&s, 0).unwrap().is_infinite());
        assert!(relative_gap(&s, 4).is_err());
    }

    #[test]
    fn square_wedge_second_mode() {
        let spec = fundamental_domain(HomotopyMap::CarpetG(0), SymmetryFamily::OnePP, 0.0).unwrap();
        let mesh = triangulate(&spec, 1.0 / 32.0).unwrap();
        let p = assemble(&mesh).unwrap();
        let s = smallest_eigenpairs(&p, 4, 1e-9).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-9);
        let norm = |l: f64| l * 4.0 / std::f64::consts::PI.powi(2);
        assert!((norm(s.eigenvalues[1]) - 4.0).abs() < 0.02 * 4.0);
        for i in 0..4 {
            for j in 0..4 {
                let g = dot(&s.vectors[i], &p.m.mul(&s.vectors[j]));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8);
            }
        }
    }
}
