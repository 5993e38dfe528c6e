//! Derivatives of eigenpairs of smooth symmetric matrix families.
//!
//! For a simple eigenvalue `λ_k` of `A(t)` with unit eigenvector `u_k`:
//!
//! ```text
//! λ′_k = u_kᵀ A′ u_k
//! u′_k = Σ_{j≠k} (u_jᵀ A′ u_k) / (λ_k − λ_j) · u_j
//! λ″_k = u_kᵀ A″ u_k + 2 Σ_{j≠k} (u_jᵀ A′ u_k)² / (λ_k − λ_j)
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::RngExt;

use crate::error::{Error, Result};

pub trait MatrixFamily {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64) -> DMatrix<f64>;

    fn d1(&self, t: f64) -> DMatrix<f64> {
        let h = 1e-5;
        (self.eval(t + h) - self.eval(t - h)) / (2.0 * h)
    }

    fn d2(&self, t: f64) -> DMatrix<f64> {
        let h = 1e-4;
        (self.eval(t + h) - 2.0 * self.eval(t) + self.eval(t - h)) / (h * h)
    }
}

/// `A(t) = Σ_i t^i A_i` with symmetric coefficients.
#[derive(Clone, Debug)]
pub struct PolynomialFamily {
    pub coeffs: Vec<DMatrix<f64>>,
}

impl PolynomialFamily {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = coeffs
            .first()
            .map(|c| c.nrows())
            .ok_or_else(|| Error::Argument("empty matrix family".into()))?;
        for c in &coeffs {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::Argument("coefficient shape mismatch".into()));
            }
            if (c - c.transpose()).amax() > 1e-13 {
                return Err(Error::Argument("coefficient is not symmetric".into()));
            }
        }
        Ok(Self { coeffs })
    }

    /// Random symmetric coefficients with standard normal-ish entries.
    pub fn random<R: rand::Rng>(n: usize, degree: usize, rng: &mut R) -> Self {
        let coeffs = (0..=degree)
            .map(|_| {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..=i {
                        let v: f64 = rng.random_range(-1.0..1.0);
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                m
            })
            .collect();
        Self { coeffs }
    }

    fn derivative(&self, order: usize, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for (i, c) in self.coeffs.iter().enumerate().skip(order) {
            let mut f = 1.0;
            for k in 0..order {
                f *= (i - k) as f64;
            }
            out += c * (f * t.powi((i - order) as i32));
        }
        out
    }
}

impl MatrixFamily for PolynomialFamily {
    fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    fn eval(&self, t: f64) -> DMatrix<f64> {
        self.derivative(0, t)
    }

    fn d1(&self, t: f64) -> DMatrix<f64> {
        self.derivative(1, t)
    }

    fn d2(&self, t: f64) -> DMatrix<f64> {
        self.derivative(2, t)
    }
}

/// `A(t) = t³ B₁` for `t >= 0` and `t³ B₂` for `t < 0`: smooth (C²) in `t`
/// yet with eigenvectors that jump at `t = 0` when `B₁` and `B₂` do not
/// commute.
#[derive(Clone, Debug)]
pub struct OneSidedFamily {
    pub positive: DMatrix<f64>,
    pub negative: DMatrix<f64>,
}

impl MatrixFamily for OneSidedFamily {
    fn dim(&self) -> usize {
        self.positive.nrows()
    }

    fn eval(&self, t: f64) -> DMatrix<f64> {
        if t >= 0.0 {
            &self.positive * t.powi(3)
        } else {
            &self.negative * t.powi(3)
        }
    }
}

/// Sorted eigen-decomposition with a deterministic eigenvector sign.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let se = SymmetricEigen::new(a.clone());
    let mut idx: Vec<usize> = (0..a.nrows()).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = idx
        .iter()
        .map(|&i| {
            let mut v = se.eigenvectors.column(i).into_owned();
            let lead = v.iter().copied().find(|x| x.abs() > 1e-8).unwrap_or(1.0);
            if lead < 0.0 {
                v.neg_mut();
            }
            v
        })
        .collect();
    (vals, vecs)
}

#[derive(Clone, Debug)]
pub struct ModeDerivatives {
    pub lambda: f64,
    pub d1: f64,
    pub d2: f64,
    pub vector: DVector<f64>,
    pub vector_d1: DVector<f64>,
}

pub fn eig_derivatives(fam: &dyn MatrixFamily, t: f64) -> Result<Vec<ModeDerivatives>> {
    let a = fam.eval(t);
    let (vals, vecs) = sorted_eigen(&a);
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for w in vals.windows(2) {
        if w[1] - w[0] <= 1e-8 * scale {
            return Err(Error::Argument(format!(
                "eigenvalues {} and {} are degenerate at t = {t}",
                w[0], w[1]
            )));
        }
    }
    let a1 = fam.d1(t);
    let a2 = fam.d2(t);
    let n = vals.len();
    // c[j][k] = u_jᵀ A′ u_k
    let a1u: Vec<DVector<f64>> = vecs.iter().map(|u| &a1 * u).collect();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut d2 = vecs[k].dot(&(&a2 * &vecs[k]));
        let mut du = DVector::zeros(n);
        for j in 0..n {
            if j == k {
                continue;
            }
            let c = vecs[j].dot(&a1u[k]);
            let gap = vals[k] - vals[j];
            d2 += 2.0 * c * c / gap;
            du += &vecs[j] * (c / gap);
        }
        out.push(ModeDerivatives {
            lambda: vals[k],
            d1: vecs[k].dot(&a1u[k]),
            d2,
            vector: vecs[k].clone(),
            vector_d1: du,
        });
    }
    Ok(out)
}

/// Sorted eigenvalues of `fam` at `t`.
pub fn eigenvalues_at(fam: &dyn MatrixFamily, t: f64) -> Vec<f64> {
    sorted_eigen(&fam.eval(t)).0
}

/// Central finite-difference estimates of `λ′` and `λ″` for every mode.
pub fn finite_differences(fam: &dyn MatrixFamily, t: f64, step1: f64, step2: f64) -> (Vec<f64>, Vec<f64>) {
    let (p1, m1) = (eigenvalues_at(fam, t + step1), eigenvalues_at(fam, t - step1));
    let d1 = p1.iter().zip(&m1).map(|(a, b)| (a - b) / (2.0 * step1)).collect();
    let (p2, c, m2) = (eigenvalues_at(fam, t + step2), eigenvalues_at(fam, t), eigenvalues_at(fam, t - step2));
    let d2 = (0..c.len())
        .map(|k| (p2[k] - 2.0 * c[k] + m2[k]) / (step2 * step2))
        .collect();
    (d1, d2)
}

/// Local minimum of the relative gap between sorted eigenvalues `k` and `k+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NearApproach {
    pub t: f64,
    pub lower: usize,
    pub gap: f64,
    pub d2_lower: f64,
    pub d2_upper: f64,
}

impl NearApproach {
    /// The pair repels: the gap is convex at its minimum.
    pub fn repels(&self) -> bool {
        self.d2_upper > self.d2_lower
    }
}

fn pair_gap(fam: &dyn MatrixFamily, t: f64, k: usize) -> f64 {
    let v = eigenvalues_at(fam, t);
    v[k + 1] - v[k]
}

/// Scan `[lo, hi]` on `n_scan` points for interior gap minima of every
/// adjacent pair, polish each by golden-section search, and evaluate `λ″`.
pub fn near_approaches(fam: &dyn MatrixFamily, lo: f64, hi: f64, n_scan: usize) -> Result<Vec<NearApproach>> {
    let ts: Vec<f64> = (0..n_scan).map(|i| lo + (hi - lo) * i as f64 / (n_scan - 1) as f64).collect();
    let spectra: Vec<Vec<f64>> = ts.iter().map(|&t| eigenvalues_at(fam, t)).collect();
    let mut out = Vec::new();
    for k in 0..fam.dim().saturating_sub(1) {
        let g: Vec<f64> = spectra.iter().map(|s| s[k + 1] - s[k]).collect();
        for i in 1..n_scan - 1 {
            if !(g[i] < g[i - 1] && g[i] <= g[i + 1]) {
                continue;
            }
            let (mut a, mut b) = (ts[i - 1], ts[i + 1]);
            let r = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..60 {
                let (c, d) = (b - r * (b - a), a + r * (b - a));
                if pair_gap(fam, c, k) < pair_gap(fam, d, k) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let t = 0.5 * (a + b);
            let d = eig_derivatives(fam, t)?;
            out.push(NearApproach {
                t,
                lower: k,
                gap: (d[k + 1].lambda - d[k].lambda) / d[k].lambda.abs().max(1e-12),
                d2_lower: d[k].d2,
                d2_upper: d[k + 1].d2,
            });
        }
    }
    Ok(out)
}

/// Closed-form derivatives against finite differences on one family.
#[derive(Clone, Debug)]
pub struct FamilyReport {
    pub dim: usize,
    /// Parameter of the derivative comparison, away from close approaches.
    pub t: f64,
    /// Largest `|λ′ − FD|`, relative to the largest `|λ′|` of the family.
    pub d1_error: f64,
    /// Same for `λ″` against second differences.
    pub d2_error: f64,
    pub approaches: Vec<NearApproach>,
}

/// Check `count` random quadratic families of dimension 2..=`max_dim` on
/// [−1, 1]: first derivatives at step 1e-4, second at step 1e-3.
pub fn random_family_checks(count: usize, max_dim: usize, seed: u64) -> Result<Vec<FamilyReport>> {
    use rand::SeedableRng;
    if max_dim < 2 {
        return Err(Error::Argument("families need dimension at least 2".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let dim = rng.random_range(2..=max_dim);
        let fam = PolynomialFamily::random(dim, 2, &mut rng);
        let mut t = 0.0;
        for attempt in 0..200 {
            t = rng.random_range(-1.0..1.0);
            let v = eigenvalues_at(&fam, t);
            let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            if v.windows(2).all(|w| w[1] - w[0] > 0.05 * scale) {
                break;
            }
            if attempt == 199 {
                return Err(Error::Argument("no well-separated parameter found".into()));
            }
        }
        let d = eig_derivatives(&fam, t)?;
        let (fd1, fd2) = finite_differences(&fam, t, 1e-4, 1e-3);
        let s1 = d.iter().fold(0.0f64, |m, x| m.max(x.d1.abs()));
        let s2 = d.iter().fold(0.0f64, |m, x| m.max(x.d2.abs()));
        let e1 = d.iter().zip(&fd1).fold(0.0f64, |m, (x, f)| m.max((x.d1 - f).abs()));
        let e2 = d.iter().zip(&fd2).fold(0.0f64, |m, (x, f)| m.max((x.d2 - f).abs()));
        out.push(FamilyReport {
            dim,
            t,
            d1_error: e1 / s1,
            d2_error: e2 / s2,
            approaches: near_approaches(&fam, -1.0, 1.0, 401)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_family() {
        let fam = PolynomialFamily::new(vec![
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
        ])
        .unwrap();
        let d = eig_derivatives(&fam, 0.2).unwrap();
        assert!((d[0].d1 - 1.0).abs() < 1e-14 && (d[1].d1 + 1.0).abs() < 1e-14);
        assert!(d[0].d2.abs() < 1e-14 && d[1].d2.abs() < 1e-14);
        assert!(d[0].vector_d1.amax() < 1e-14);
    }

    struct Rotated;
    impl MatrixFamily for Rotated {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, t: f64) -> DMatrix<f64> {
            let (s, c) = t.sin_cos();
            let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            r.transpose() * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])) * r
        }
    }

    #[test]
    fn rotation_family_is_isospectral() {
        let d = eig_derivatives(&Rotated, 0.0).unwrap();
        assert!(d[0].d1.abs() < 1e-8 && d[1].d1.abs() < 1e-8);
        // Finite-difference A″ cancels the repulsion term exactly.
        assert!(d[0].d2.abs() < 1e-4 && d[1].d2.abs() < 1e-4);
        // The repulsion term alone pushes the lower eigenvalue down.
        let a1 = Rotated.d1(0.0);
        let c = d[1].vector.dot(&(&a1 * &d[0].vector));
        let rep0 = 2.0 * c * c / (d[0].lambda - d[1].lambda);
        assert!(rep0 < 0.0);
        assert!(-rep0 > 1.0);
    }

    #[test]
    fn one_sided_limits_differ() {
        let fam = OneSidedFamily {
            positive: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
            negative: DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 1.5]),
        };
        let (_, up) = sorted_eigen(&fam.eval(1e-3));
        let (_, down) = sorted_eigen(&fam.eval(-1e-3));
        assert!(up[0].dot(&down[0]).abs() < 0.9);
        assert!(fam.eval(0.0).amax() == 0.0);
    }

    #[test]
    fn degenerate_point_rejected() {
        let fam = PolynomialFamily::new(vec![DMatrix::identity(3, 3)]).unwrap();
        assert!(eig_derivatives(&fam, 0.0).is_err());
    }

    #[test]
    fn random_family_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fam = PolynomialFamily::random(6, 2, &mut rng);
        let a = fam.eval(0.3);
        assert!((&a - a.transpose()).amax() < 1e-13);
    }

    #[test]
    fn random_families_match_differences() {
        for r in random_family_checks(5, 8, 11).unwrap() {
            assert!(r.d1_error < 1e-6 && r.d2_error < 1e-4, "{r:?}");
            assert!(r.approaches.iter().all(|a| a.repels()), "{r:?}");
        }
    }
}
