//! Closed-form square and disc spectra per symmetry family.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::bessel::{bessel_j, jprime_zero};
use crate::error::Result;
use crate::geometry::{PlanePoint, SymmetryFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelShape {
    /// Square label `(a, b)` with `a >= b`: `cos`/`sin` products of
    /// `π a x / L` and `π b y / L`.
    Square { a: u32, b: u32 },
    /// Disc label: `J_m(j′_{m,k} r)` times `cos mθ` or `sin mθ`; `k = 0` is the
    /// constant mode.
    Circle { m: u32, k: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeLabel {
    pub shape: LabelShape,
    pub family: SymmetryFamily,
    /// `a² + b²` for squares (eigenvalue × L²/π²), `(j′_{m,k})²` for the unit disc.
    pub normalized_value: f64,
}

impl ModeLabel {
    pub fn is_constant(&self) -> bool {
        matches!(
            self.shape,
            LabelShape::Square { a: 0, b: 0 } | LabelShape::Circle { k: 0, .. }
        )
    }

    /// Label in `(a,b)` correspondence notation: squares as `(a,b)`, circles
    /// as `(k,0)` for `m = 0` and `(k−1,m)` otherwise.
    pub fn table_label(&self) -> String {
        match self.shape {
            LabelShape::Square { a, b } => format!("({a},{b})"),
            LabelShape::Circle { m: 0, k } => format!("({k},0)"),
            LabelShape::Circle { m, k } => format!("({},{m})", k - 1),
        }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            LabelShape::Square { a, b } => write!(f, "square({a},{b})"),
            LabelShape::Circle { m, k } => write!(f, "circle(m={m},k={k})"),
        }
    }
}

/// How the square sits relative to the symmetry rays.
///
/// `Axis` squares have sides parallel to the axes (carpet domains), so θ = 0 is
/// a midline. `Diamond` squares have their vertices on the axes (circle-square
/// endpoints), so θ = 0 is a diagonal and the 1+−/1−+ label sets swap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SquareOrientation {
    Axis,
    Diamond,
}

/// Parity of the two indices and the sign of the symmetrization.
fn square_rule(family: SymmetryFamily, orientation: SquareOrientation) -> (Parity, i8) {
    use SquareOrientation::*;
    use SymmetryFamily::*;
    match (family, orientation) {
        (OnePP, _) => (Parity::EvenEven, 1),
        (OneMM, _) => (Parity::OddOdd, -1),
        (OneMP, Axis) | (OnePM, Diamond) => (Parity::EvenEven, -1),
        (OnePM, Axis) | (OneMP, Diamond) => (Parity::OddOdd, 1),
        (Two, Axis) => (Parity::Mixed, 1),
        (Two, Diamond) => (Parity::Mixed, -1),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Parity {
    EvenEven,
    OddOdd,
    Mixed,
}

/// Square labels of a family for an axis-aligned square, ascending.
pub fn square_modes(family: SymmetryFamily, count: usize) -> Vec<ModeLabel> {
    square_modes_oriented(family, SquareOrientation::Axis, count)
}

pub fn square_modes_oriented(
    family: SymmetryFamily,
    orientation: SquareOrientation,
    count: usize,
) -> Vec<ModeLabel> {
    let (parity, sign) = square_rule(family, orientation);
    let mut limit = 8u32;
    loop {
        let mut labels = Vec::new();
        for a in 0..=limit {
            for b in 0..=a {
                let ok = match parity {
                    Parity::EvenEven => a % 2 == 0 && b % 2 == 0 && (sign > 0 || a > b),
                    Parity::OddOdd => a % 2 == 1 && b % 2 == 1 && (sign > 0 || a > b),
                    Parity::Mixed => (a + b) % 2 == 1,
                };
                if ok {
                    labels.push(ModeLabel {
                        shape: LabelShape::Square { a, b },
                        family,
                        normalized_value: (a * a + b * b) as f64,
                    });
                }
            }
        }
        labels.sort_by(|x, y| {
            x.normalized_value
                .total_cmp(&y.normalized_value)
                .then_with(|| square_key(x).cmp(&square_key(y)))
        });
        // Every label with value below limit² has been generated.
        let bound = (limit * limit) as f64;
        let complete = labels.iter().filter(|l| l.normalized_value < bound).count();
        if complete >= count {
            labels.truncate(count);
            return labels;
        }
        limit *= 2;
    }
}

fn square_key(l: &ModeLabel) -> (u32, u32) {
    match l.shape {
        LabelShape::Square { a, b } => (a, b),
        LabelShape::Circle { m, k } => (m, k),
    }
}

fn phi(n: u32, u: f64) -> f64 {
    if n % 2 == 0 {
        (PI * n as f64 * u).cos()
    } else {
        (PI * n as f64 * u).sin()
    }
}

/// Canonical square eigenfunction of `label` on the square of side `side`
/// centered at the origin, unnormalized.
pub fn eval_square_mode(
    label: &ModeLabel,
    orientation: SquareOrientation,
    side: f64,
    p: PlanePoint,
) -> f64 {
    let LabelShape::Square { a, b } = label.shape else {
        return f64::NAN;
    };
    let (u, v) = match orientation {
        SquareOrientation::Axis => (p.x, p.y),
        SquareOrientation::Diamond => ((p.x + p.y) / SQRT_2, (p.y - p.x) / SQRT_2),
    };
    let (u, v) = (u / side, v / side);
    let (_, sign) = square_rule(label.family, orientation);
    phi(a, u) * phi(b, v) + sign as f64 * phi(b, u) * phi(a, v)
}

/// Angular orders `m` admitted by a family on the disc sector.
pub fn disc_orders(family: SymmetryFamily) -> impl Iterator<Item = u32> {
    let (start, step) = match family {
        SymmetryFamily::OnePP => (0, 4),
        SymmetryFamily::OneMM => (4, 4),
        SymmetryFamily::OnePM | SymmetryFamily::OneMP => (2, 4),
        SymmetryFamily::Two => (1, 2),
    };
    (0..).map(move |i| start + step * i)
}

/// Whether a family's disc modes use `cos mθ` (else `sin mθ`).
pub fn disc_uses_cos(family: SymmetryFamily) -> bool {
    !matches!(family, SymmetryFamily::OnePM | SymmetryFamily::OneMM)
}

/// Disc labels of a family, ascending by `(j′_{m,k})²`; 1++ starts with the
/// constant mode.
pub fn disc_modes(family: SymmetryFamily, count: usize) -> Result<Vec<ModeLabel>> {
    let mut labels = Vec::new();
    if family.has_constant() {
        labels.push(ModeLabel {
            shape: LabelShape::Circle { m: 0, k: 0 },
            family,
            normalized_value: 0.0,
        });
    }
    if labels.len() >= count {
        labels.truncate(count);
        return Ok(labels);
    }
    // Take enough zeros per order that the first `count` values are certain:
    // j′_{m,1} > m, so orders above the current cutoff cannot intrude.
    let mut candidates = Vec::new();
    let mut cutoff = f64::INFINITY;
    for m in disc_orders(family) {
        if m as f64 > cutoff || m > super::bessel::MAX_ORDER {
            break;
        }
        for k in 1..=count as u32 {
            let z = jprime_zero(m, k)?;
            if z > cutoff {
                break;
            }
            candidates.push(ModeLabel {
                shape: LabelShape::Circle { m, k },
                family,
                normalized_value: z * z,
            });
        }
        if candidates.len() >= count {
            let mut zs: Vec<f64> = candidates.iter().map(|l| l.normalized_value.sqrt()).collect();
            zs.sort_by(f64::total_cmp);
            cutoff = zs[count - 1];
        }
    }
    candidates.sort_by(|x, y| x.normalized_value.total_cmp(&y.normalized_value));
    labels.extend(candidates);
    labels.truncate(count);
    Ok(labels)
}

/// Disc eigenfunction of `label` on the unit disc, unnormalized.
pub fn eval_disc_mode(label: &ModeLabel, p: PlanePoint) -> Result<f64> {
    let LabelShape::Circle { m, k } = label.shape else {
        return Ok(f64::NAN);
    };
    if k == 0 {
        return Ok(1.0);
    }
    let z = label.normalized_value.sqrt();
    let radial = bessel_j(m, z * p.r().min(1.0))?;
    let th = p.theta();
    let ang = if disc_uses_cos(label.family) {
        (m as f64 * th).cos()
    } else {
        (m as f64 * th).sin()
    };
    Ok(radial * ang)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bc_for_family, BoundaryTag, Shape};

    fn pairs(labels: &[ModeLabel]) -> Vec<(u32, u32)> {
        labels.iter().map(square_key).collect()
    }

    #[test]
    fn square_examples() {
        let l = square_modes(SymmetryFamily::OnePP, 6);
        assert_eq!(pairs(&l), vec![(0, 0), (2, 0), (2, 2), (4, 0), (4, 2), (4, 4)]);
        let l = square_modes(SymmetryFamily::OnePM, 2);
        assert_eq!(pairs(&l), vec![(1, 1), (3, 1)]);
        let l = square_modes(SymmetryFamily::Two, 3);
        assert_eq!(pairs(&l), vec![(1, 0), (2, 1), (3, 0)]);
        let vals: Vec<f64> = l.iter().map(|x| x.normalized_value).collect();
        assert_eq!(vals, vec![1.0, 5.0, 9.0]);
    }

    #[test]
    fn square_oracle_is_complete() {
        // Merging the families (family 2 twice) must reproduce every j² + k²,
        // j, k >= 0, with multiplicity.
        let n = 40;
        let mut merged: Vec<f64> = Vec::new();
        for fam in SymmetryFamily::ALL {
            let reps = if fam == SymmetryFamily::Two { 2 } else { 1 };
            for _ in 0..reps {
                merged.extend(square_modes(fam, n).iter().map(|l| l.normalized_value));
            }
        }
        merged.sort_by(f64::total_cmp);
        let mut all: Vec<f64> = Vec::new();
        for j in 0..40u32 {
            for k in 0..40u32 {
                all.push((j * j + k * k) as f64);
            }
        }
        all.sort_by(f64::total_cmp);
        assert_eq!(&merged[..n], &all[..n]);
    }

    #[test]
    fn disc_examples() {
        let l = disc_modes(SymmetryFamily::OnePP, 3).unwrap();
        assert!(l[0].is_constant());
        assert!((l[1].normalized_value - 3.83171_f64.powi(2)).abs() < 1e-3);
        assert_eq!(l[2].shape, LabelShape::Circle { m: 4, k: 1 });
        let l = disc_modes(SymmetryFamily::Two, 1).unwrap();
        assert!((l[0].normalized_value - 1.84118_f64.powi(2)).abs() < 1e-3);
        let l = disc_modes(SymmetryFamily::OneMM, 10).unwrap();
        let tl: Vec<String> = l.iter().map(|x| x.table_label()).collect();
        assert_eq!(
            tl,
            ["(0,4)", "(1,4)", "(0,8)", "(2,4)", "(0,12)", "(1,8)", "(3,4)", "(2,8)", "(0,16)", "(1,12)"]
        );
    }

    /// The canonical functions must satisfy the boundary conditions of their
    /// family on the symmetry rays of the fundamental domain.
    #[test]
    fn square_functions_respect_ray_conditions() {
        for orientation in [SquareOrientation::Axis, SquareOrientation::Diamond] {
            let shape = match orientation {
                SquareOrientation::Axis => Shape::Carpet,
                SquareOrientation::Diamond => Shape::CircleSquare,
            };
            for fam in SymmetryFamily::ALL {
                let bc = bc_for_family(fam, shape);
                for label in square_modes_oriented(fam, orientation, 12) {
                    for (angle, tag) in [(bc.first_angle, bc.first), (bc.second_angle, bc.second)] {
                        let (s, c) = angle.sin_cos();
                        for i in 1..8 {
                            // Mirror a test point across the ray.
                            let p = PlanePoint::new(0.1 * i as f64 * c - 0.05 * s, 0.1 * i as f64 * s + 0.05 * c);
                            let (c2, s2) = ((2.0 * angle).cos(), (2.0 * angle).sin());
                            let q = PlanePoint::new(c2 * p.x + s2 * p.y, s2 * p.x - c2 * p.y);
                            let up = eval_square_mode(&label, orientation, 2.0, p);
                            let uq = eval_square_mode(&label, orientation, 2.0, q);
                            let expect = if tag == BoundaryTag::Neumann { up } else { -up };
                            assert!(
                                (uq - expect).abs() < 1e-12,
                                "{fam} {orientation:?} {label} at angle {angle}"
                            );
                        }
                    }
                }
            }
        }
    }
}
