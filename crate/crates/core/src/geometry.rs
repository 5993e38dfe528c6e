//! Homotopy maps, D4 fundamental domains and boundary-condition tables.
//!
//! Two shapes are supported. The circle-square maps `H` and `F` deform the
//! unit disc into a diamond; the carpet maps `G_j` open the level-`j+1` holes
//! of a Sierpinski-carpet approximant inside the side-2 square
//! `max(|x|, |y|) <= 1`.
//!
//! Carpet maps are evaluated internally with the raw formula (t = 1 collapses
//! the hole) but every public entry point that takes a [`HomotopyMap`] uses the
//! reversed convention: t = 0 is the hole-free domain `A_j`, t = 1 is `A_{j+1}`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAME_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    pub fn r(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Polar angle in (−π, π].
    pub fn theta(&self) -> f64 {
        let th = self.y.atan2(self.x);
        if th == -PI {
            PI
        } else {
            th
        }
    }

    pub fn dist(&self, other: &PlanePoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &PlanePoint, s: f64) -> PlanePoint {
        PlanePoint::new(
            self.x + s * (other.x - self.x),
            self.y + s * (other.y - self.y),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SymmetryFamily {
    OnePP,
    OnePM,
    OneMP,
    OneMM,
    Two,
}

impl SymmetryFamily {
    pub const ALL: [SymmetryFamily; 5] = [
        SymmetryFamily::OnePP,
        SymmetryFamily::OnePM,
        SymmetryFamily::OneMP,
        SymmetryFamily::OneMM,
        SymmetryFamily::Two,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SymmetryFamily::OnePP => "1++",
            SymmetryFamily::OnePM => "1+-",
            SymmetryFamily::OneMP => "1-+",
            SymmetryFamily::OneMM => "1--",
            SymmetryFamily::Two => "2",
        }
    }

    /// Whether the Neumann kernel (the constant function) belongs to the family.
    pub fn has_constant(&self) -> bool {
        matches!(self, SymmetryFamily::OnePP)
    }
}

impl fmt::Display for SymmetryFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SymmetryFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| if c == '−' { '-' } else { c })
            .collect();
        match norm.to_ascii_lowercase().as_str() {
            "1++" | "pp" | "onepp" => Ok(SymmetryFamily::OnePP),
            "1+-" | "pm" | "onepm" => Ok(SymmetryFamily::OnePM),
            "1-+" | "mp" | "onemp" => Ok(SymmetryFamily::OneMP),
            "1--" | "mm" | "onemm" => Ok(SymmetryFamily::OneMM),
            "2" | "two" => Ok(SymmetryFamily::Two),
            _ => Err(Error::Config(format!("unknown symmetry family '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Neumann,
    Dirichlet,
}

impl BoundaryTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryTag::Neumann => "N",
            BoundaryTag::Dirichlet => "D",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    CircleSquare,
    Carpet,
}

/// Boundary conditions on the two symmetry rays of a fundamental domain.
///
/// For the one-dimensional families the rays are θ = 0 and θ = π/4. For
/// family 2 they are θ = 0 and θ = π/2 (circle-square sector) or θ = π/4 and
/// θ = −π/4 (carpet right quarter), in that order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayConditions {
    pub first: BoundaryTag,
    pub second: BoundaryTag,
    pub first_angle: f64,
    pub second_angle: f64,
}

pub fn bc_for_family(family: SymmetryFamily, shape: Shape) -> RayConditions {
    use BoundaryTag::{Dirichlet as D, Neumann as N};
    let one = |first, second| RayConditions {
        first,
        second,
        first_angle: 0.0,
        second_angle: FRAC_PI_4,
    };
    match (family, shape) {
        (SymmetryFamily::OnePP, _) => one(N, N),
        (SymmetryFamily::OneMP, _) => one(N, D),
        (SymmetryFamily::OnePM, _) => one(D, N),
        (SymmetryFamily::OneMM, _) => one(D, D),
        (SymmetryFamily::Two, Shape::CircleSquare) => RayConditions {
            first: N,
            second: D,
            first_angle: 0.0,
            second_angle: FRAC_PI_2,
        },
        (SymmetryFamily::Two, Shape::Carpet) => RayConditions {
            first: N,
            second: D,
            first_angle: FRAC_PI_4,
            second_angle: -FRAC_PI_4,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HomotopyMap {
    CircleH,
    CircleF,
    /// Opens the level-(j+1) holes of the carpet approximant `A_j`.
    CarpetG(u32),
}

impl HomotopyMap {
    pub fn shape(&self) -> Shape {
        match self {
            HomotopyMap::CircleH | HomotopyMap::CircleF => Shape::CircleSquare,
            HomotopyMap::CarpetG(_) => Shape::Carpet,
        }
    }

    pub fn reversed_time(&self) -> bool {
        matches!(self, HomotopyMap::CarpetG(_))
    }

    /// Parameter at which the map is the identity on its reference domain.
    pub fn identity_parameter(&self) -> f64 {
        if self.reversed_time() {
            1.0
        } else {
            0.0
        }
    }

    /// Evaluate at public parameter `t` (reversed for carpet maps).
    pub fn apply(&self, t: f64, p: PlanePoint) -> Result<PlanePoint> {
        match *self {
            HomotopyMap::CircleH => eval_circle_h(t, p),
            HomotopyMap::CircleF => eval_circle_f(t, p),
            HomotopyMap::CarpetG(j) => {
                check_t(t)?;
                eval_carpet_gj(j, 1.0 - t, p)
            }
        }
    }

    /// Side length of the square that the `t = 1` (circle maps) or `t = 0`
    /// (carpet maps) endpoint is congruent to.
    pub fn square_side(&self) -> f64 {
        match self {
            HomotopyMap::CircleH => SQRT_2,
            HomotopyMap::CircleF | HomotopyMap::CarpetG(_) => 2.0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            HomotopyMap::CircleH => "circleH".into(),
            HomotopyMap::CircleF => "circleF".into(),
            HomotopyMap::CarpetG(j) => format!("carpetG{j}"),
        }
    }
}

impl fmt::Display for HomotopyMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for HomotopyMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let l = s.trim().to_ascii_lowercase();
        match l.as_str() {
            "circleh" | "h" => return Ok(HomotopyMap::CircleH),
            "circlef" | "f" => return Ok(HomotopyMap::CircleF),
            _ => {}
        }
        let rest = l
            .strip_prefix("carpetg")
            .or_else(|| l.strip_prefix("carpet"))
            .or_else(|| l.strip_prefix('g'));
        if let Some(level) = rest.and_then(|r| r.parse::<u32>().ok()) {
            return Ok(HomotopyMap::CarpetG(level));
        }
        Err(Error::Config(format!("unknown homotopy map '{s}'")))
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) || t.is_nan() {
        return Err(Error::Domain(format!("parameter t = {t} outside [0, 1]")));
    }
    Ok(())
}

/// Radial scale of the circle-square maps at angle `theta`.
fn circle_scale(t: f64, c: f64, theta: f64) -> f64 {
    let (s, co) = theta.sin_cos();
    (1.0 - t) + c * t / (co.abs() + s.abs())
}

/// Reduce an angle to the fundamental sector [0, π/4] of D4.
///
/// Returns the folded angle, the reflection flag and the quarter-turn count
/// needed by [`unfold_angle`].
pub fn fold_angle(theta: f64) -> (f64, bool, i32) {
    let mut q = (theta / FRAC_PI_2).floor() as i32;
    let mut a = theta - q as f64 * FRAC_PI_2;
    if a < 0.0 {
        a += FRAC_PI_2;
        q -= 1;
    }
    if a > FRAC_PI_2 {
        a -= FRAC_PI_2;
        q += 1;
    }
    if a > FRAC_PI_4 {
        (FRAC_PI_2 - a, true, q)
    } else {
        (a, false, q)
    }
}

pub fn unfold_angle(folded: f64, reflected: bool, quarter: i32) -> f64 {
    let a = if reflected { FRAC_PI_2 - folded } else { folded };
    a + quarter as f64 * FRAC_PI_2
}

fn eval_circle(t: f64, c: f64, p: PlanePoint) -> Result<PlanePoint> {
    check_t(t)?;
    let r = p.r();
    if r == 0.0 {
        return Ok(p);
    }
    let (folded, _, _) = fold_angle(p.theta());
    let scale = circle_scale(t, c, folded);
    // Scaling the Cartesian coordinates keeps rays exactly on their lines.
    Ok(PlanePoint::new(scale * p.x, scale * p.y))
}

pub fn eval_circle_h(t: f64, p: PlanePoint) -> Result<PlanePoint> {
    eval_circle(t, 1.0, p)
}

pub fn eval_circle_f(t: f64, p: PlanePoint) -> Result<PlanePoint> {
    eval_circle(t, SQRT_2, p)
}

/// Rotate `p` by `k` quarter turns counterclockwise.
fn rotate_quarter(p: PlanePoint, k: i32) -> PlanePoint {
    match k.rem_euclid(4) {
        0 => p,
        1 => PlanePoint::new(-p.y, p.x),
        2 => PlanePoint::new(-p.x, -p.y),
        _ => PlanePoint::new(p.y, -p.x),
    }
}

/// Quarter turns that bring `p` into the right quarter `x >= |y|`.
fn quarter_of(p: PlanePoint) -> i32 {
    if p.x >= p.y.abs() {
        0
    } else if p.y >= p.x.abs() {
        3
    } else if -p.x >= p.y.abs() {
        2
    } else {
        1
    }
}

/// `G_0` in its raw orientation: t = 1 collapses the inner edge of the
/// picture frame onto the origin.
pub fn eval_carpet_g0(t: f64, p: PlanePoint) -> Result<PlanePoint> {
    check_t(t)?;
    let m = p.x.abs().max(p.y.abs());
    if !(1.0 / 3.0 - FRAME_TOL..=1.0 + FRAME_TOL).contains(&m) {
        return Err(Error::Domain(format!(
            "point ({}, {}) outside the picture frame",
            p.x, p.y
        )));
    }
    let k = quarter_of(p);
    let q = rotate_quarter(p, k);
    let s = 1.5 * t * q.x - 1.5 * t + 1.0;
    Ok(rotate_quarter(PlanePoint::new(s * q.x, s * q.y), -k))
}

/// Center of the level-1 cell containing `p`, preferring outer cells on
/// shared edges.
pub fn cell_center(p: PlanePoint) -> Option<PlanePoint> {
    let pick = |v: f64| {
        if v >= 1.0 / 3.0 - 1e-12 {
            2.0 / 3.0
        } else if v <= -1.0 / 3.0 + 1e-12 {
            -2.0 / 3.0
        } else {
            0.0
        }
    };
    let c = PlanePoint::new(pick(p.x), pick(p.y));
    if c.x == 0.0 && c.y == 0.0 {
        None
    } else {
        Some(c)
    }
}

/// The eight cell centers `c_i` of the side-2 carpet.
pub fn cell_centers() -> [PlanePoint; 8] {
    let v = [-2.0 / 3.0, 0.0, 2.0 / 3.0];
    let mut out = [PlanePoint::default(); 8];
    let mut n = 0;
    for &cy in &v {
        for &cx in &v {
            if cx != 0.0 || cy != 0.0 {
                out[n] = PlanePoint::new(cx, cy);
                n += 1;
            }
        }
    }
    out
}

/// Apply `f_c ∘ inner ∘ f_c⁻¹` with `f_c(q) = q/3 + c`.
pub fn conjugate_by_cell(
    c: PlanePoint,
    p: PlanePoint,
    inner: impl Fn(PlanePoint) -> Result<PlanePoint>,
) -> Result<PlanePoint> {
    let q = PlanePoint::new(3.0 * (p.x - c.x), 3.0 * (p.y - c.y));
    let q = PlanePoint::new(q.x.clamp(-1.0, 1.0), q.y.clamp(-1.0, 1.0));
    let r = inner(q)?;
    Ok(PlanePoint::new(r.x / 3.0 + c.x, r.y / 3.0 + c.y))
}

/// `G_j` in its raw orientation, defined on `A_{j+1}` by recursion over the
/// eight cell maps.
pub fn eval_carpet_gj(j: u32, t: f64, p: PlanePoint) -> Result<PlanePoint> {
    check_t(t)?;
    if j == 0 {
        return eval_carpet_g0(t, p);
    }
    if p.x.abs().max(p.y.abs()) > 1.0 + FRAME_TOL {
        return Err(Error::Domain(format!(
            "point ({}, {}) outside the square",
            p.x, p.y
        )));
    }
    let c = cell_center(p).ok_or_else(|| {
        Error::Domain(format!("point ({}, {}) lies in the central hole", p.x, p.y))
    })?;
    conjugate_by_cell(c, p, |q| eval_carpet_gj(j - 1, t, q))
}

/// Centers of the level-`k` cells (`8^k` of them); level 0 is the origin.
pub fn level_cell_centers(k: u32) -> Vec<PlanePoint> {
    let mut centers = vec![PlanePoint::default()];
    let mut scale = 1.0;
    for _ in 0..k {
        let mut next = Vec::with_capacity(centers.len() * 8);
        for c in &centers {
            for ci in cell_centers() {
                next.push(PlanePoint::new(c.x + scale * ci.x, c.y + scale * ci.y));
            }
        }
        centers = next;
        scale /= 3.0;
    }
    centers
}

/// Axis-aligned square hole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquareHole {
    pub center: PlanePoint,
    pub half_side: f64,
}

/// Holes of the domain `G_j(t)(A_{j+1})` at public parameter `t`: full holes of
/// levels 1..=j and level-(j+1) holes scaled by `t`.
pub fn carpet_holes(level: u32, t: f64) -> Vec<SquareHole> {
    let mut holes = Vec::new();
    for k in 0..=level {
        let full = 3f64.powi(-(k as i32 + 1));
        let half = if k == level { t * full } else { full };
        if half <= 0.0 {
            continue;
        }
        for c in level_cell_centers(k) {
            holes.push(SquareHole {
                center: c,
                half_side: half,
            });
        }
    }
    holes
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArcRole {
    Ray,
    Outer,
    Hole,
}

/// Geometric carrier of a boundary arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Curve {
    Segment { a: PlanePoint, b: PlanePoint },
    /// `r(θ) = (1 − t) + c·t / (|cos θ| + |sin θ|)` for θ from `theta0` to `theta1`.
    RadialArc {
        c: f64,
        t: f64,
        theta0: f64,
        theta1: f64,
    },
}

impl Curve {
    pub fn point_at(&self, s: f64) -> PlanePoint {
        match *self {
            Curve::Segment { a, b } => a.lerp(&b, s),
            Curve::RadialArc {
                c,
                t,
                theta0,
                theta1,
            } => {
                let th = theta0 + s * (theta1 - theta0);
                PlanePoint::from_polar(circle_scale(t, c, th), th)
            }
        }
    }

    pub fn is_curved(&self) -> bool {
        matches!(self, Curve::RadialArc { .. })
    }

    pub fn length(&self) -> f64 {
        match self {
            Curve::Segment { a, b } => a.dist(b),
            Curve::RadialArc { .. } => {
                let pts = self.sample(512);
                pts.windows(2).map(|w| w[0].dist(&w[1])).sum()
            }
        }
    }

    /// `n` equal-parameter segments; `n + 1` points including both ends.
    pub fn sample(&self, n: usize) -> Vec<PlanePoint> {
        let n = n.max(1);
        (0..=n).map(|i| self.point_at(i as f64 / n as f64)).collect()
    }

    /// Project a point lying near a radial arc onto it along its ray.
    pub fn project(&self, p: PlanePoint) -> PlanePoint {
        match *self {
            Curve::Segment { .. } => p,
            Curve::RadialArc { c, t, .. } => {
                let th = p.theta();
                PlanePoint::from_polar(circle_scale(t, c, th), th)
            }
        }
    }

    /// Distance from `p` to the curve (exact for segments, along the ray for
    /// radial arcs).
    pub fn distance(&self, p: PlanePoint) -> f64 {
        match *self {
            Curve::Segment { a, b } => point_segment_distance(p, a, b),
            Curve::RadialArc { theta0, theta1, .. } => {
                let th = p.theta();
                let (lo, hi) = if theta0 <= theta1 {
                    (theta0, theta1)
                } else {
                    (theta1, theta0)
                };
                if th < lo - 1e-12 || th > hi + 1e-12 {
                    let e0 = self.point_at(0.0).dist(&p);
                    let e1 = self.point_at(1.0).dist(&p);
                    return e0.min(e1);
                }
                self.project(p).dist(&p)
            }
        }
    }
}

pub fn point_segment_distance(p: PlanePoint, a: PlanePoint, b: PlanePoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(&a);
    }
    let s = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(&a.lerp(&b, s))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryArc {
    pub tag: BoundaryTag,
    pub role: ArcRole,
    pub curve: Curve,
}

impl BoundaryArc {
    /// Polyline sampling with `segments` pieces.
    pub fn sample(&self, segments: usize) -> Vec<PlanePoint> {
        self.curve.sample(segments)
    }
}

/// Default polyline resolution for curved arcs when no mesh size is implied.
pub const DEFAULT_ARC_SEGMENTS: usize = 256;

#[derive(Clone, Debug)]
pub struct DomainSpec {
    pub family: SymmetryFamily,
    pub map: HomotopyMap,
    pub t: f64,
    pub boundary: Vec<BoundaryArc>,
    /// Side of the reference square (2 for carpet, diamond side for H/F).
    pub side: f64,
    pub warnings: Vec<String>,
    /// Diameters of the hole loops.
    pub hole_sizes: Vec<f64>,
}

impl DomainSpec {
    /// Smallest diameter among hole loops, if any.
    pub fn min_hole_diameter(&self) -> Option<f64> {
        self.hole_sizes.iter().copied().reduce(f64::min)
    }

    /// Closed polylines of all arcs, curved arcs with `segments` pieces.
    pub fn polylines(&self, segments: usize) -> Vec<(BoundaryArc, Vec<PlanePoint>)> {
        self.boundary
            .iter()
            .map(|arc| {
                let n = if arc.curve.is_curved() { segments } else { 1 };
                (*arc, arc.sample(n))
            })
            .collect()
    }

    /// Area enclosed by the boundary (shoelace over the sampled arcs).
    pub fn area(&self, segments: usize) -> f64 {
        // Arcs are oriented so that the domain lies to their left.
        let mut a = 0.0;
        for (_, pts) in self.polylines(segments) {
            for w in pts.windows(2) {
                a += w[0].x * w[1].y - w[1].x * w[0].y;
            }
        }
        0.5 * a
    }
}

pub fn fundamental_domain(
    map: HomotopyMap,
    family: SymmetryFamily,
    t: f64,
) -> Result<DomainSpec> {
    check_t(t)?;
    match map {
        HomotopyMap::CircleH => Ok(circle_domain(map, family, t, 1.0)),
        HomotopyMap::CircleF => Ok(circle_domain(map, family, t, SQRT_2)),
        HomotopyMap::CarpetG(level) => Ok(carpet_domain(map, level, family, t)),
    }
}

fn circle_domain(map: HomotopyMap, family: SymmetryFamily, t: f64, c: f64) -> DomainSpec {
    let bc = bc_for_family(family, Shape::CircleSquare);
    let (th0, th1) = (bc.first_angle, bc.second_angle);
    let origin = PlanePoint::default();
    let p0 = PlanePoint::from_polar(circle_scale(t, c, th0), th0);
    let p1 = PlanePoint::from_polar(circle_scale(t, c, th1), th1);
    let boundary = vec![
        BoundaryArc {
            tag: bc.first,
            role: ArcRole::Ray,
            curve: Curve::Segment { a: origin, b: p0 },
        },
        BoundaryArc {
            tag: BoundaryTag::Neumann,
            role: ArcRole::Outer,
            curve: Curve::RadialArc {
                c,
                t,
                theta0: th0,
                theta1: th1,
            },
        },
        BoundaryArc {
            tag: bc.second,
            role: ArcRole::Ray,
            curve: Curve::Segment { a: p1, b: origin },
        },
    ];
    DomainSpec {
        family,
        map,
        t,
        boundary,
        side: map.square_side(),
        warnings: Vec::new(),
        hole_sizes: Vec::new(),
    }
}

/// Convex wedge of the side-2 square with tagged edges, counterclockwise.
fn carpet_wedge(family: SymmetryFamily) -> Vec<(PlanePoint, PlanePoint, BoundaryTag, ArcRole)> {
    let bc = bc_for_family(family, Shape::Carpet);
    let o = PlanePoint::default();
    match family {
        SymmetryFamily::Two => {
            let lo = PlanePoint::new(1.0, -1.0);
            let hi = PlanePoint::new(1.0, 1.0);
            vec![
                (o, lo, bc.second, ArcRole::Ray),
                (lo, hi, BoundaryTag::Neumann, ArcRole::Outer),
                (hi, o, bc.first, ArcRole::Ray),
            ]
        }
        _ => {
            let a = PlanePoint::new(1.0, 0.0);
            let b = PlanePoint::new(1.0, 1.0);
            vec![
                (o, a, bc.first, ArcRole::Ray),
                (a, b, BoundaryTag::Neumann, ArcRole::Outer),
                (b, o, bc.second, ArcRole::Ray),
            ]
        }
    }
}

/// Parameter interval of segment `a→b` strictly inside an open square.
fn segment_in_square(a: PlanePoint, b: PlanePoint, h: &SquareHole) -> Option<(f64, f64)> {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for (p0, d, c) in [(a.x, b.x - a.x, h.center.x), (a.y, b.y - a.y, h.center.y)] {
        let (mn, mx) = (c - h.half_side, c + h.half_side);
        if d.abs() < 1e-15 {
            if p0 <= mn + 1e-13 || p0 >= mx - 1e-13 {
                return None;
            }
        } else {
            let (s0, s1) = ((mn - p0) / d, (mx - p0) / d);
            let (s0, s1) = if s0 < s1 { (s0, s1) } else { (s1, s0) };
            lo = lo.max(s0);
            hi = hi.min(s1);
        }
    }
    (hi - lo > 1e-13).then_some((lo, hi))
}

/// Clip segment `a→b` to a convex counterclockwise polygon.
fn clip_to_convex(a: PlanePoint, b: PlanePoint, poly: &[PlanePoint]) -> Option<(PlanePoint, PlanePoint)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let d = PlanePoint::new(b.x - a.x, b.y - a.y);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        // Inside when cross(q - p, x - p) >= 0.
        let ex = q.x - p.x;
        let ey = q.y - p.y;
        let f0 = ex * (a.y - p.y) - ey * (a.x - p.x);
        let fd = ex * d.y - ey * d.x;
        if fd.abs() < 1e-15 {
            if f0 < -1e-12 {
                return None;
            }
        } else {
            let s = -f0 / fd;
            if fd > 0.0 {
                lo = lo.max(s);
            } else {
                hi = hi.min(s);
            }
        }
    }
    (hi - lo > 1e-12).then(|| (a.lerp(&b, lo), a.lerp(&b, hi)))
}

fn carpet_domain(map: HomotopyMap, level: u32, family: SymmetryFamily, t: f64) -> DomainSpec {
    let wedge = carpet_wedge(family);
    let poly: Vec<PlanePoint> = wedge.iter().map(|e| e.0).collect();
    let holes: Vec<SquareHole> = carpet_holes(level, t)
        .into_iter()
        .filter(|h| {
            // Keep holes that meet the wedge in a set of positive area.
            let c = h.center;
            let s = h.half_side;
            let corners = [
                PlanePoint::new(c.x - s, c.y - s),
                PlanePoint::new(c.x + s, c.y - s),
                PlanePoint::new(c.x + s, c.y + s),
                PlanePoint::new(c.x - s, c.y + s),
            ];
            (0..4).any(|i| clip_to_convex(corners[i], corners[(i + 1) % 4], &poly).is_some())
                || point_in_convex(c, &poly)
        })
        .collect();

    let mut boundary = Vec::new();
    for &(a, b, tag, role) in &wedge {
        let mut cuts: Vec<(f64, f64)> = holes
            .iter()
            .filter_map(|h| segment_in_square(a, b, h))
            .collect();
        cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut s = 0.0;
        for (c0, c1) in cuts {
            if c0 > s + 1e-13 {
                boundary.push(BoundaryArc {
                    tag,
                    role,
                    curve: Curve::Segment {
                        a: a.lerp(&b, s),
                        b: a.lerp(&b, c0),
                    },
                });
            }
            s = s.max(c1);
        }
        if s < 1.0 - 1e-13 {
            boundary.push(BoundaryArc {
                tag,
                role,
                curve: Curve::Segment {
                    a: a.lerp(&b, s),
                    b,
                },
            });
        }
    }
    let mut hole_sizes = Vec::new();
    for h in &holes {
        let c = h.center;
        let s = h.half_side;
        // Clockwise so that the domain stays on the left.
        let corners = [
            PlanePoint::new(c.x - s, c.y - s),
            PlanePoint::new(c.x - s, c.y + s),
            PlanePoint::new(c.x + s, c.y + s),
            PlanePoint::new(c.x + s, c.y - s),
        ];
        for i in 0..4 {
            if let Some((p, q)) = clip_to_convex(corners[i], corners[(i + 1) % 4], &poly) {
                boundary.push(BoundaryArc {
                    tag: BoundaryTag::Neumann,
                    role: ArcRole::Hole,
                    curve: Curve::Segment { a: p, b: q },
                });
            }
        }
        hole_sizes.push(2.0 * s);
    }
    let mut warnings = Vec::new();
    if let Some(d) = hole_sizes.iter().copied().reduce(f64::min) {
        if d < 1.0 / 64.0 {
            warnings.push(format!(
                "hole diameter {d:.3e} is below the default mesh resolution"
            ));
        }
    }
    DomainSpec {
        family,
        map,
        t,
        boundary,
        side: 2.0,
        warnings,
        hole_sizes,
    }
}

fn point_in_convex(p: PlanePoint, poly: &[PlanePoint]) -> bool {
    (0..poly.len()).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) > 1e-12
    })
}
