//! Homotopy sweeps: spectra along a `t` grid, overlap matching between
//! neighbouring parameters, refinement of close approaches, event
//! classification and endpoint correspondences.
//!
//! Trajectories follow eigenvalue order except across events classified as
//! [`EventKind::Crossing`], where the two curves exchange sorted positions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eigsolve::{gap, relative_gap, smallest_eigenpairs_with, SolverOptions, Spectrum, SpectrumMeta, DEFAULT_SEED, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::fem::{assemble, Pencil};
use crate::geometry::{fundamental_domain, HomotopyMap, PlanePoint, SymmetryFamily};
use crate::mesh::{push_forward, triangulate, Mesh, PointLocator};
use crate::oracle::{disc_modes, eval_disc_mode, eval_square_mode, square_modes_oriented, ModeLabel, SquareOrientation};
use crate::sparse::{dot, CsrMatrix};

/// Overlap below which a matched pair counts as ambiguous.
pub const AMBIGUOUS_OVERLAP: f64 = 0.8;
/// Relative gap below which a close approach becomes a candidate event.
pub const CANDIDATE_GAP: f64 = 0.01;
/// Default degeneracy threshold on the relative gap.
pub const DEFAULT_THRESHOLD: f64 = 8e-5;
/// Tracked modes per family: enough for the first ten table rows plus the
/// partners of degenerate endpoint pairs.
pub const DEFAULT_MODES: usize = 12;

#[derive(Clone, Debug)]
pub struct SweepOptions {
    /// Modes reported per trajectory set.
    pub n_modes: usize,
    /// Extra modes solved above the window to keep matching clean at its top.
    pub buffer: usize,
    pub tol: f64,
    pub seed: u64,
    pub threshold: f64,
    pub candidate_gap: f64,
    /// Smallest step produced by adaptive subdivision of the sweep grid.
    pub min_step: f64,
    /// Classify candidate events by local refinement.
    pub refine: bool,
    /// First interior parameter of carpet sweeps.
    pub carpet_delta: f64,
    /// Extra grid points next to the endpoints used to resolve degenerate
    /// endpoint eigenspaces.
    pub approach: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            n_modes: DEFAULT_MODES,
            buffer: 5,
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            threshold: DEFAULT_THRESHOLD,
            candidate_gap: CANDIDATE_GAP,
            min_step: 0.0125,
            refine: true,
            carpet_delta: 1e-3,
            approach: 0.01,
        }
    }
}

impl SweepOptions {
    pub fn n_total(&self) -> usize {
        self.n_modes + self.buffer
    }
}

/// Solved spectrum at one parameter value together with its discretization.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub mesh: Mesh,
    pub pencil: Pencil,
    pub spectrum: Spectrum,
    /// Identifier of the connectivity shared by all meshes pushed from the
    /// same reference.
    pub source: u64,
}

impl Snapshot {
    pub fn lambda(&self, i: usize) -> f64 {
        self.spectrum.eigenvalues[i]
    }

    pub fn gap(&self, j: usize) -> f64 {
        gap(self.spectrum.eigenvalues[j], self.spectrum.eigenvalues[j + 1])
    }

    /// Positions of the DOF vertices.
    pub fn dof_points(&self) -> Vec<PlanePoint> {
        self.pencil.vertex_of_dof.iter().map(|&v| self.mesh.vertices[v]).collect()
    }
}

/// Meshes and solver settings for one (map, family) homotopy.
pub struct Homotopy {
    pub map: HomotopyMap,
    pub family: SymmetryFamily,
    pub h: f64,
    pub options: SweepOptions,
    reference: Mesh,
    /// Direct mesh of the hole-free `t = 0` carpet endpoint.
    endpoint: Option<Mesh>,
}

impl Homotopy {
    pub fn new(map: HomotopyMap, family: SymmetryFamily, h: f64, options: SweepOptions) -> Result<Self> {
        let ctx = format!("{map} family {family}");
        let (reference, endpoint) = if map.reversed_time() {
            let r = fundamental_domain(map, family, map.identity_parameter())
                .and_then(|d| triangulate(&d, h))
                .map_err(|e| e.annotate(&ctx))?;
            let e = fundamental_domain(map, family, 0.0)
                .and_then(|d| triangulate(&d, h))
                .map_err(|e| e.annotate(&ctx))?;
            (r, Some(e))
        } else {
            let r = fundamental_domain(map, family, 0.0)
                .and_then(|d| triangulate(&d, h))
                .map_err(|e| e.annotate(&ctx))?;
            (r, None)
        };
        Ok(Self {
            map,
            family,
            h,
            options,
            reference,
            endpoint,
        })
    }

    pub fn reference(&self) -> &Mesh {
        &self.reference
    }

    /// Smallest parameter reachable by pushing the reference mesh.
    pub fn min_pushed_t(&self) -> f64 {
        if self.endpoint.is_some() {
            self.options.carpet_delta
        } else {
            0.0
        }
    }

    pub fn solve(&self, t: f64) -> Result<Snapshot> {
        let ctx = format!("{} family {} at t = {t}", self.map, self.family);
        let (mesh, source) = match &self.endpoint {
            Some(e) if t == 0.0 => (e.clone(), e.id()),
            Some(_) if t < self.options.carpet_delta * (1.0 - 1e-12) => {
                return Err(Error::Argument(format!(
                    "{ctx}: carpet sweeps are solved at t = 0 or t >= {}",
                    self.options.carpet_delta
                )))
            }
            _ => (
                push_forward(&self.reference, self.map, self.family, t).map_err(|e| e.annotate(&ctx))?,
                self.reference.id(),
            ),
        };
        let pencil = assemble(&mesh).map_err(|e| e.annotate(&ctx))?;
        let n = self.options.n_total().min(pencil.n_dof);
        let solver = SolverOptions {
            tol: self.options.tol,
            seed: self.options.seed,
        };
        let mut spectrum = smallest_eigenpairs_with(&pencil, n, &solver).map_err(|e| e.annotate(&ctx))?;
        spectrum.meta = SpectrumMeta {
            family: Some(self.family),
            map: Some(self.map),
            t,
            h: self.h,
            n_requested: n,
        };
        Ok(Snapshot {
            t,
            mesh,
            pencil,
            spectrum,
            source,
        })
    }
}

/// Express selected eigenvectors of `from` on the DOFs of `to`: unchanged when
/// both share connectivity, otherwise by P1 interpolation at the DOF vertices
/// of `to` followed by M-normalization.
pub fn transfer(from: &Snapshot, indices: &[usize], to: &Snapshot) -> Result<Vec<Vec<f64>>> {
    if from.source == to.source && from.pencil.n_dof == to.pencil.n_dof {
        return Ok(indices.iter().map(|&i| from.spectrum.vectors[i].clone()).collect());
    }
    let locator = PointLocator::new(&from.mesh);
    let points = to.dof_points();
    let mut located = Vec::with_capacity(points.len());
    for p in &points {
        located.push(locator.locate(*p)?);
    }
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let nodal = from.pencil.to_nodal(&from.spectrum.vectors[i]);
        let mut v: Vec<f64> = located
            .iter()
            .map(|&(t, w)| {
                let [a, b, c] = from.mesh.triangles[t];
                w[0] * nodal[a] + w[1] * nodal[b] + w[2] * nodal[c]
            })
            .collect();
        let nrm = dot(&v, &to.pencil.m.mul(&v)).sqrt();
        if nrm > 0.0 {
            v.iter_mut().for_each(|x| *x /= nrm);
        }
        out.push(v);
    }
    Ok(out)
}

/// Optimal assignment maximizing the total weight of a square matrix
/// (Hungarian method with potentials). Returns `row -> column`.
pub fn max_weight_assignment(w: &[Vec<f64>]) -> Vec<usize> {
    let n = w.len();
    if n == 0 {
        return Vec::new();
    }
    let big = w.iter().flatten().fold(0.0f64, |a, &x| a.max(x.abs()));
    let cost = |i: usize, j: usize| big - w[i][j];
    // 1-based arrays as in the classical formulation; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Mode `a` of the first spectrum corresponds to `permutation[a]` of the second.
    pub permutation: Vec<usize>,
    /// `|v_aᵀ M w_b|`.
    pub overlaps: Vec<Vec<f64>>,
    /// Overlap of each matched pair.
    pub quality: Vec<f64>,
    pub ambiguous: Vec<bool>,
}

impl Matching {
    pub fn is_identity(&self, upto: usize) -> bool {
        self.permutation.iter().take(upto).enumerate().all(|(i, &p)| i == p)
    }

    pub fn any_ambiguous(&self, upto: usize) -> bool {
        self.ambiguous.iter().take(upto).any(|&a| a)
    }
}

pub fn overlap_matrix(a: &[Vec<f64>], b: &[Vec<f64>], mass: &CsrMatrix) -> Result<Vec<Vec<f64>>> {
    if a.iter().chain(b).any(|v| v.len() != mass.n) {
        return Err(Error::Tracking(
            "vectors do not share the mass matrix's DOF set; supply a cross-mesh transfer".into(),
        ));
    }
    let mb: Vec<Vec<f64>> = b.iter().map(|v| mass.mul(v)).collect();
    Ok(a.iter()
        .map(|va| mb.iter().map(|m| dot(va, m).abs()).collect())
        .collect())
}

/// Match the eigenvectors of `a` to those of `b` by optimal assignment on
/// their overlaps in the `mass` inner product.
pub fn match_modes(a: &Spectrum, b: &Spectrum, mass: &CsrMatrix) -> Result<Matching> {
    match_vectors(&a.vectors, &b.vectors, mass)
}

pub fn match_vectors(a: &[Vec<f64>], b: &[Vec<f64>], mass: &CsrMatrix) -> Result<Matching> {
    if a.len() != b.len() {
        return Err(Error::Tracking(format!(
            "cannot match {} modes against {}",
            a.len(),
            b.len()
        )));
    }
    let overlaps = overlap_matrix(a, b, mass)?;
    let permutation = max_weight_assignment(&overlaps);
    let quality: Vec<f64> = permutation.iter().enumerate().map(|(i, &j)| overlaps[i][j]).collect();
    let ambiguous = quality.iter().map(|&q| q < AMBIGUOUS_OVERLAP).collect();
    Ok(Matching {
        permutation,
        overlaps,
        quality,
        ambiguous,
    })
}

/// Adjacent transpositions `(j, j+1)` that sort `perm`, in application order.
pub fn adjacent_transpositions(perm: &[usize]) -> Vec<usize> {
    let mut p = perm.to_vec();
    let mut out = Vec::new();
    let n = p.len();
    for pass in 0..n {
        let mut swapped = false;
        for j in 0..n.saturating_sub(1 + pass) {
            if p[j] > p[j + 1] {
                p.swap(j, j + 1);
                out.push(j);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Collision,
    Crossing,
    NonCrossing,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Collision => "Collision",
            EventKind::Crossing => "Crossing",
            EventKind::NonCrossing => "NonCrossing",
        }
    }

    pub fn classify(min_e: f64, swap: bool, threshold: f64) -> EventKind {
        if min_e > threshold {
            EventKind::Collision
        } else if swap {
            EventKind::Crossing
        } else {
            EventKind::NonCrossing
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Collision" => Ok(EventKind::Collision),
            "Crossing" => Ok(EventKind::Crossing),
            "NonCrossing" => Ok(EventKind::NonCrossing),
            _ => Err(Error::Format(format!("unknown event kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Sorted indices `(j, j+1)` of the approaching pair.
    pub pair: (usize, usize),
    pub t_star: f64,
    pub min_e: f64,
    pub kind: EventKind,
    pub swap_detected: bool,
    /// False when the overlaps never became unambiguous.
    pub swap_resolved: bool,
    pub refinement_depth: usize,
    /// Threshold the kind was decided with.
    pub threshold: f64,
    pub window: (f64, f64),
}

impl Event {
    pub fn is_consistent(&self) -> bool {
        self.kind == EventKind::classify(self.min_e, self.swap_detected, self.threshold)
    }
}

/// Human mode number: 1-based among non-constant modes.
pub fn mode_number(family: SymmetryFamily, index: usize) -> usize {
    if family.has_constant() {
        index
    } else {
        index + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModePoint {
    pub t: f64,
    pub lambda: f64,
    /// Sorted index at this parameter.
    pub index: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMatch {
    pub t_from: f64,
    pub t_to: f64,
    pub matching: Matching,
}

#[derive(Clone, Debug)]
pub struct TrajectorySet {
    pub family: SymmetryFamily,
    pub map: HomotopyMap,
    pub h: f64,
    pub options: SweepOptions,
    pub t_grid: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Per trajectory, one point per grid parameter.
    pub modes: Vec<Vec<ModePoint>>,
    pub matching: Vec<StepMatch>,
    pub events: Vec<Event>,
    pub notes: Vec<String>,
}

impl TrajectorySet {
    /// Sorted index of trajectory `k` at grid position `i`.
    pub fn index_at(&self, k: usize, i: usize) -> usize {
        self.modes[k][i].index
    }

    /// Trajectory holding sorted index `j` at grid position `i`.
    pub fn trajectory_at(&self, j: usize, i: usize) -> Option<usize> {
        self.modes.iter().position(|m| m[i].index == j)
    }

    /// Largest `|λ(t_{i+1}) − λ(t_i)| / (1 + λ(t_i))` over trajectories and steps.
    pub fn max_relative_jump(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in &self.modes {
            for w in m.windows(2) {
                worst = worst.max((w[1].lambda - w[0].lambda).abs() / (1.0 + w[0].lambda.abs()));
            }
        }
        worst
    }

    pub fn grid_position(&self, t: f64) -> Option<usize> {
        self.t_grid.iter().position(|&s| (s - t).abs() < 1e-12)
    }
}

/// Default sweep grid `{0, 0.1, …, 1}`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Argument("a sweep needs at least two parameters".into()));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Argument("sweep grid must be strictly ascending".into()));
        }
    }
    if grid[0] < 0.0 || grid[grid.len() - 1] > 1.0 || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Argument("sweep grid must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Sweep with default options apart from the mode count.
pub fn sweep(
    map: HomotopyMap,
    family: SymmetryFamily,
    t_grid: &[f64],
    n_modes: usize,
    h: f64,
) -> Result<TrajectorySet> {
    let options = SweepOptions {
        n_modes,
        ..Default::default()
    };
    sweep_with(&Homotopy::new(map, family, h, options)?, t_grid)
}

pub fn sweep_with(hom: &Homotopy, t_grid: &[f64]) -> Result<TrajectorySet> {
    validate_grid(t_grid)?;
    let opts = &hom.options;
    let mut grid: Vec<f64> = t_grid.to_vec();
    let lo = hom.min_pushed_t();
    if lo > 0.0 {
        // Carpet: keep t = 0 as the direct endpoint, start the pushed part at δ.
        grid.retain(|&t| t == 0.0 || t >= lo);
        if grid[0] == 0.0 && grid.get(1).is_none_or(|&t| t > lo) {
            grid.insert(1, lo);
        }
    }
    // Approach points next to the endpoints.
    let last = *grid.last().unwrap();
    if last == 1.0 && opts.approach > 0.0 {
        let a = 1.0 - opts.approach;
        if grid.iter().all(|&t| (t - a).abs() > 1e-12) && a > grid[0] {
            grid.push(a);
        }
    }
    if grid[0] == 0.0 && lo == 0.0 && opts.approach > 0.0 {
        let a = opts.approach;
        if grid.iter().all(|&t| (t - a).abs() > 1e-12) && a < last {
            grid.push(a);
        }
    }
    grid.sort_by(f64::total_cmp);

    let mut snaps: BTreeMap<u64, Snapshot> = BTreeMap::new();
    let key = |t: f64| (t * 1e12).round() as u64;
    for &t in &grid {
        snaps.insert(key(t), hom.solve(t)?);
    }
    let n_total = snaps.values().map(|s| s.spectrum.len()).min().unwrap_or(0);
    let watch = (opts.n_modes + 1).min(n_total);

    // Adaptive subdivision until every step's matching is clean on the
    // watched window.
    let mut matches: BTreeMap<u64, Matching> = BTreeMap::new();
    loop {
        let ts: Vec<f64> = snaps.values().map(|s| s.t).collect();
        let mut inserted = false;
        for w in ts.windows(2) {
            if matches.contains_key(&key(w[0])) {
                continue;
            }
            let (a, b) = (&snaps[&key(w[0])], &snaps[&key(w[1])]);
            let m = match_steps(a, b, n_total)?;
            let clean = !m.any_ambiguous(watch) && {
                let moves = adjacent_transpositions(&m.permutation[..n_total]);
                let watched: Vec<_> = moves.iter().filter(|&&j| j < watch).collect();
                watched.len() <= 1
            };
            let step = w[1] - w[0];
            let pushed_left = !(w[0] == 0.0 && lo > 0.0);
            if !clean && step / 2.0 >= opts.min_step * (1.0 - 1e-9) && pushed_left {
                let mid = (0.5 * (w[0] + w[1]) * 1e12).round() / 1e12;
                snaps.insert(key(mid), hom.solve(mid)?);
                inserted = true;
                // Stale matchings of the split interval are recomputed.
                matches.remove(&key(w[0]));
                break;
            }
            matches.insert(key(w[0]), m);
        }
        if !inserted {
            break;
        }
    }

    let snapshots: Vec<Snapshot> = snaps.into_values().collect();
    let t_all: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let step_matches: Vec<StepMatch> = t_all
        .windows(2)
        .map(|w| StepMatch {
            t_from: w[0],
            t_to: w[1],
            matching: matches[&key(w[0])].clone(),
        })
        .collect();

    let mut set = TrajectorySet {
        family: hom.family,
        map: hom.map,
        h: hom.h,
        options: opts.clone(),
        t_grid: t_all,
        snapshots,
        modes: Vec::new(),
        matching: step_matches,
        events: Vec::new(),
        notes: Vec::new(),
    };
    if opts.refine {
        detect_events(hom, &mut set, n_total, watch)?;
    }
    thread(&mut set, n_total);
    Ok(set)
}

fn match_steps(a: &Snapshot, b: &Snapshot, n: usize) -> Result<Matching> {
    let idx: Vec<usize> = (0..n).collect();
    let va = transfer(a, &idx, b)?;
    let vb: Vec<Vec<f64>> = b.spectrum.vectors[..n].to_vec();
    match_vectors(&va, &vb, &b.pencil.m)
}

struct Candidate {
    pair: usize,
    window: (f64, f64),
}

fn detect_events(hom: &Homotopy, set: &mut TrajectorySet, n_total: usize, watch: usize) -> Result<()> {
    let opts = &hom.options;
    let lo_valid = hom.min_pushed_t();
    let n = set.t_grid.len();
    let mut candidates: Vec<Candidate> = Vec::new();
    // Swaps seen by the overlap matching.
    for (i, sm) in set.matching.iter().enumerate() {
        if set.t_grid[i] < lo_valid {
            continue;
        }
        for j in adjacent_transpositions(&sm.matching.permutation[..n_total]) {
            if j + 1 < watch {
                candidates.push(Candidate {
                    pair: j,
                    window: (set.t_grid[i], set.t_grid[i + 1]),
                });
            }
        }
    }
    // Interior gap minima without a visible swap.
    for j in 0..watch.saturating_sub(1) {
        for i in 1..n.saturating_sub(1) {
            if set.t_grid[i - 1] < lo_valid {
                continue;
            }
            let (e0, e1, e2) = (
                set.snapshots[i - 1].gap(j),
                set.snapshots[i].gap(j),
                set.snapshots[i + 1].gap(j),
            );
            if e1 < opts.candidate_gap && e1 <= e0 && e1 <= e2 {
                let window = (set.t_grid[i - 1], set.t_grid[i + 1]);
                let covered = candidates
                    .iter()
                    .any(|c| c.pair == j && c.window.0 < window.1 && window.0 < c.window.1);
                if !covered {
                    candidates.push(Candidate { pair: j, window });
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.window.0.total_cmp(&b.window.0).then(a.pair.cmp(&b.pair)));
    for c in candidates {
        let known: Vec<&Snapshot> = set
            .snapshots
            .iter()
            .filter(|s| s.t >= c.window.0 - 1e-12 && s.t <= c.window.1 + 1e-12)
            .collect();
        match refine_with(hom, c.pair, c.window, &known) {
            Ok(e) => set.events.push(e),
            Err(e) => set.notes.push(format!(
                "candidate pair ({}, {}) in [{}, {}] not classified: {e}",
                mode_number(set.family, c.pair),
                mode_number(set.family, c.pair + 1),
                c.window.0,
                c.window.1
            )),
        }
    }
    Ok(())
}

/// Assign sorted indices to trajectories, exchanging the pair of every
/// Crossing at its parameter.
fn thread(set: &mut TrajectorySet, n_total: usize) {
    let n = set.t_grid.len();
    let mut crossings: Vec<&Event> = set.events.iter().filter(|e| e.kind == EventKind::Crossing).collect();
    crossings.sort_by(|a, b| a.t_star.total_cmp(&b.t_star));
    // holder[j] = trajectory currently at sorted index j.
    let mut holder: Vec<usize> = (0..n_total).collect();
    let mut modes: Vec<Vec<ModePoint>> = vec![Vec::with_capacity(n); n_total];
    let mut next = 0;
    for i in 0..n {
        let t = set.t_grid[i];
        while next < crossings.len() && crossings[next].t_star < t {
            let j = crossings[next].pair.0;
            if j + 1 < n_total {
                holder.swap(j, j + 1);
            }
            next += 1;
        }
        let s = &set.snapshots[i];
        for (j, &k) in holder.iter().enumerate() {
            modes[k].push(ModePoint {
                t,
                lambda: s.spectrum.eigenvalues[j],
                index: j,
                residual: s.spectrum.residuals[j],
            });
        }
    }
    modes.truncate(set.options.n_modes.min(n_total));
    set.modes = modes;
}

/// Refine a candidate event of sorted pair `(pair.0, pair.0 + 1)` inside
/// `window` with a fresh homotopy at mesh size `h`.
pub fn refine_event(
    map: HomotopyMap,
    family: SymmetryFamily,
    pair: (usize, usize),
    window: (f64, f64),
    h: f64,
) -> Result<Event> {
    if pair.1 != pair.0 + 1 {
        return Err(Error::Argument(format!("pair {pair:?} is not adjacent")));
    }
    let options = SweepOptions {
        n_modes: pair.1 + 1,
        ..Default::default()
    };
    let hom = Homotopy::new(map, family, h, options)?;
    refine_with(&hom, pair.0, window, &[])
}

struct Probe {
    t: f64,
    d2: f64,
    e: f64,
}

/// Vertex of the parabola through three points, with its curvature and value.
fn parabola(p: [(f64, f64); 3]) -> Option<(f64, f64, f64)> {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a > 0.0) || !a.is_finite() {
        return None;
    }
    let b = d01 - a * (x0 + x1);
    let xv = -b / (2.0 * a);
    let yv = y0 + d01 * (xv - x0) + a * (xv - x0) * (xv - x1);
    Some((xv, a, yv))
}

pub fn refine_with(hom: &Homotopy, j: usize, window: (f64, f64), known: &[&Snapshot]) -> Result<Event> {
    let opts = &hom.options;
    let (lo, hi) = (window.0.max(hom.min_pushed_t()), window.1);
    if !(hi > lo) {
        return Err(Error::Argument(format!("empty refinement window ({lo}, {hi})")));
    }
    let key = |t: f64| (t * 1e13).round() as i64;
    let mut cache: BTreeMap<i64, Snapshot> = BTreeMap::new();
    for s in known {
        if s.t >= lo - 1e-12 && s.t <= hi + 1e-12 && s.spectrum.len() > j + 1 {
            cache.insert(key(s.t), (*s).clone());
        }
    }
    let ensure = |t: f64, cache: &mut BTreeMap<i64, Snapshot>| -> Result<()> {
        let t = t.clamp(lo, hi);
        if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(key(t)) {
            let s = hom.solve(t)?;
            if s.spectrum.len() <= j + 1 {
                return Err(Error::Argument(format!("pair index {j} beyond the solved window")));
            }
            e.insert(s);
        }
        Ok(())
    };
    ensure(lo, &mut cache)?;
    ensure(hi, &mut cache)?;
    ensure(0.5 * (lo + hi), &mut cache)?;
    let probes = |cache: &BTreeMap<i64, Snapshot>| -> Vec<Probe> {
        cache
            .values()
            .map(|s| {
                let d = s.lambda(j + 1) - s.lambda(j);
                Probe {
                    t: s.t,
                    d2: d * d,
                    e: s.gap(j),
                }
            })
            .collect()
    };
    let fit = |ps: &[Probe]| -> (usize, Option<(f64, f64, f64)>) {
        let best = (0..ps.len()).min_by(|&a, &b| ps[a].d2.total_cmp(&ps[b].d2)).unwrap();
        let (i0, i1, i2) = if best == 0 {
            (0, 1, 2)
        } else if best == ps.len() - 1 {
            (best - 2, best - 1, best)
        } else {
            (best - 1, best, best + 1)
        };
        let pts = [(ps[i0].t, ps[i0].d2), (ps[i1].t, ps[i1].d2), (ps[i2].t, ps[i2].d2)];
        (best, parabola(pts))
    };

    let mut step = hi - lo;
    let mut depth = 0;
    loop {
        let ps = probes(&cache);
        let (best, par) = fit(&ps);
        let t_fit = match par {
            Some((tv, _, _)) if tv > lo && tv < hi => tv,
            _ => ps[best].t,
        };
        // Early exit for well-separated collisions.
        if depth >= 1 {
            if let Some((_, _, yv)) = par {
                let lam = ps[best].e.recip() * (ps[best].d2.sqrt());
                let e_fit = yv.max(0.0).sqrt() / lam.max(1e-300);
                if ps[best].e > 20.0 * opts.threshold && e_fit > 10.0 * opts.threshold {
                    break;
                }
            }
        }
        if depth == 3 || step < 1e-4 {
            break;
        }
        step /= 10.0;
        depth += 1;
        ensure(t_fit, &mut cache)?;
        ensure(t_fit - step, &mut cache)?;
        ensure(t_fit + step, &mut cache)?;
    }
    let ps = probes(&cache);
    let (best, par) = fit(&ps);
    let best_t = ps[best].t;
    let min_e = ps.iter().map(|p| p.e).fold(f64::INFINITY, f64::min);
    let on_edge = (best_t - lo).abs() < 1e-12 || (best_t - hi).abs() < 1e-12;
    if on_edge && ps.len() > 2 {
        let inner = ps
            .iter()
            .filter(|p| p.t > lo + 1e-12 && p.t < hi - 1e-12)
            .map(|p| p.e)
            .fold(f64::INFINITY, f64::min);
        if inner > ps[best].e {
            return Err(Error::Tracking(format!(
                "window ({lo}, {hi}) does not bracket a gap minimum of pair ({j}, {})",
                j + 1
            )));
        }
    }

    // Mixing width of the approach from the fitted gap profile.
    let width = match par {
        Some((_, a, yv)) => (yv.max(0.0) / a).sqrt(),
        None => 0.0,
    };
    let mut delta = step.max(4.0 * width).max(1e-5);
    let mut swap = None;
    for _ in 0..12 {
        let (a, b) = ((best_t - delta).max(lo), (best_t + delta).min(hi));
        if b - a <= 0.0 {
            break;
        }
        ensure(a, &mut cache)?;
        ensure(b, &mut cache)?;
        let (sa, sb) = (&cache[&key(a.clamp(lo, hi))], &cache[&key(b.clamp(lo, hi))]);
        let va = transfer(sa, &[j, j + 1], sb)?;
        let vb = vec![sb.spectrum.vectors[j].clone(), sb.spectrum.vectors[j + 1].clone()];
        let o = overlap_matrix(&va, &vb, &sb.pencil.m)?;
        let (stay, cross) = (o[0][0].powi(2) + o[1][1].powi(2), o[0][1].powi(2) + o[1][0].powi(2));
        if (stay - cross).abs() >= 0.6 * (stay + cross) {
            swap = Some(cross > stay);
            break;
        }
        if a <= lo && b >= hi {
            break;
        }
        delta *= 2.0;
    }
    let swap_detected = swap.unwrap_or(false);
    Ok(Event {
        pair: (j, j + 1),
        t_star: best_t,
        min_e,
        kind: EventKind::classify(min_e, swap_detected, opts.threshold),
        swap_detected,
        swap_resolved: swap.is_some(),
        refinement_depth: depth,
        threshold: opts.threshold,
        window: (lo, hi),
    })
}

/// Oracle used to name the eigenfunctions at one end of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Labeler {
    /// Unit disc.
    Disc,
    Square { orientation: SquareOrientation, side: f64 },
    /// No closed form: indices only.
    IndexOnly,
}

impl Labeler {
    /// Labelers for the `t = 0` and `t = 1` ends of a map.
    pub fn for_map(map: HomotopyMap) -> (Labeler, Labeler) {
        match map {
            HomotopyMap::CircleH | HomotopyMap::CircleF => (
                Labeler::Disc,
                Labeler::Square {
                    orientation: SquareOrientation::Diamond,
                    side: map.square_side(),
                },
            ),
            HomotopyMap::CarpetG(0) => (
                Labeler::Square {
                    orientation: SquareOrientation::Axis,
                    side: 2.0,
                },
                Labeler::IndexOnly,
            ),
            HomotopyMap::CarpetG(_) => (Labeler::IndexOnly, Labeler::IndexOnly),
        }
    }

    pub fn normalize(&self, lambda: f64) -> f64 {
        match self {
            Labeler::Square { side, .. } => lambda * side * side / (std::f64::consts::PI.powi(2)),
            _ => lambda,
        }
    }

    fn oracle(&self, family: SymmetryFamily, count: usize) -> Result<Vec<ModeLabel>> {
        match *self {
            Labeler::Disc => disc_modes(family, count),
            Labeler::Square { orientation, .. } => Ok(square_modes_oriented(family, orientation, count)),
            Labeler::IndexOnly => Ok(Vec::new()),
        }
    }

    fn eval(&self, label: &ModeLabel, p: PlanePoint) -> Result<f64> {
        match *self {
            Labeler::Disc => eval_disc_mode(label, p),
            Labeler::Square { orientation, side } => Ok(eval_square_mode(label, orientation, side, p)),
            Labeler::IndexOnly => Ok(f64::NAN),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EndpointLabel {
    pub index: usize,
    pub lambda_normalized: f64,
    pub label: Option<ModeLabel>,
    /// Endpoint eigenspace of dimension > 1 in the oracle.
    pub degenerate: bool,
    /// For degenerate endpoints: overlap with the best single canonical function.
    pub canonical_overlap: Option<f64>,
    /// Eigenvalue not within 2% of the assigned oracle value.
    pub unmatched: bool,
}

impl EndpointLabel {
    pub fn is_canonical(&self) -> bool {
        self.canonical_overlap.is_none_or(|o| o >= 0.99)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceRow {
    pub trajectory: usize,
    pub start: EndpointLabel,
    pub end: EndpointLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    pub family: SymmetryFamily,
    pub map: HomotopyMap,
    pub rows: Vec<CorrespondenceRow>,
}

/// Pair the endpoint labels of every trajectory.
pub fn build_correspondence(
    set: &TrajectorySet,
    labeler_start: Labeler,
    labeler_end: Labeler,
) -> Result<Correspondence> {
    let n = set.modes.len();
    let last = set.t_grid.len() - 1;
    let start_idx: Vec<usize> = (0..n).map(|k| set.index_at(k, 0)).collect();
    let end_idx: Vec<usize> = (0..n).map(|k| set.index_at(k, last)).collect();
    // Approach snapshots: nearest pushed neighbours of each endpoint.
    let start = label_endpoint(set, labeler_start, 0, 1, &start_idx)?;
    let end = label_endpoint(set, labeler_end, last, last - 1, &end_idx)?;
    let rows = (0..n)
        .map(|k| CorrespondenceRow {
            trajectory: k,
            start: start[k].clone(),
            end: end[k].clone(),
        })
        .collect();
    Ok(Correspondence {
        family: set.family,
        map: set.map,
        rows,
    })
}

fn label_endpoint(
    set: &TrajectorySet,
    labeler: Labeler,
    at: usize,
    approach: usize,
    idx: &[usize],
) -> Result<Vec<EndpointLabel>> {
    let snap = &set.snapshots[at];
    let n_solved = snap.spectrum.len();
    let oracle = labeler.oracle(set.family, n_solved + 4)?;
    let mut out: Vec<EndpointLabel> = idx
        .iter()
        .map(|&i| {
            let lam = labeler.normalize(snap.lambda(i));
            let label = oracle.get(i).copied();
            let unmatched = match label {
                Some(l) if l.normalized_value == 0.0 => lam.abs() > 1e-6,
                Some(l) => (lam / l.normalized_value - 1.0).abs() > 0.02,
                None => false,
            };
            EndpointLabel {
                index: i,
                lambda_normalized: lam,
                label,
                degenerate: false,
                canonical_overlap: None,
                unmatched,
            }
        })
        .collect();
    if oracle.is_empty() {
        return Ok(out);
    }
    // Degenerate oracle clusters fully inside the solved window.
    let mut i = 0;
    while i < n_solved {
        let mut e = i + 1;
        while e < oracle.len() && (oracle[e].normalized_value - oracle[i].normalized_value).abs() < 1e-9 {
            e += 1;
        }
        if e - i > 1 && e <= n_solved {
            let cluster: Vec<usize> = (i..e).collect();
            let members: Vec<usize> = (0..idx.len()).filter(|&k| cluster.contains(&idx[k])).collect();
            if !members.is_empty() {
                resolve_cluster(set, labeler, at, approach, &cluster, &oracle[i..e], &members, &mut out)?;
            }
        }
        i = e;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn resolve_cluster(
    set: &TrajectorySet,
    labeler: Labeler,
    at: usize,
    approach: usize,
    cluster: &[usize],
    labels: &[ModeLabel],
    members: &[usize],
    out: &mut [EndpointLabel],
) -> Result<()> {
    let end = &set.snapshots[at];
    let near = &set.snapshots[approach];
    // Work on whichever mesh is pushed (the approach mesh for a direct
    // endpoint, the endpoint itself otherwise).
    let work = if end.source == near.source { end } else { near };
    let m = &work.pencil.m;
    let span = transfer(end, cluster, work)?;
    let span = m_orthonormalize(span, m);
    let points = work.dof_points();
    let mut canon = Vec::with_capacity(labels.len());
    for l in labels {
        let v: Vec<f64> = points.iter().map(|&p| labeler.eval(l, p)).collect::<Result<_>>()?;
        let nrm = dot(&v, &m.mul(&v)).sqrt();
        canon.push(v.into_iter().map(|x| x / nrm).collect::<Vec<f64>>());
    }
    let mut weights = Vec::with_capacity(members.len());
    for &k in members {
        let ia = set.index_at(k, approach);
        let a = transfer(near, &[ia], work)?.remove(0);
        let ma = m.mul(&a);
        // Project the approach vector onto the endpoint eigenspace.
        let mut p = vec![0.0; a.len()];
        for s in &span {
            let c = dot(s, &ma);
            p.iter_mut().zip(s).for_each(|(x, y)| *x += c * y);
        }
        let nrm = dot(&p, &m.mul(&p)).sqrt();
        let mp: Vec<f64> = m.mul(&p).into_iter().map(|x| x / nrm.max(1e-300)).collect();
        weights.push(canon.iter().map(|c| dot(c, &mp).abs()).collect::<Vec<f64>>());
    }
    // Square weight matrix for the assignment.
    let size = members.len().max(labels.len());
    let mut w = vec![vec![0.0; size]; size];
    for (r, row) in weights.iter().enumerate() {
        w[r][..row.len()].copy_from_slice(row);
    }
    let assign = max_weight_assignment(&w);
    for (r, &k) in members.iter().enumerate() {
        let c = assign[r];
        if c < labels.len() {
            out[k].label = Some(labels[c]);
            out[k].canonical_overlap = Some(weights[r][c]);
        }
        out[k].degenerate = true;
    }
    Ok(())
}

fn m_orthonormalize(mut vs: Vec<Vec<f64>>, m: &CsrMatrix) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for v in vs.iter_mut() {
        for _ in 0..2 {
            let mv = m.mul(v);
            for q in &out {
                let c = dot(q, &mv);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nrm = dot(v, &m.mul(v)).sqrt();
        if nrm > 1e-12 {
            out.push(v.iter().map(|x| x / nrm).collect());
        }
    }
    out
}

/// Relative gap measured on one known square coincidence.
#[derive(Clone, Debug, PartialEq)]
pub struct KnownCoincidence {
    pub family: SymmetryFamily,
    pub labels: (ModeLabel, ModeLabel),
    /// Sorted index of the lower member.
    pub index: usize,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub h: f64,
    pub coincidences: Vec<KnownCoincidence>,
    /// Twice the largest measured gap; no smaller than the default threshold.
    pub threshold: f64,
}

/// Measure `E_j` on every exact coincidence among the first `n_modes` modes
/// of the side-2 square, per family.
pub fn calibrate_threshold(families: &[SymmetryFamily], h: f64, n_modes: usize) -> Result<Calibration> {
    let map = HomotopyMap::CarpetG(0);
    let mut coincidences = Vec::new();
    for &family in families {
        let labels = square_modes_oriented(family, SquareOrientation::Axis, n_modes + 1);
        let pairs: Vec<usize> = (0..n_modes)
            .filter(|&i| (labels[i].normalized_value - labels[i + 1].normalized_value).abs() < 1e-9)
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let options = SweepOptions {
            n_modes: n_modes + 1,
            buffer: 2,
            ..SweepOptions::default()
        };
        let snap = Homotopy::new(map, family, h, options)?.solve(0.0)?;
        for i in pairs {
            coincidences.push(KnownCoincidence {
                family,
                labels: (labels[i], labels[i + 1]),
                index: i,
                gap: relative_gap(&snap.spectrum, i)?,
            });
        }
    }
    let worst = coincidences.iter().map(|c| c.gap).fold(0.0, f64::max);
    Ok(Calibration {
        h,
        coincidences,
        threshold: (2.0 * worst).max(DEFAULT_THRESHOLD),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    fn identity(n: usize) -> CsrMatrix {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        CsrMatrix::from_triplets(n, &t)
    }

    fn unit(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn hungarian_small_cases() {
        let w = vec![vec![0.1, 0.9, 0.0], vec![0.8, 0.2, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(max_weight_assignment(&w), vec![1, 0, 2]);
        // Greedy would pick 0.9 first and lose.
        let w = vec![vec![0.9, 0.8], vec![0.85, 0.0]];
        assert_eq!(max_weight_assignment(&w), vec![1, 0]);
    }

    #[test]
    fn identical_spectra_match_identically() {
        let v: Vec<Vec<f64>> = (0..4).map(|i| unit(4, i)).collect();
        let m = match_vectors(&v, &v, &identity(4)).unwrap();
        assert_eq!(m.permutation, vec![0, 1, 2, 3]);
        assert!(m.quality.iter().all(|&q| (q - 1.0).abs() < 1e-15));
        let mut w = v.clone();
        w.swap(1, 2);
        let m = match_vectors(&v, &w, &identity(4)).unwrap();
        assert_eq!(m.permutation, vec![0, 2, 1, 3]);
    }

    #[test]
    fn half_mixed_pair_is_ambiguous() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = vec![unit(2, 0), unit(2, 1)];
        let b = vec![vec![s, s], vec![-s, s]];
        let m = match_vectors(&a, &b, &identity(2)).unwrap();
        assert!(m.ambiguous.iter().all(|&x| x));
        assert!(m.quality.iter().all(|&q| (q - s).abs() < 1e-12));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let a = vec![unit(3, 0)];
        let b = vec![unit(2, 0)];
        assert!(match_vectors(&a, &b, &identity(2)).is_err());
    }

    #[test]
    fn transposition_decomposition() {
        assert_eq!(adjacent_transpositions(&[0, 1, 2]), Vec::<usize>::new());
        assert_eq!(adjacent_transpositions(&[1, 0, 2]), vec![0]);
        let p = [2, 0, 1];
        let moves = adjacent_transpositions(&p);
        let mut q = p.to_vec();
        for j in moves {
            q.swap(j, j + 1);
        }
        assert_eq!(q, vec![0, 1, 2]);
    }

    #[test]
    fn classification_rule() {
        assert_eq!(EventKind::classify(1e-3, true, 8e-5), EventKind::Collision);
        assert_eq!(EventKind::classify(1e-6, true, 8e-5), EventKind::Crossing);
        assert_eq!(EventKind::classify(1e-6, false, 8e-5), EventKind::NonCrossing);
    }

    #[test]
    fn parabola_vertex() {
        let f = |x: f64| 3.0 * (x - 0.4).powi(2) + 0.5;
        let (xv, a, yv) = parabola([(0.0, f(0.0)), (0.3, f(0.3)), (1.0, f(1.0))]).unwrap();
        assert!((xv - 0.4).abs() < 1e-12 && (a - 3.0).abs() < 1e-12 && (yv - 0.5).abs() < 1e-12);
        assert!(parabola([(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).is_none());
    }
}
