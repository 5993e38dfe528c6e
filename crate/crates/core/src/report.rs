//! Output artifacts: trajectory and event CSVs, SVG summary plots, run
//! manifests, nodal-set bands, line restrictions and level-to-level
//! eigenvalue ratios.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{HomotopyMap, PlanePoint, SymmetryFamily};
use crate::mesh::{Mesh, PointLocator};
use crate::track::{mode_number, Correspondence, EndpointLabel, EventKind, TrajectorySet};

pub const TRAJECTORY_HEADER: &str = "run_id,family,mode_id,t_global,lambda_raw,lambda_normalized,residual";
pub const EVENT_HEADER: &str = "family,mode_a,mode_b,t_star,min_E,kind";

/// Factor turning a raw eigenvalue into the reported normalized value:
/// `1/π²` along the circle maps, `L²/π²` (L = 2) along the carpet maps.
pub fn normalization(map: HomotopyMap) -> f64 {
    match map {
        HomotopyMap::CircleH | HomotopyMap::CircleF => 1.0 / (PI * PI),
        HomotopyMap::CarpetG(_) => map.square_side().powi(2) / (PI * PI),
    }
}

/// Offset of a sweep on the concatenated parameter axis.
pub fn t_offset(map: HomotopyMap) -> f64 {
    match map {
        HomotopyMap::CarpetG(j) => j as f64,
        _ => 0.0,
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Nodal sets

#[derive(Clone, Debug, Default)]
pub struct NodalBand {
    /// Per-triangle pieces of `{|u| < eps}`.
    pub polygons: Vec<Vec<PlanePoint>>,
    /// Zero-level curves, chained across triangles.
    pub polylines: Vec<Vec<PlanePoint>>,
}

impl NodalBand {
    pub fn area(&self) -> f64 {
        self.polygons.iter().map(|p| polygon_area(p).abs()).sum()
    }
}

fn polygon_area(p: &[PlanePoint]) -> f64 {
    let n = p.len();
    (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Keep the part of a polygon (with linear field values) where `s·u < eps`.
fn clip(poly: &[(PlanePoint, f64)], s: f64, eps: f64) -> Vec<(PlanePoint, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let inside = |u: f64| s * u < eps;
    for i in 0..poly.len() {
        let (p, u) = poly[i];
        let (q, v) = poly[(i + 1) % poly.len()];
        if inside(u) {
            out.push((p, u));
        }
        if inside(u) != inside(v) {
            let r = (eps - s * u) / (s * v - s * u);
            out.push((lerp(p, q, r), u + r * (v - u)));
        }
    }
    out
}

fn lerp(p: PlanePoint, q: PlanePoint, r: f64) -> PlanePoint {
    PlanePoint::new(p.x + r * (q.x - p.x), p.y + r * (q.y - p.y))
}

/// Band `{|u| < eps}` of a piecewise-linear field (one value per vertex) and
/// its zero-level polylines by marching triangles.
pub fn nodal_band(mesh: &Mesh, nodal: &[f64], eps: f64) -> Result<NodalBand> {
    if nodal.len() != mesh.vertices.len() {
        return Err(Error::Argument(format!(
            "field has {} values for {} vertices",
            nodal.len(),
            mesh.vertices.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("band half-width {eps} must be positive")));
    }
    let mut band = NodalBand::default();
    // Crossing points keyed by their edge, then segments between them.
    let mut point_of_edge: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut points: Vec<PlanePoint> = Vec::new();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    for tri in &mesh.triangles {
        let poly: Vec<(PlanePoint, f64)> = tri.iter().map(|&v| (mesh.vertices[v], nodal[v])).collect();
        let piece = clip(&clip(&poly, 1.0, eps), -1.0, eps);
        if piece.len() >= 3 {
            band.polygons.push(piece.into_iter().map(|(p, _)| p).collect());
        }
        let mut cut = Vec::with_capacity(2);
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            let (ua, ub) = (nodal[a], nodal[b]);
            if (ua >= 0.0) != (ub >= 0.0) {
                let key = (a.min(b), a.max(b));
                let id = *point_of_edge.entry(key).or_insert_with(|| {
                    let r = ua / (ua - ub);
                    points.push(lerp(mesh.vertices[a], mesh.vertices[b], r));
                    points.len() - 1
                });
                cut.push(id);
            }
        }
        if cut.len() == 2 {
            segments.push((cut[0], cut[1]));
        }
    }
    band.polylines = chain(&points, &segments);
    Ok(band)
}

fn chain(points: &[PlanePoint], segments: &[(usize, usize)]) -> Vec<Vec<PlanePoint>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (s, &(a, b)) in segments.iter().enumerate() {
        adj[a].push(s);
        adj[b].push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    // Open chains start at degree-one points; what remains are loops.
    let starts: Vec<usize> = (0..points.len())
        .filter(|&p| adj[p].len() == 1)
        .chain(0..points.len())
        .collect();
    for start in starts {
        while let Some(&s0) = adj[start].iter().find(|&&s| !used[s]) {
            let mut line = vec![start];
            let mut cur = start;
            let mut next_seg = Some(s0);
            while let Some(s) = next_seg {
                used[s] = true;
                let (a, b) = segments[s];
                cur = if a == cur { b } else { a };
                line.push(cur);
                next_seg = adj[cur].iter().copied().find(|&x| !used[x]);
            }
            out.push(line.into_iter().map(|i| points[i]).collect());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Line restrictions

#[derive(Clone, Debug, PartialEq)]
pub struct LineRestriction {
    /// `(arclength, value)` for every sample inside the mesh.
    pub samples: Vec<(f64, f64)>,
    /// Samples dropped because they fell outside the mesh.
    pub clipped: usize,
}

pub fn line_restriction(
    mesh: &Mesh,
    nodal: &[f64],
    a: PlanePoint,
    b: PlanePoint,
    n_samples: usize,
) -> Result<LineRestriction> {
    if n_samples == 0 {
        return Err(Error::Argument("line restriction needs at least one sample".into()));
    }
    if nodal.len() != mesh.vertices.len() {
        return Err(Error::Argument("field length differs from vertex count".into()));
    }
    let loc = PointLocator::new(mesh);
    let len = a.dist(&b);
    let mut samples = Vec::with_capacity(n_samples);
    let mut clipped = 0;
    for i in 0..n_samples {
        let r = if n_samples == 1 { 0.0 } else { i as f64 / (n_samples - 1) as f64 };
        match loc.interpolate(nodal, lerp(a, b, r)) {
            Ok(v) => samples.push((r * len, v)),
            Err(Error::OutsideDomain { .. }) => clipped += 1,
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() {
        return Err(Error::OutsideDomain { x: a.x, y: a.y });
    }
    Ok(LineRestriction { samples, clipped })
}

// ---------------------------------------------------------------------------
// Summary tables

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub run_id: String,
    pub family: SymmetryFamily,
    pub mode_id: usize,
    pub t_global: f64,
    pub lambda_raw: f64,
    pub lambda_normalized: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventRow {
    pub family: SymmetryFamily,
    pub mode_a: usize,
    pub mode_b: usize,
    pub t_star: f64,
    pub min_e: f64,
    pub kind: EventKind,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub run_id: String,
    pub config: Option<RunConfig>,
    pub calibrated_threshold: Option<f64>,
    pub version: String,
    /// Wall-clock seconds per stage.
    pub stages: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            run_id: run_id(config),
            config: Some(config.clone()),
            calibrated_threshold: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            stages: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run_id = {}", self.run_id);
        let _ = writeln!(s, "version = {}", self.version);
        if let Some(c) = &self.config {
            s.push_str(&c.to_text());
        }
        if let Some(th) = self.calibrated_threshold {
            let _ = writeln!(s, "calibrated_threshold = {}", fmt_real(th));
        }
        for (name, secs) in &self.stages {
            let _ = writeln!(s, "stage.{name} = {secs:.3}");
        }
        s
    }

    /// Parse a manifest; keys unknown to [`RunConfig`] are ignored there.
    pub fn parse(text: &str) -> Result<RunManifest> {
        let mut m = RunManifest::default();
        let mut cfg = RunConfig::default();
        let mut any_cfg = false;
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else { continue };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "run_id" => m.run_id = v.to_string(),
                "version" => m.version = v.to_string(),
                "calibrated_threshold" => {
                    m.calibrated_threshold =
                        Some(v.parse().map_err(|_| Error::Format(format!("bad threshold '{v}'")))?)
                }
                _ if k.starts_with("stage.") => {
                    let secs = v.parse().map_err(|_| Error::Format(format!("bad stage time '{v}'")))?;
                    m.stages.push((k["stage.".len()..].to_string(), secs));
                }
                _ => {
                    cfg.set(k, v)?;
                    any_cfg = true;
                }
            }
        }
        if any_cfg {
            m.config = Some(cfg);
        }
        Ok(m)
    }
}

/// Deterministic run identifier: FNV-1a of the canonical config text, with
/// the output directory left out.
pub fn run_id(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.out_dir = PathBuf::new();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in c.to_text().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Flatten sweeps into CSV rows. Sweeps of the same family are chained at
/// shared endpoints by sorted index, so a carpet run G₀…G₃ yields one
/// `mode_id` per mode across all levels.
pub fn summary_rows(run_id: &str, sets: &[TrajectorySet]) -> (Vec<TrajectoryRow>, Vec<EventRow>) {
    let mut order: Vec<&TrajectorySet> = sets.iter().collect();
    order.sort_by(|a, b| {
        (a.family, t_offset(a.map))
            .partial_cmp(&(b.family, t_offset(b.map)))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut rows = Vec::new();
    let mut events = Vec::new();
    // Family → (sorted index at the last endpoint → mode id).
    let mut tails: BTreeMap<SymmetryFamily, BTreeMap<usize, usize>> = BTreeMap::new();
    for set in order {
        let scale = normalization(set.map);
        let off = t_offset(set.map);
        let tail = tails.entry(set.family).or_default();
        let last = set.t_grid.len() - 1;
        let mut next_tail = BTreeMap::new();
        for (k, m) in set.modes.iter().enumerate() {
            let id = tail
                .get(&m[0].index)
                .copied()
                .unwrap_or_else(|| mode_number(set.family, k));
            for (i, p) in m.iter().enumerate() {
                // Shared endpoints of chained segments are written once.
                if i == 0 && tail.contains_key(&m[0].index) {
                    continue;
                }
                rows.push(TrajectoryRow {
                    run_id: run_id.to_string(),
                    family: set.family,
                    mode_id: id,
                    t_global: off + p.t,
                    lambda_raw: p.lambda,
                    lambda_normalized: p.lambda * scale,
                    residual: p.residual,
                });
            }
            next_tail.insert(m[last].index, id);
        }
        *tail = next_tail;
        for e in &set.events {
            events.push(EventRow {
                family: set.family,
                mode_a: mode_number(set.family, e.pair.0),
                mode_b: mode_number(set.family, e.pair.1),
                t_star: off + e.t_star,
                min_e: e.min_e,
                kind: e.kind,
            });
        }
    }
    rows.sort_by(|a, b| {
        (a.family, a.mode_id)
            .cmp(&(b.family, b.mode_id))
            .then(a.t_global.total_cmp(&b.t_global))
    });
    (rows, events)
}

pub fn trajectories_csv(rows: &[TrajectoryRow]) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.run_id,
            r.family,
            r.mode_id,
            fmt_real(r.t_global),
            fmt_real(r.lambda_raw),
            fmt_real(r.lambda_normalized),
            fmt_real(r.residual)
        );
    }
    s
}

pub fn events_csv(events: &[EventRow]) -> String {
    let mut s = String::from(EVENT_HEADER);
    s.push('\n');
    for e in events {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.family,
            e.mode_a,
            e.mode_b,
            fmt_real(e.t_star),
            fmt_real(e.min_e),
            e.kind
        );
    }
    s
}

fn csv_body<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(Error::Format(format!(
                "expected header '{header}', found '{}'",
                other.unwrap_or("")
            )))
        }
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 2, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, line: usize) -> Result<T> {
    cols.get(i)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Format(format!("line {line}: bad or missing column {}", i + 1)))
}

pub fn parse_trajectories_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    csv_body(text, TRAJECTORY_HEADER)?
        .map(|(line, c)| {
            if c.len() != 7 {
                return Err(Error::Format(format!("line {line}: expected 7 columns")));
            }
            Ok(TrajectoryRow {
                run_id: c[0].to_string(),
                family: c[1].parse().map_err(|_| Error::Format(format!("line {line}: bad family")))?,
                mode_id: field(&c, 2, line)?,
                t_global: field(&c, 3, line)?,
                lambda_raw: field(&c, 4, line)?,
                lambda_normalized: field(&c, 5, line)?,
                residual: field(&c, 6, line)?,
            })
        })
        .collect()
}

pub fn parse_events_csv(text: &str) -> Result<Vec<EventRow>> {
    csv_body(text, EVENT_HEADER)?
        .map(|(line, c)| {
            if c.len() != 6 {
                return Err(Error::Format(format!("line {line}: expected 6 columns")));
            }
            Ok(EventRow {
                family: c[0].parse().map_err(|_| Error::Format(format!("line {line}: bad family")))?,
                mode_a: field(&c, 1, line)?,
                mode_b: field(&c, 2, line)?,
                t_star: field(&c, 3, line)?,
                min_e: field(&c, 4, line)?,
                kind: c[5].parse().map_err(|_| Error::Format(format!("line {line}: bad kind")))?,
            })
        })
        .collect()
}

const VIEW_W: f64 = 800.0;
const VIEW_H: f64 = 600.0;
const MARGIN: f64 = 50.0;

/// Normalized eigenvalue against `t_global` for one family: one polyline per
/// mode, a circle per event.
pub fn summary_svg(family: SymmetryFamily, rows: &[TrajectoryRow], events: &[EventRow]) -> String {
    let rows: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.family == family).collect();
    let events: Vec<&EventRow> = events.iter().filter(|e| e.family == family).collect();
    let (mut t0, mut t1, mut l0, mut l1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in &rows {
        t0 = t0.min(r.t_global);
        t1 = t1.max(r.t_global);
        l0 = l0.min(r.lambda_normalized);
        l1 = l1.max(r.lambda_normalized);
    }
    if !t0.is_finite() {
        (t0, t1, l0, l1) = (0.0, 1.0, 0.0, 1.0);
    }
    if t1 - t0 < 1e-12 {
        t1 = t0 + 1.0;
    }
    if l1 - l0 < 1e-12 {
        l0 -= 1.0;
        l1 += 1.0;
    }
    let x = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (VIEW_W - 2.0 * MARGIN);
    let y = |l: f64| VIEW_H - MARGIN - (l - l0) / (l1 - l0) * (VIEW_H - 2.0 * MARGIN);
    let mut by_mode: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        by_mode.entry(r.mode_id).or_default().push((r.t_global, r.lambda_normalized));
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW_W} {VIEW_H}" width="{VIEW_W}" height="{VIEW_H}">"#
    );
    let _ = writeln!(s, r#"<title>family {family}</title>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        VIEW_W - 2.0 * MARGIN,
        VIEW_H - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-size="12">t from {t0:.3} to {t1:.3}; normalized eigenvalue from {l0:.3} to {l1:.3}</text>"#,
        MARGIN - 10.0
    );
    for (id, pts) in &by_mode {
        let mut pts = pts.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = pts.iter().map(|&(t, l)| format!("{:.2},{:.2}", x(t), y(l))).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-mode="{id}" fill="none" stroke="steelblue" stroke-width="1" points="{}"/>"#,
            coords.join(" ")
        );
    }
    for e in &events {
        let l = interpolate_mode(by_mode.get(&e.mode_a), e.t_star).unwrap_or(l0);
        let colour = match e.kind {
            EventKind::Collision => "orange",
            EventKind::Crossing => "red",
            EventKind::NonCrossing => "green",
        };
        let _ = writeln!(
            s,
            r#"<circle data-kind="{}" data-modes="{}/{}" cx="{:.2}" cy="{:.2}" r="4" fill="{colour}"/>"#,
            e.kind,
            e.mode_a,
            e.mode_b,
            x(e.t_star),
            y(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn interpolate_mode(pts: Option<&Vec<(f64, f64)>>, t: f64) -> Option<f64> {
    let mut pts = pts?.clone();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let w = pts.windows(2).find(|w| w[0].0 <= t && t <= w[1].0)?;
    let r = if w[1].0 > w[0].0 { (t - w[0].0) / (w[1].0 - w[0].0) } else { 0.0 };
    Some(w[0].1 + r * (w[1].1 - w[0].1))
}

/// Paths written by [`write_outputs`].
#[derive(Clone, Debug, Default)]
pub struct Emitted {
    pub trajectories: PathBuf,
    pub events: PathBuf,
    pub plots: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub fn write_outputs(
    dir: &Path,
    families: &[SymmetryFamily],
    rows: &[TrajectoryRow],
    events: &[EventRow],
    manifest: &RunManifest,
) -> Result<Emitted> {
    fs::create_dir_all(dir)?;
    let out = Emitted {
        trajectories: dir.join("trajectories.csv"),
        events: dir.join("events.csv"),
        plots: families
            .iter()
            .map(|f| dir.join(format!("summary_{}.svg", file_tag(*f))))
            .collect(),
        manifest: dir.join("manifest.txt"),
    };
    fs::write(&out.trajectories, trajectories_csv(rows))?;
    fs::write(&out.events, events_csv(events))?;
    for (f, path) in families.iter().zip(&out.plots) {
        fs::write(path, summary_svg(*f, rows, events))?;
    }
    fs::write(&out.manifest, manifest.to_text())?;
    Ok(out)
}

/// File-name-safe family tag (`1++` → `1pp`).
pub fn file_tag(f: SymmetryFamily) -> String {
    f.as_str().replace('+', "p").replace('-', "m")
}

/// Write the trajectories CSV, events CSV, one SVG per family and the manifest.
pub fn emit_summary(sets: &[TrajectorySet], dir: &Path, manifest: &RunManifest) -> Result<Emitted> {
    let (rows, events) = summary_rows(&manifest.run_id, sets);
    let mut families: Vec<SymmetryFamily> = sets.iter().map(|s| s.family).collect();
    families.sort();
    families.dedup();
    write_outputs(dir, &families, &rows, &events, manifest)
}

pub const CORRESPONDENCE_HEADER: &str =
    "trajectory,start_index,start_label,start_normalized,end_index,end_label,end_normalized,degenerate,canonical_overlap,flagged";

/// Endpoint correspondence table; labels are the table notation `(a,b)`,
/// quoted because they contain commas.
pub fn correspondence_csv(c: &Correspondence) -> String {
    let label = |e: &EndpointLabel| e.label.map(|l| format!("\"{}\"", l.table_label())).unwrap_or_else(|| "-".into());
    let mut s = String::from(CORRESPONDENCE_HEADER);
    s.push('\n');
    for r in &c.rows {
        let degenerate = r.start.degenerate || r.end.degenerate;
        let overlap = r.end.canonical_overlap.or(r.start.canonical_overlap);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.trajectory,
            r.start.index,
            label(&r.start),
            fmt_real(r.start.lambda_normalized),
            r.end.index,
            label(&r.end),
            fmt_real(r.end.lambda_normalized),
            degenerate,
            overlap.map(fmt_real).unwrap_or_else(|| "-".into()),
            r.start.unmatched || r.end.unmatched
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Renormalization

#[derive(Clone, Debug, PartialEq)]
pub struct LevelRatios {
    pub from_level: usize,
    /// `(sorted index, λ at level+1 / λ at level)`.
    pub ratios: Vec<(usize, f64)>,
    pub median: f64,
    /// First and third quartiles.
    pub iqr: (f64, f64),
    pub notes: Vec<String>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ratios `λ_n^(j+1) / λ_n^(j)` of consecutive level spectra matched by sorted
/// index; zero modes and indices missing at either level are skipped.
pub fn renormalization_ratios(level_spectra: &[Vec<f64>]) -> Vec<LevelRatios> {
    level_spectra
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let mut notes = Vec::new();
            let n = w[0].len().max(w[1].len());
            let mut ratios = Vec::new();
            for i in 0..n {
                match (w[0].get(i), w[1].get(i)) {
                    (Some(&a), Some(&b)) if a.abs() > 1e-9 => ratios.push((i, b / a)),
                    (Some(_), Some(_)) => notes.push(format!("index {i}: zero eigenvalue skipped")),
                    _ => notes.push(format!("index {i}: unmatched between levels {j} and {}", j + 1)),
                }
            }
            let mut vals: Vec<f64> = ratios.iter().map(|r| r.1).collect();
            vals.sort_by(f64::total_cmp);
            LevelRatios {
                from_level: j,
                median: quantile(&vals, 0.5),
                iqr: (quantile(&vals, 0.25), quantile(&vals, 0.75)),
                ratios,
                notes,
            }
        })
        .collect()
}
