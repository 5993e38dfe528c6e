//! Conforming triangle meshes of fundamental domains.
//!
//! Direct meshes come from a constrained Delaunay triangulation of the sampled
//! boundary followed by Ruppert-style refinement (via `spade`). Pushed meshes
//! reuse the connectivity of a reference mesh and move its vertices through a
//! homotopy map, so that coefficient vectors at different `t` live on the same
//! index set.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use spade::handles::FixedVertexHandle;
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Curve, DomainSpec, HomotopyMap, PlanePoint, SymmetryFamily};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    Direct { t: f64 },
    Pushed { reference: u64, t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<PlanePoint>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub provenance: Provenance,
    pub h_target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshQuality {
    pub min_angle: f64,
    /// Circumradius over twice the inradius; 1 for an equilateral triangle.
    pub max_aspect: f64,
    pub max_edge: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
}

pub fn signed_area(a: PlanePoint, b: PlanePoint, c: PlanePoint) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

impl Mesh {
    pub fn triangle_points(&self, t: usize) -> [PlanePoint; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Stable identifier derived from the connectivity and reference coordinates.
    pub fn id(&self) -> u64 {
        // FNV-1a over the raw data.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for p in &self.vertices {
            eat(p.x.to_bits());
            eat(p.y.to_bits());
        }
        for t in &self.triangles {
            for &v in t {
                eat(v as u64);
            }
        }
        h
    }

    pub fn quality(&self) -> MeshQuality {
        let mut min_angle = f64::INFINITY;
        let mut max_aspect: f64 = 0.0;
        let mut max_edge: f64 = 0.0;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            let (la, lb, lc) = (b.dist(&c), c.dist(&a), a.dist(&b));
            max_edge = max_edge.max(la).max(lb).max(lc);
            let area = signed_area(a, b, c);
            for (opp, s1, s2) in [(la, lb, lc), (lb, lc, la), (lc, la, lb)] {
                let cosv = ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0);
                min_angle = min_angle.min(cosv.acos());
            }
            let s = 0.5 * (la + lb + lc);
            let inr = area / s;
            let circ = la * lb * lc / (4.0 * area);
            max_aspect = max_aspect.max(circ / (2.0 * inr));
        }
        MeshQuality {
            min_angle,
            max_aspect,
            max_edge,
            n_vertices: self.vertices.len(),
            n_triangles: self.triangles.len(),
        }
    }

    /// Vertices touched by a boundary edge with the given tag.
    pub fn tagged_vertices(&self, tag: BoundaryTag) -> Vec<bool> {
        let mut on = vec![false; self.vertices.len()];
        for e in &self.boundary_edges {
            if e.tag == tag {
                on[e.v[0]] = true;
                on[e.v[1]] = true;
            }
        }
        on
    }

    /// Checks positivity, edge-manifoldness, boundary tag coverage and
    /// vertex uniqueness.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            let a = self.triangle_area(t);
            if !(a > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} has signed area {a:e}")));
            }
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for (&e, &c) in &count {
            match c {
                1 => boundary.push(e),
                2 => {}
                _ => return Err(Error::Mesh(format!("edge {e:?} shared by {c} triangles"))),
            }
        }
        boundary.sort_unstable();
        let mut tagged: Vec<(usize, usize)> = self
            .boundary_edges
            .iter()
            .map(|e| (e.v[0].min(e.v[1]), e.v[0].max(e.v[1])))
            .collect();
        tagged.sort_unstable();
        if boundary != tagged {
            return Err(Error::Mesh(format!(
                "boundary tags cover {} edges but the mesh has {} boundary edges",
                tagged.len(),
                boundary.len()
            )));
        }
        let mut keys: Vec<(i64, i64, usize)> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.x * 1e9).round() as i64, (p.y * 1e9).round() as i64, i))
            .collect();
        keys.sort_unstable();
        for w in keys.windows(2) {
            let (p, q) = (self.vertices[w[0].2], self.vertices[w[1].2]);
            if p.dist(&q) < 1e-12 {
                return Err(Error::Mesh(format!("duplicate vertices {} and {}", w[0].2, w[1].2)));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {} triangles {}", self.vertices.len(), self.triangles.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e}", p.x, p.y);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {} {}", e.v[0], e.v[1], e.tag.as_str());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let bad = |m: &str| Error::Format(format!("mesh text: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
        if header.len() != 4 || header[0] != "vertices" || header[2] != "triangles" {
            return Err(bad("bad header"));
        }
        let nv: usize = header[1].parse().map_err(|_| bad("vertex count"))?;
        let nt: usize = header[3].parse().map_err(|_| bad("triangle count"))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let f: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("missing vertex"))?
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad("vertex coordinate")))
                .collect::<Result<_>>()?;
            if f.len() != 2 {
                return Err(bad("vertex line"));
            }
            vertices.push(PlanePoint::new(f[0], f[1]));
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f: Vec<usize> = lines
                .next()
                .ok_or_else(|| bad("missing triangle"))?
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad("triangle index")))
                .collect::<Result<_>>()?;
            if f.len() != 3 || f.iter().any(|&v| v >= nv) {
                return Err(bad("triangle line"));
            }
            triangles.push([f[0], f[1], f[2]]);
        }
        let mut boundary_edges = Vec::new();
        for l in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("boundary line"));
            }
            let a: usize = f[0].parse().map_err(|_| bad("boundary index"))?;
            let b: usize = f[1].parse().map_err(|_| bad("boundary index"))?;
            let tag = match f[2] {
                "N" => BoundaryTag::Neumann,
                "D" => BoundaryTag::Dirichlet,
                _ => return Err(bad("boundary tag")),
            };
            boundary_edges.push(BoundaryEdge { v: [a, b], tag });
        }
        Ok(Mesh {
            vertices,
            triangles,
            boundary_edges,
            provenance: Provenance::Direct { t: f64::NAN },
            h_target: f64::NAN,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// One boundary segment handed to the triangulator.
#[derive(Clone, Copy, Debug)]
struct InputSegment {
    a: PlanePoint,
    b: PlanePoint,
    arc: usize,
}

fn segments_intersect(p: &InputSegment, q: &InputSegment) -> bool {
    let o = |a: PlanePoint, b: PlanePoint, c: PlanePoint| signed_area(a, b, c);
    let scale = p.a.dist(&p.b).max(q.a.dist(&q.b));
    let eps = 1e-12 * scale * scale;
    let d1 = o(p.a, p.b, q.a);
    let d2 = o(p.a, p.b, q.b);
    let d3 = o(q.a, q.b, p.a);
    let d4 = o(q.a, q.b, p.b);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    // Collinear overlap.
    if d1.abs() <= eps && d2.abs() <= eps {
        let dir = PlanePoint::new(p.b.x - p.a.x, p.b.y - p.a.y);
        let proj = |x: PlanePoint| (x.x - p.a.x) * dir.x + (x.y - p.a.y) * dir.y;
        let len2 = dir.x * dir.x + dir.y * dir.y;
        let (s0, s1) = (proj(q.a) / len2, proj(q.b) / len2);
        let (lo, hi) = (s0.min(s1), s0.max(s1));
        return hi.min(1.0) - lo.max(0.0) > 1e-9;
    }
    false
}

fn sample_boundary(spec: &DomainSpec, h: f64) -> Vec<InputSegment> {
    let mut segs = Vec::new();
    for (i, arc) in spec.boundary.iter().enumerate() {
        let len = arc.curve.length();
        let mut n = (len / h).ceil().max(1.0) as usize;
        if arc.curve.is_curved() {
            n = n.max(4);
        }
        let pts = arc.sample(n);
        for w in pts.windows(2) {
            segs.push(InputSegment { a: w[0], b: w[1], arc: i });
        }
    }
    segs
}

/// Deduplicating vertex table keyed on rounded coordinates.
#[derive(Default)]
struct VertexTable {
    points: Vec<PlanePoint>,
    index: HashMap<(i64, i64), usize>,
}

impl VertexTable {
    fn key(p: PlanePoint) -> (i64, i64) {
        ((p.x * 1e10).round() as i64, (p.y * 1e10).round() as i64)
    }

    fn insert(&mut self, p: PlanePoint) -> usize {
        let (kx, ky) = Self::key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&i) = self.index.get(&(kx + dx, ky + dy)) {
                    if self.points[i].dist(&p) < 1e-10 {
                        return i;
                    }
                }
            }
        }
        self.points.push(p);
        self.index.insert((kx, ky), self.points.len() - 1);
        self.points.len() - 1
    }
}

/// Guaranteed minimum interior angle of direct meshes.
pub const MIN_ANGLE_DEG: f64 = 20.0;

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

fn to_spade(p: PlanePoint) -> Point2<f64> {
    Point2::new(p.x, p.y)
}

fn build_cdt(points: &[PlanePoint], edges: &[(usize, usize)], segs: &[InputSegment]) -> Result<(Cdt, Vec<FixedVertexHandle>)> {
    let mut cdt = Cdt::new();
    let mut handles = Vec::with_capacity(points.len());
    for &p in points {
        let h = cdt
            .insert(to_spade(p))
            .map_err(|e| Error::Mesh(format!("cannot insert boundary point ({}, {}): {e:?}", p.x, p.y)))?;
        handles.push(h);
    }
    for (k, &(a, b)) in edges.iter().enumerate() {
        if !cdt.can_add_constraint(handles[a], handles[b]) {
            return Err(Error::Mesh(format!(
                "boundary segment {:?} -> {:?} crosses another boundary segment",
                segs[k].a, segs[k].b
            )));
        }
        cdt.add_constraint(handles[a], handles[b]);
    }
    Ok((cdt, handles))
}

/// Triangles of the CDT inside the domain: faces separated from the outer
/// face by an odd number of constraint edges.
fn kept_faces(cdt: &Cdt) -> Vec<[FixedVertexHandle; 3]> {
    let n = cdt.num_all_faces();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for e in cdt.undirected_edges() {
        let d = e.as_directed();
        let (f1, f2) = (d.face().fix().index(), d.rev().face().fix().index());
        let w = usize::from(cdt.is_constraint_edge(e.fix()));
        adj[f1].push((f2, w));
        adj[f2].push((f1, w));
    }
    let mut layer = vec![usize::MAX; n];
    let start = cdt.outer_face().fix().index();
    layer[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(f) = queue.pop_front() {
        for &(g, w) in &adj[f] {
            let l = layer[f] + w;
            if l < layer[g] {
                layer[g] = l;
                if w == 0 {
                    queue.push_front(g);
                } else {
                    queue.push_back(g);
                }
            }
        }
    }
    cdt.inner_faces()
        .filter(|f| layer[f.fix().index()] % 2 == 1)
        .map(|f| {
            let v = f.vertices();
            [v[0].fix(), v[1].fix(), v[2].fix()]
        })
        .collect()
}

/// Delaunay-refined mesh of `spec` with maximum edge length `h` and minimum
/// angle at least 20°.
pub fn triangulate(spec: &DomainSpec, h: f64) -> Result<Mesh> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Argument(format!("mesh size h = {h} must be positive")));
    }
    if let Some(d) = spec.min_hole_diameter() {
        if d < 2.0 * h {
            return Err(Error::Mesh(format!(
                "hole of diameter {d:.3e} is below 2h = {:.3e}; mesh the hole-free endpoint instead",
                2.0 * h
            )));
        }
    }
    let segs = sample_boundary(spec, h);
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            let (p, q) = (&segs[i], &segs[j]);
            let adjacent = p.a.dist(&q.a) < 1e-12
                || p.a.dist(&q.b) < 1e-12
                || p.b.dist(&q.a) < 1e-12
                || p.b.dist(&q.b) < 1e-12;
            if !adjacent && segments_intersect(p, q) {
                return Err(Error::Mesh(format!(
                    "boundary self-intersection between segment {:?}->{:?} and {:?}->{:?}",
                    p.a, p.b, q.a, q.b
                )));
            }
        }
    }
    let mut table = VertexTable::default();
    let edges: Vec<(usize, usize)> = segs
        .iter()
        .map(|s| (table.insert(s.a), table.insert(s.b)))
        .collect();
    let (mut cdt, _) = build_cdt(&table.points, &edges, &segs)?;

    let area = spec.area(256).abs();
    let budget = (40.0 * area / (h * h)) as usize + 10 * segs.len() + 1000;
    let params = || {
        RefinementParameters::new()
            .with_angle_limit(AngleLimit::from_deg(25.0))
            .with_max_allowed_area(0.35 * h * h)
            .with_max_additional_vertices(budget)
            .exclude_outer_faces(true)
    };
    let mut complete = cdt.refine(params()).refinement_complete;
    for _ in 0..30 {
        let faces = kept_faces(&cdt);
        let mut long: BTreeMap<(u64, u64), PlanePoint> = BTreeMap::new();
        for f in &faces {
            for k in 0..3 {
                let a = cdt.vertex(f[k]).position();
                let b = cdt.vertex(f[(k + 1) % 3]).position();
                let len = (a.x - b.x).hypot(a.y - b.y);
                let constrained = cdt
                    .get_edge_from_neighbors(f[k], f[(k + 1) % 3])
                    .is_some_and(|e| cdt.is_constraint_edge(e.as_undirected().fix()));
                if len > h * (1.0 + 1e-9) && !constrained {
                    let m = PlanePoint::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
                    long.insert((m.x.to_bits(), m.y.to_bits()), m);
                }
            }
        }
        if long.is_empty() {
            break;
        }
        for m in long.values() {
            cdt.insert(to_spade(*m))
                .map_err(|e| Error::Mesh(format!("cannot insert refinement point: {e:?}")))?;
        }
        complete &= cdt.refine(params()).refinement_complete;
    }
    if !complete {
        return Err(Error::Mesh("refinement ran out of vertex budget".into()));
    }
    let faces = kept_faces(&cdt);
    extract_mesh(spec, &cdt, &faces, &segs, h)
}

fn extract_mesh(
    spec: &DomainSpec,
    cdt: &Cdt,
    faces: &[[FixedVertexHandle; 3]],
    segs: &[InputSegment],
    h: f64,
) -> Result<Mesh> {
    let mut index: HashMap<FixedVertexHandle, usize> = HashMap::new();
    let mut order: Vec<FixedVertexHandle> = faces.iter().flatten().copied().collect();
    order.sort_by_key(|v| v.index());
    order.dedup();
    let mut vertices = Vec::with_capacity(order.len());
    for v in order {
        let p = cdt.vertex(v).position();
        index.insert(v, vertices.len());
        vertices.push(PlanePoint::new(p.x, p.y));
    }
    let mut triangles: Vec<[usize; 3]> = faces
        .iter()
        .map(|f| [index[&f[0]], index[&f[1]], index[&f[2]]])
        .collect();
    triangles.sort_unstable_by_key(|t| {
        let m = *t.iter().min().unwrap();
        (m, t[0] + t[1] + t[2])
    });

    let mut count: BTreeMap<(usize, usize), (usize, usize, usize)> = BTreeMap::new();
    for tri in &triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let e = count.entry((a.min(b), a.max(b))).or_insert((a, b, 0));
            e.2 += 1;
        }
    }
    let scale = spec.side.max(1.0);
    let mut boundary_edges = Vec::new();
    let mut curve_of_vertex: BTreeMap<usize, Curve> = BTreeMap::new();
    for &(a, b, c) in count.values() {
        if c != 1 {
            continue;
        }
        let mid = vertices[a].lerp(&vertices[b], 0.5);
        let (best, dist) = segs
            .iter()
            .map(|s| {
                let d = crate::geometry::point_segment_distance(mid, s.a, s.b)
                    .max(crate::geometry::point_segment_distance(vertices[a], s.a, s.b))
                    .max(crate::geometry::point_segment_distance(vertices[b], s.a, s.b));
                (s.arc, d)
            })
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .ok_or_else(|| Error::Mesh("domain has no boundary".into()))?;
        if dist > 1e-9 * scale {
            return Err(Error::Mesh(format!(
                "boundary edge {a}-{b} lies {dist:e} away from the input boundary"
            )));
        }
        let arc = &spec.boundary[best];
        boundary_edges.push(BoundaryEdge { v: [a, b], tag: arc.tag });
        if arc.curve.is_curved() {
            curve_of_vertex.insert(a, arc.curve);
            curve_of_vertex.insert(b, arc.curve);
        }
    }
    // Move vertices inserted on chords of curved arcs onto the curve.
    for (&v, curve) in &curve_of_vertex {
        vertices[v] = curve.project(vertices[v]);
    }
    let mesh = Mesh {
        vertices,
        triangles,
        boundary_edges,
        provenance: Provenance::Direct { t: spec.t },
        h_target: h,
    };
    mesh.validate()?;
    let q = mesh.quality();
    if q.min_angle < MIN_ANGLE_DEG.to_radians() {
        return Err(Error::Mesh(format!(
            "refined mesh has a {:.2}° angle, below the {MIN_ANGLE_DEG}° guarantee",
            q.min_angle.to_degrees()
        )));
    }
    Ok(mesh)
}

/// Move every vertex of `reference` through `map` at public parameter `t`.
pub fn push_forward(
    reference: &Mesh,
    map: HomotopyMap,
    family: SymmetryFamily,
    t: f64,
) -> Result<Mesh> {
    let _ = family;
    let vertices = reference
        .vertices
        .iter()
        .map(|&p| map.apply(t, p))
        .collect::<Result<Vec<_>>>()?;
    let mesh = Mesh {
        vertices,
        triangles: reference.triangles.clone(),
        boundary_edges: reference.boundary_edges.clone(),
        provenance: Provenance::Pushed {
            reference: reference.id(),
            t,
        },
        h_target: reference.h_target,
    };
    check_orientation(&mesh, t)?;
    Ok(mesh)
}

fn check_orientation(mesh: &Mesh, t: f64) -> Result<()> {
    let mut worst: Option<(usize, f64)> = None;
    for k in 0..mesh.triangles.len() {
        let a = mesh.triangle_area(k);
        if !(a > 0.0) && worst.is_none_or(|(_, w)| a < w) {
            worst = Some((k, a));
        }
    }
    match worst {
        Some((triangle, area)) => Err(Error::InvertedElement { triangle, area, t }),
        None => Ok(()),
    }
}

/// Uniform red refinement: every triangle split into four through its edge
/// midpoints. The refined P1 space contains the coarse one.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<PlanePoint>| -> usize {
        let key = (a.min(b), a.max(b));
        *mid.entry(key).or_insert_with(|| {
            vertices.push(vertices[a].lerp(&vertices[b], 0.5));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let m = midpoint(e.v[0], e.v[1], &mut vertices);
        boundary_edges.push(BoundaryEdge { v: [e.v[0], m], tag: e.tag });
        boundary_edges.push(BoundaryEdge { v: [m, e.v[1]], tag: e.tag });
    }
    Mesh {
        vertices,
        triangles,
        boundary_edges,
        provenance: mesh.provenance,
        h_target: 0.5 * mesh.h_target,
    }
}

/// Uniform-grid point locator over a mesh.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    origin: PlanePoint,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

/// Snap tolerance for points slightly outside the mesh.
pub const SNAP_TOL: f64 = 1e-9;

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = (
            PlanePoint::new(f64::INFINITY, f64::INFINITY),
            PlanePoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in &mesh.vertices {
            lo = PlanePoint::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = PlanePoint::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let n = (mesh.triangles.len() as f64).sqrt().ceil().max(1.0);
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-300);
        let cell = span / n;
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for t in 0..mesh.triangles.len() {
            let pts = mesh.triangle_points(t);
            let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.x), a.1.max(p.x)));
            let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.y), a.1.max(p.y)));
            let i0 = (((x0 - lo.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let i1 = (((x1 - lo.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let j0 = (((y0 - lo.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            let j1 = (((y1 - lo.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn barycentric(&self, t: usize, p: PlanePoint) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangle_points(t);
        let area = signed_area(a, b, c);
        [
            signed_area(p, b, c) / area,
            signed_area(a, p, c) / area,
            signed_area(a, b, p) / area,
        ]
    }

    /// Containing triangle and barycentric weights, snapping points within
    /// [`SNAP_TOL`] of the mesh onto it.
    pub fn locate(&self, p: PlanePoint) -> Result<(usize, [f64; 3])> {
        let ci = ((p.x - self.origin.x) / self.cell).floor();
        let cj = ((p.y - self.origin.y) / self.cell).floor();
        let mut best: Option<(usize, f64)> = None;
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (i, j) = (ci as i64 + di, cj as i64 + dj);
                if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                    continue;
                }
                for &t in &self.buckets[j as usize * self.nx + i as usize] {
                    let w = self.barycentric(t, p);
                    let m = w[0].min(w[1]).min(w[2]);
                    if m >= -1e-12 {
                        return Ok((t, w));
                    }
                    let d = self.distance_to_triangle(t, p);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((t, d));
                    }
                }
            }
        }
        match best {
            Some((t, d)) if d <= SNAP_TOL => {
                let w = self.barycentric(t, p);
                let w = w.map(|x| x.max(0.0));
                let s = w[0] + w[1] + w[2];
                Ok((t, w.map(|x| x / s)))
            }
            _ => Err(Error::OutsideDomain { x: p.x, y: p.y }),
        }
    }

    fn distance_to_triangle(&self, t: usize, p: PlanePoint) -> f64 {
        let [a, b, c] = self.mesh.triangle_points(t);
        crate::geometry::point_segment_distance(p, a, b)
            .min(crate::geometry::point_segment_distance(p, b, c))
            .min(crate::geometry::point_segment_distance(p, c, a))
    }

    pub fn interpolate(&self, nodal: &[f64], p: PlanePoint) -> Result<f64> {
        let (t, w) = self.locate(p)?;
        let [a, b, c] = self.mesh.triangles[t];
        Ok(w[0] * nodal[a] + w[1] * nodal[b] + w[2] * nodal[c])
    }
}

/// P1 interpolation of nodal values (one per mesh vertex) at `points`.
pub fn sample_field(mesh: &Mesh, nodal: &[f64], points: &[PlanePoint]) -> Result<Vec<f64>> {
    if nodal.len() != mesh.vertices.len() {
        return Err(Error::Argument(format!(
            "field has {} values for {} vertices",
            nodal.len(),
            mesh.vertices.len()
        )));
    }
    let loc = PointLocator::new(mesh);
    points.iter().map(|&p| loc.interpolate(nodal, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fundamental_domain, ArcRole, BoundaryArc};
    use std::f64::consts::PI;

    fn right_triangle() -> DomainSpec {
        let o = PlanePoint::new(0.0, 0.0);
        let a = PlanePoint::new(1.0, 0.0);
        let b = PlanePoint::new(0.0, 1.0);
        let seg = |a, b| BoundaryArc {
            tag: BoundaryTag::Neumann,
            role: ArcRole::Outer,
            curve: Curve::Segment { a, b },
        };
        DomainSpec {
            family: SymmetryFamily::OnePP,
            map: HomotopyMap::CircleH,
            t: 0.0,
            boundary: vec![seg(o, a), seg(a, b), seg(b, o)],
            side: 1.0,
            warnings: vec![],
            hole_sizes: vec![],
        }
    }

    #[test]
    fn coarse_triangle_is_itself() {
        let m = triangulate(&right_triangle(), 2.0).unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.triangles.len(), 1);
        assert_eq!(m.boundary_edges.len(), 3);
    }

    #[test]
    fn square_wedge_quality_and_count() {
        let spec = fundamental_domain(HomotopyMap::CarpetG(0), SymmetryFamily::OnePP, 0.0).unwrap();
        let h = 0.05;
        let m = triangulate(&spec, h).unwrap();
        let q = m.quality();
        assert!(q.min_angle >= 20f64.to_radians(), "min angle {}", q.min_angle.to_degrees());
        assert!(q.max_edge <= h * (1.0 + 1e-9));
        let a = 0.5;
        let n = q.n_triangles as f64;
        assert!(n >= 2.0 * a / (h * h) * 0.3 && n <= 2.0 * a / (h * h) * 3.0, "{n} triangles");
        assert!((m.area() - a).abs() < 1e-12);
    }

    #[test]
    fn sector_boundary_conforms() {
        let spec = fundamental_domain(HomotopyMap::CircleH, SymmetryFamily::OnePM, 0.0).unwrap();
        let m = triangulate(&spec, 0.1).unwrap();
        for e in &m.boundary_edges {
            for &v in &e.v {
                let d = spec
                    .boundary
                    .iter()
                    .map(|a| a.curve.distance(m.vertices[v]))
                    .fold(f64::INFINITY, f64::min);
                assert!(d < 1e-9);
            }
        }
        let dir = m.tagged_vertices(BoundaryTag::Dirichlet);
        assert!(dir.iter().any(|&d| d));
        // Dirichlet vertices lie on the θ = 0 ray.
        for (i, &d) in dir.iter().enumerate() {
            if d {
                assert!(m.vertices[i].y.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn triangulation_is_deterministic() {
        let spec = fundamental_domain(HomotopyMap::CarpetG(1), SymmetryFamily::Two, 1.0).unwrap();
        let a = triangulate(&spec, 0.04).unwrap();
        let b = triangulate(&spec, 0.04).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn circle_sector_area_converges() {
        let spec = fundamental_domain(HomotopyMap::CircleH, SymmetryFamily::OnePP, 0.0).unwrap();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| (triangulate(&spec, h).unwrap().area() - PI / 8.0).abs())
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.0, "area error ratio {ratio}");
        }
    }

    #[test]
    fn push_forward_examples() {
        let spec = fundamental_domain(HomotopyMap::CircleH, SymmetryFamily::OnePP, 0.0).unwrap();
        let m = triangulate(&spec, 0.05).unwrap();
        let same = push_forward(&m, HomotopyMap::CircleH, SymmetryFamily::OnePP, 0.0).unwrap();
        assert_eq!(same.vertices, m.vertices);
        let end = push_forward(&m, HomotopyMap::CircleH, SymmetryFamily::OnePP, 1.0).unwrap();
        assert_eq!(end.triangles, m.triangles);
        for e in &m.boundary_edges {
            for &v in &e.v {
                if (m.vertices[v].r() - 1.0).abs() < 1e-12 {
                    let p = end.vertices[v];
                    assert!((p.x.abs() + p.y.abs() - 1.0).abs() < 1e-9);
                }
            }
        }
        let mut mirrored = m.clone();
        for p in &mut mirrored.vertices {
            p.x = -p.x;
        }
        let err = push_forward(&mirrored, HomotopyMap::CircleH, SymmetryFamily::OnePP, 0.5);
        assert!(matches!(err, Err(Error::InvertedElement { .. })));
    }

    #[test]
    fn sampling_examples() {
        let spec = fundamental_domain(HomotopyMap::CarpetG(0), SymmetryFamily::OnePP, 1.0).unwrap();
        let m = triangulate(&spec, 0.1).unwrap();
        let ones = vec![1.0; m.vertices.len()];
        let xs: Vec<f64> = m.vertices.iter().map(|p| p.x).collect();
        let pts = [PlanePoint::new(0.5, 0.1), PlanePoint::new(0.9, 0.8)];
        for v in sample_field(&m, &ones, &pts).unwrap() {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let v = sample_field(&m, &xs, &[PlanePoint::new(0.5, 0.1)]).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12);
        // Inside the central hole.
        assert!(sample_field(&m, &xs, &[PlanePoint::new(0.2, 0.1)]).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let spec = fundamental_domain(HomotopyMap::CircleF, SymmetryFamily::Two, 0.4).unwrap();
        let m = triangulate(&spec, 0.1).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.boundary_edges, m.boundary_edges);
    }

    #[test]
    fn hole_below_resolution_rejected() {
        let spec = fundamental_domain(HomotopyMap::CarpetG(0), SymmetryFamily::OnePP, 0.01).unwrap();
        assert!(!spec.warnings.is_empty());
        assert!(triangulate(&spec, 0.05).is_err());
    }

    #[test]
    fn red_refinement_is_valid() {
        let spec = fundamental_domain(HomotopyMap::CarpetG(1), SymmetryFamily::OneMP, 1.0).unwrap();
        let m = triangulate(&spec, 0.08).unwrap();
        let r = refine_uniform(&m);
        r.validate().unwrap();
        assert_eq!(r.triangles.len(), 4 * m.triangles.len());
        assert!((r.area() - m.area()).abs() < 1e-13);
    }
}
