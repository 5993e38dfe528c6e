use std::f64::consts::PI;

use proptest::prelude::*;
use spectral_homotopy::eigsolve::{smallest_eigenpairs_with, SolverOptions, DEFAULT_TOL};
use spectral_homotopy::geometry::{cell_centers, eval_carpet_g0, eval_carpet_gj, eval_circle_f, eval_circle_h, fold_angle, unfold_angle};
use spectral_homotopy::mesh::refine_uniform;
use spectral_homotopy::oracle::bessel::{bessel_j, jprime_zero};
use spectral_homotopy::report::{parse_trajectories_csv, summary_svg, trajectories_csv, EventRow, TrajectoryRow};
use spectral_homotopy::sparse::{dot, CsrMatrix};
use spectral_homotopy::track::{match_vectors, sweep_with, Homotopy};
use spectral_homotopy::*;

fn family() -> impl Strategy<Value = SymmetryFamily> {
    prop::sample::select(SymmetryFamily::ALL.to_vec())
}

fn circle_map() -> impl Strategy<Value = HomotopyMap> {
    prop::sample::select(vec![HomotopyMap::CircleH, HomotopyMap::CircleF])
}

/// Point of the picture frame `1/3 < max(|x|,|y|) < 1`, kept off its edges.
fn frame_point() -> impl Strategy<Value = PlanePoint> {
    (0.34f64..0.999, -1.0f64..1.0, 0usize..4).prop_map(|(m, s, side)| {
        let (x, y) = (m, s * m);
        match side {
            0 => PlanePoint::new(x, y),
            1 => PlanePoint::new(-y, x),
            2 => PlanePoint::new(-x, -y),
            _ => PlanePoint::new(y, -x),
        }
    })
}

fn square_wedge(h: f64) -> Mesh {
    let spec = fundamental_domain(HomotopyMap::CarpetG(0), SymmetryFamily::OnePP, 0.0).unwrap();
    triangulate(&spec, h).unwrap()
}

fn pencil_for(map: HomotopyMap, fam: SymmetryFamily, h: f64) -> (Mesh, Pencil) {
    let spec = fundamental_domain(map, fam, 0.0).unwrap();
    let mesh = triangulate(&spec, h).unwrap();
    let pencil = assemble(&mesh).unwrap();
    (mesh, pencil)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_endpoints(r in 0.0f64..1.0, theta in -PI..PI, q in frame_point()) {
        let p = PlanePoint::from_polar(r, theta);
        for got in [eval_circle_h(0.0, p).unwrap(), eval_circle_f(0.0, p).unwrap()] {
            prop_assert!(got.dist(&p) <= 1e-14);
        }
        prop_assert!(eval_carpet_g0(0.0, q).unwrap().dist(&q) <= 1e-14);
    }

    #[test]
    fn outer_boundary_is_fixed(t in 0.0f64..=1.0, s in -1.0f64..=1.0, side in 0usize..4) {
        let p = [PlanePoint::new(1.0, s), PlanePoint::new(-s, 1.0), PlanePoint::new(-1.0, -s), PlanePoint::new(s, -1.0)][side];
        prop_assert!(eval_carpet_g0(t, p).unwrap().dist(&p) <= 1e-14);
    }

    #[test]
    fn level_one_map_is_conjugated_level_zero(t in 0.0f64..=1.0, q in frame_point(), cell in 0usize..8) {
        let c = cell_centers()[cell];
        let p = PlanePoint::new(q.x / 3.0 + c.x, q.y / 3.0 + c.y);
        let inner = eval_carpet_g0(t, q).unwrap();
        let want = PlanePoint::new(inner.x / 3.0 + c.x, inner.y / 3.0 + c.y);
        prop_assert!(eval_carpet_gj(1, t, p).unwrap().dist(&want) <= 1e-13);
    }

    #[test]
    fn rays_stay_monotone(map in circle_map(), t in 0.0f64..=1.0, theta in 0.0..PI / 4.0) {
        let mut last = -1.0;
        for k in 0..=50 {
            let p = PlanePoint::from_polar(k as f64 / 50.0, theta);
            let r = map.apply(t, p).unwrap().r();
            prop_assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn fold_then_unfold(theta in -10.0f64..10.0) {
        let (a, refl, q) = fold_angle(theta);
        prop_assert!((0.0..=PI / 4.0 + 1e-15).contains(&a));
        prop_assert!((unfold_angle(a, refl, q) - theta).abs() <= 1e-12);
    }

    #[test]
    fn check_classification(min_e in 0.0f64..1e-2, swap: bool, threshold in 1e-6f64..1e-3) {
        let kind = EventKind::classify(min_e, swap, threshold);
        let want = if min_e > threshold { EventKind::Collision } else if swap { EventKind::Crossing } else { EventKind::NonCrossing };
        prop_assert_eq!(kind, want);
    }

    #[test]
    fn matching_is_bijective(n in 2usize..12, seed in any::<u64>(), noise in 0.0f64..0.6) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = n + 3;
        let mass = CsrMatrix::from_triplets(dim, &(0..dim).map(|i| (i, i, 1.0)).collect::<Vec<_>>());
        let a: Vec<Vec<f64>> = (0..n).map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let mut b: Vec<Vec<f64>> = a
            .iter()
            .map(|v| v.iter().map(|x| x + noise * rng.random_range(-1.0..1.0)).collect())
            .collect();
        let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
        b = perm.iter().map(|&i| b[i].clone()).collect();
        let m = match_vectors(&a, &b, &mass).unwrap();
        let mut seen = vec![false; n];
        for &p in &m.permutation {
            prop_assert!(p < n && !seen[p]);
            seen[p] = true;
        }
        if noise == 0.0 {
            for (i, &p) in m.permutation.iter().enumerate() {
                prop_assert_eq!(perm[p], i);
            }
        }
    }

    #[test]
    fn csv_roundtrip(rows in prop::collection::vec(
        (family(), 0usize..40, 0.0f64..5.0, -1e3f64..1e6, prop::num::f64::NORMAL, 0.0f64..1e-6), 0..30)
    ) {
        let rows: Vec<TrajectoryRow> = rows
            .into_iter()
            .map(|(family, mode_id, t_global, lambda_raw, lambda_normalized, residual)| TrajectoryRow {
                run_id: "00ff".into(),
                family,
                mode_id,
                t_global,
                lambda_raw,
                lambda_normalized,
                residual,
            })
            .collect();
        prop_assert_eq!(parse_trajectories_csv(&trajectories_csv(&rows)).unwrap(), rows);
    }

    #[test]
    fn config_roundtrip(map in prop::sample::select(vec!["circleH", "circleF", "carpetG0", "carpetG2"]),
                        fams in prop::sample::subsequence(SymmetryFamily::ALL.to_vec(), 1..=5),
                        h in 0.001f64..0.25, n in 1usize..=50, seed in any::<u64>(), count in 2usize..40) {
        let mut cfg = RunConfig::default();
        cfg.set("map", map).unwrap();
        cfg.families = fams;
        cfg.h = h;
        cfg.n_modes = n;
        cfg.seed = seed;
        cfg.grid = GridSpec::Count(count);
        cfg.validate().unwrap();
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_fields_are_reproduced(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
                                    pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..20)) {
        let mesh = square_wedge(0.1);
        let f = |p: PlanePoint| a + b * p.x + c * p.y;
        let nodal: Vec<f64> = mesh.vertices.iter().map(|&p| f(p)).collect();
        // Points of the wedge 0 ≤ y ≤ x ≤ 1.
        let points: Vec<PlanePoint> = pts.iter().map(|&(u, v)| PlanePoint::new(u, u * v)).collect();
        let got = sample_field(&mesh, &nodal, &points).unwrap();
        for (p, g) in points.iter().zip(got) {
            prop_assert!((g - f(*p)).abs() <= 1e-12 * (1.0 + a.abs() + b.abs() + c.abs()));
        }
    }

    #[test]
    fn nodal_band_grows_with_width(coef in prop::array::uniform6(-1.0f64..1.0), e1 in 0.001f64..0.3, de in 0.0f64..0.3) {
        let mesh = square_wedge(0.1);
        let f = |p: &PlanePoint| coef[0] + coef[1] * p.x + coef[2] * p.y + coef[3] * p.x * p.x + coef[4] * p.x * p.y + coef[5] * p.y * p.y;
        let nodal: Vec<f64> = mesh.vertices.iter().map(f).collect();
        let narrow = nodal_band(&mesh, &nodal, e1).unwrap().area();
        let wide = nodal_band(&mesh, &nodal, e1 + de).unwrap().area();
        prop_assert!(narrow <= wide + 1e-12);
        prop_assert!(wide <= mesh.area() + 1e-12);
    }

    #[test]
    fn pushed_meshes_stay_valid(map in circle_map(), fam in family(), t in 0.0f64..=1.0) {
        let spec = fundamental_domain(map, fam, 0.0).unwrap();
        let reference = triangulate(&spec, 0.05).unwrap();
        let pushed = push_forward(&reference, map, fam, t).unwrap();
        prop_assert_eq!(&pushed.triangles, &reference.triangles);
        prop_assert!((0..pushed.triangles.len()).all(|k| pushed.triangle_area(k) > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solves_are_orthonormal_with_small_residuals(map in circle_map(), fam in family(), t in 0.0f64..=1.0, n in 1usize..8) {
        let hom = Homotopy::new(map, fam, 1.0 / 12.0, SweepOptions { n_modes: n, ..SweepOptions::default() }).unwrap();
        let snap = hom.solve(t).unwrap();
        let s = &snap.spectrum;
        for (i, a) in s.vectors.iter().enumerate() {
            let ma = snap.pencil.m.mul(a);
            for (j, b) in s.vectors.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(b, &ma) - want).abs() <= 1e-8);
            }
        }
        prop_assert!(s.residuals.iter().all(|&r| r <= 1e-6));
        prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fixed_seed_is_deterministic(fam in family(), seed in any::<u64>()) {
        let (_, pencil) = pencil_for(HomotopyMap::CircleF, fam, 1.0 / 16.0);
        let opts = SolverOptions { tol: DEFAULT_TOL, seed };
        let a = smallest_eigenpairs_with(&pencil, 6, &opts).unwrap();
        let b = smallest_eigenpairs_with(&pencil, 6, &opts).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn scaling_divides_eigenvalues(fam in family(), s in 0.25f64..4.0) {
        let (mesh, pencil) = pencil_for(HomotopyMap::CarpetG(0), fam, 0.125);
        let mut scaled = mesh.clone();
        scaled.vertices.iter_mut().for_each(|p| *p = PlanePoint::new(s * p.x, s * p.y));
        let a = smallest_eigenpairs(&pencil, 4, DEFAULT_TOL).unwrap();
        let b = smallest_eigenpairs(&assemble(&scaled).unwrap(), 4, DEFAULT_TOL).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((y * s * s - x).abs() <= 1e-10 * x.max(1.0));
        }
    }
}

#[test]
fn pencils_are_exactly_symmetric_with_one_kernel_vector() {
    for map in [HomotopyMap::CircleH, HomotopyMap::CarpetG(0)] {
        for fam in SymmetryFamily::ALL {
            let (_, p) = pencil_for(map, fam, 1.0 / 16.0);
            assert_eq!(p.k.asymmetry(), 0.0);
            assert_eq!(p.m.asymmetry(), 0.0);
            let s = smallest_eigenpairs(&p, 3, DEFAULT_TOL).unwrap();
            let kernel = s.eigenvalues.iter().filter(|&&l| l < 1e-10).count();
            assert_eq!(kernel, usize::from(fam.has_constant()), "{map} {fam}: {:?}", s.eigenvalues);
        }
    }
}

#[test]
fn cosine_rayleigh_quotient_converges() {
    // cos(πx) on the square wedge: Rayleigh quotient → π² at second order.
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            let mesh = square_wedge(h);
            let p = assemble(&mesh).unwrap();
            let v: Vec<f64> = p.vertex_of_dof.iter().map(|&i| (PI * mesh.vertices[i].x).cos()).collect();
            let q = dot(&v, &p.k.mul(&v)) / dot(&v, &p.m.mul(&v));
            (q - PI * PI).abs()
        })
        .collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] > 3.0, "{errs:?}");
    }
}

#[test]
fn nested_refinement_lowers_eigenvalues() {
    let mut mesh = square_wedge(0.2);
    let mut last: Option<Vec<f64>> = None;
    for _ in 0..3 {
        let s = smallest_eigenpairs(&assemble(&mesh).unwrap(), 5, DEFAULT_TOL).unwrap();
        if let Some(prev) = &last {
            for (a, b) in s.eigenvalues.iter().zip(prev) {
                assert!(*a <= b + 1e-10, "{:?} vs {prev:?}", s.eigenvalues);
            }
        }
        last = Some(s.eigenvalues);
        mesh = refine_uniform(&mesh);
    }
}

#[test]
fn bessel_derivative_vanishes_at_computed_zeros() {
    for m in 0..12u32 {
        for k in 1..6u32 {
            let z = jprime_zero(m, k).unwrap();
            // J_{-1} = −J_1.
            let below = if m == 0 { -bessel_j(1, z).unwrap() } else { bessel_j(m - 1, z).unwrap() };
            let d = 0.5 * (below - bessel_j(m + 1, z).unwrap());
            assert!(d.abs() <= 1e-9, "m={m} k={k}: {d:e}");
        }
    }
}

#[test]
fn finer_grids_give_smaller_steps() {
    let hom = Homotopy::new(
        HomotopyMap::CircleH,
        SymmetryFamily::OneMM,
        1.0 / 12.0,
        SweepOptions { n_modes: 4, refine: false, ..SweepOptions::default() },
    )
    .unwrap();
    let coarse: Vec<f64> = (0..=5).map(|k| k as f64 / 5.0).collect();
    let fine: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let a = sweep_with(&hom, &coarse).unwrap();
    let b = sweep_with(&hom, &fine).unwrap();
    assert!(b.max_relative_jump() < a.max_relative_jump());
    assert!(a.events.iter().chain(&b.events).all(|e| e.is_consistent()));
}

#[test]
fn summary_svg_is_well_formed() {
    let rows: Vec<TrajectoryRow> = (0..3)
        .flat_map(|m| {
            (0..5).map(move |i| TrajectoryRow {
                run_id: "r".into(),
                family: SymmetryFamily::Two,
                mode_id: m,
                t_global: i as f64 / 4.0,
                lambda_raw: (m + 1) as f64 + 0.1 * i as f64,
                lambda_normalized: (m + 1) as f64,
                residual: 0.0,
            })
        })
        .collect();
    let events = vec![EventRow {
        family: SymmetryFamily::Two,
        mode_a: 1,
        mode_b: 2,
        t_star: 0.5,
        min_e: 1e-3,
        kind: EventKind::Collision,
    }];
    let svg = summary_svg(SymmetryFamily::Two, &rows, &events);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 3);
}
