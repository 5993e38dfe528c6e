use criterion::{criterion_group, criterion_main, Criterion};
use spectral_homotopy::geometry::fundamental_domain;
use spectral_homotopy::track::{match_modes, Homotopy, SweepOptions};
use spectral_homotopy::{assemble, push_forward, smallest_eigenpairs, triangulate, HomotopyMap, SymmetryFamily};

const H: f64 = 1.0 / 32.0;

fn kernels(c: &mut Criterion) {
    let map = HomotopyMap::CircleH;
    let fam = SymmetryFamily::OnePP;
    let spec = fundamental_domain(map, fam, 0.0).unwrap();
    c.bench_function("triangulate disc wedge h=1/32", |b| b.iter(|| triangulate(&spec, H).unwrap()));

    let mesh = triangulate(&spec, H).unwrap();
    c.bench_function("push forward to t=0.5", |b| b.iter(|| push_forward(&mesh, map, fam, 0.5).unwrap()));
    c.bench_function("assemble", |b| b.iter(|| assemble(&mesh).unwrap()));

    let pencil = assemble(&mesh).unwrap();
    let mut g = c.benchmark_group("eigensolve");
    g.sample_size(10);
    g.bench_function("17 smallest pairs", |b| b.iter(|| smallest_eigenpairs(&pencil, 17, 1e-9).unwrap()));
    g.finish();

    let hom = Homotopy::new(map, fam, H, SweepOptions::default()).unwrap();
    let (s0, s1) = (hom.solve(0.5).unwrap(), hom.solve(0.6).unwrap());
    c.bench_function("match modes", |b| {
        b.iter(|| match_modes(&s0.spectrum, &s1.spectrum, &s1.pencil.m).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
