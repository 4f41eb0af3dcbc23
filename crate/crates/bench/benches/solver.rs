use criterion::{black_box, criterion_group, criterion_main, Criterion};
use foaloc::calibration::{calibrate_all, CalibrationContext};
use foaloc::harness::{default_initial_guess, run_point, run_trial, SolverOptions};
use foaloc::measurement::synthesize;
use foaloc::solver::{build_system, SystemParams};
use foaloc::{newton_solve, Method, Mode, Scenario, Selection, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn newton(c: &mut Criterion) {
    let s = Scenario::meo();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ms = synthesize(&s, &mut rng).unwrap();
    let obs = calibrate_all(&ms, &CalibrationContext::of(&s).unwrap()).unwrap();
    let u0 = default_initial_guess(&s).unwrap();
    for method in [Method::Foa, Method::Fdoa] {
        let params = SystemParams { gateway: s.gateway_ecef().unwrap(), f_u: s.f_u, earth: s.earth, method, mode: Mode::Gateway };
        let sys = build_system(&obs, &Selection::Random(6), params, &mut rng).unwrap();
        let cfg = SolverConfig::new(u0);
        c.bench_function(&format!("newton_solve/{method}/N=6"), |b| b.iter(|| newton_solve(black_box(&sys), &cfg).unwrap()));
    }
}

fn trials(c: &mut Criterion) {
    let s = Scenario::meo();
    let opts = SolverOptions::default();
    c.bench_function("run_trial/meo/N=6", |b| b.iter(|| run_trial(black_box(&s), 6, 42, &opts).unwrap()));
    let mut g = c.benchmark_group("run_point");
    g.sample_size(10);
    g.bench_function("meo/N=6/500 trials", |b| b.iter(|| run_point(&s, 6, 500, 0, 0, &opts).unwrap()));
    g.finish();
}

criterion_group!(benches, newton, trials);
criterion_main!(benches);
