use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion as Bench};
use nalgebra::DMatrix;

use optdesign::criteria::{phi_p, product_info, Criterion};
use optdesign::marginal_opt::{optimal_product, simplex_grid_oracle, SolverOptions};
use optdesign::model::{factorial_covariates, presets, CovariateWeights, InterestSpec, ModelSpec, TreatmentWeights};
use optdesign::par::Execution;
use optdesign::sparsify::{sparsify, SparsifyOptions};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn model() -> (ModelSpec, InterestSpec) {
    let g = factorial_covariates(&vec![vec![-1.0, 1.0]; 3]).unwrap();
    let spec = ModelSpec::new(vec![9.0, 1.0, 1.0, 2.0], g).unwrap();
    let interest = InterestSpec::new(presets::control_contrasts(4), DMatrix::identity(3, 3)).unwrap();
    (spec, interest)
}

fn grid_oracle(c: &mut Bench) {
    let (spec, interest) = model();
    let alpha = CovariateWeights::uniform(spec.d());
    let s = interest.rank();
    let objective = |w: &[f64]| {
        let Ok(w) = TreatmentWeights::new(w.to_vec()) else {
            return f64::NEG_INFINITY;
        };
        product_info(&spec, &w, &alpha, &interest)
            .map(|n| phi_p(&n, Criterion::A, s))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut group = c.benchmark_group("grid_oracle");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, 60), |b| {
            b.iter(|| simplex_grid_oracle(objective, 4, 60, exec).unwrap())
        });
    }
    group.finish();
}

fn sparsify_restarts(c: &mut Bench) {
    let (spec, interest) = model();
    let sol = optimal_product(&spec, &interest, Criterion::A, &SolverOptions::default()).unwrap();
    let mut group = c.benchmark_group("sparsify");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = SparsifyOptions {
            exec,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::new(name, opts.restarts), |b| {
            b.iter(|| sparsify(&spec, &interest, Criterion::A, &sol.design, &[], &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, grid_oracle, sparsify_restarts);
criterion_main!(benches);
