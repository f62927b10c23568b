use nalgebra::DMatrix;
use optdesign::criteria::{design_value, efficiency, info_matrix_full, Criterion};
use optdesign::marginal_opt::{optimal_product, optimal_product_with, SolverOptions};
use optdesign::model::{
    factorial_covariates, onehot_covariates, presets, ApproxDesign, CovariateWeights, ExactDesign,
    InterestSpec, ModelSpec,
};
use optdesign::rounding::{covariate_strata, efficient_round, stratum_argmax_round};
use optdesign::sparsify::{
    refine_on_support, sparsify, theorem3_constraints, transfer_residual, verify_transfer,
    SparsifyOptions, UserConstraint,
};

fn example1() -> (ModelSpec, InterestSpec) {
    let g = factorial_covariates(&vec![vec![-1.0, 1.0]; 3]).unwrap();
    let spec = ModelSpec::new(vec![9.0, 1.0, 1.0], g).unwrap();
    let interest =
        InterestSpec::new(presets::control_contrasts(3), DMatrix::identity(3, 3)).unwrap();
    (spec, interest)
}

fn example2() -> (ModelSpec, InterestSpec) {
    let spec = ModelSpec::new(vec![4.0, 1.0, 1.0], onehot_covariates(&[3, 5]).unwrap()).unwrap();
    let interest =
        InterestSpec::new(presets::centering(3), presets::centered_groups(&[3, 5])).unwrap();
    (spec, interest)
}

fn example3() -> (ModelSpec, InterestSpec) {
    let total: f64 = (1..=6).map(|j| (j as f64).exp()).sum();
    let g = DMatrix::from_fn(6, 1, |k, _| ((k + 1) as f64).exp() / total);
    let spec = ModelSpec::new(vec![1.0, 1.0, 2.0, 3.0], g).unwrap();
    let interest = InterestSpec::new(presets::control_contrasts(4), presets::no_covariates(1)).unwrap();
    (spec, interest)
}

const TABLE2: [f64; 24] = [
    0.0378, 0.0, 0.0212, 0.0591, 0.0212, 0.0591, 0.0378, 0.0, //
    0.0, 0.1909, 0.0, 0.0, 0.0, 0.0, 0.1909, 0.0, //
    0.1909, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1909,
];

const TABLE3: [u64; 24] = [
    2, 0, 1, 3, 1, 3, 2, 0, //
    0, 9, 0, 0, 0, 0, 9, 0, //
    9, 0, 0, 0, 0, 0, 0, 9,
];

/// Table 5 laid out as treatment-major, then row level, then column level.
const TABLE5: [f64; 45] = [
    0.0303, 0.0121, 0.0303, 0.0121, 0.0061, //
    0.0061, 0.0303, 0.0121, 0.0242, 0.0182, //
    0.0182, 0.0121, 0.0121, 0.0182, 0.0303, //
    0.0, 0.0, 0.0, 0.0485, 0.0727, //
    0.0242, 0.0, 0.0727, 0.0242, 0.0, //
    0.0485, 0.0727, 0.0, 0.0, 0.0, //
    0.0, 0.0727, 0.0, 0.0242, 0.0242, //
    0.0727, 0.0, 0.0, 0.0, 0.0485, //
    0.0, 0.0, 0.0727, 0.0485, 0.0,
];

const TABLE7: [f64; 24] = [
    0.0880, 0.1667, 0.0552, 0.0166, 0.0, 0.1048, //
    0.0787, 0.0, 0.0, 0.0, 0.1667, 0.0036, //
    0.0, 0.0, 0.0, 0.1501, 0.0, 0.0260, //
    0.0, 0.0, 0.1115, 0.0, 0.0, 0.0323,
];

#[test]
fn example1_pipeline() {
    let (spec, interest) = example1();
    let sol = optimal_product(&spec, &interest, Criterion::A, &SolverOptions::default()).unwrap();
    assert!((sol.design.weight(0, 0) - 0.0295).abs() < 5e-4);
    assert!((sol.design.weight(1, 0) - 0.0477).abs() < 5e-4);

    let (xs, report) =
        sparsify(&spec, &interest, Criterion::A, &sol.design, &[], &SparsifyOptions::default()).unwrap();
    assert!(report.output_support <= 10, "{report:?}");
    assert!((report.criterion_output / report.criterion_input - 1.0).abs() < 1e-8);
    let (w, a) = sol.design.marginals();
    assert!(verify_transfer(&spec, &xs, &w, &a, &interest));

    let product = efficient_round(&sol.design, 48).unwrap();
    assert!(product.counts().iter().all(|&c| c == 2));
    let eff = efficiency(&spec, &product, &sol.design, &interest, Criterion::A).unwrap();
    assert!((eff - 0.9641).abs() < 1e-3, "{eff}");
}

#[test]
fn example1_loaded_table() {
    let (spec, interest) = example1();
    let sol = optimal_product(&spec, &interest, Criterion::A, &SolverOptions::default()).unwrap();
    let table = ApproxDesign::from_unnormalized(3, 8, TABLE2.to_vec()).unwrap();
    let exact = efficient_round(&table, 48).unwrap();
    assert_eq!(exact.counts(), &TABLE3);
    let eff = efficiency(&spec, &exact, &sol.design, &interest, Criterion::A).unwrap();
    assert!((eff - 0.9991).abs() < 1e-3, "{eff}");

    let (w, a) = sol.design.marginals();
    assert!(transfer_residual(&spec, &table, &w, &a, &interest).unwrap() < 1e-3);
    let cs = theorem3_constraints(&spec, &interest, &w, &a).unwrap();
    let (snapped, moved) = refine_on_support(&cs, &table).unwrap();
    assert!(moved <= 1e-4);
    assert!(verify_transfer(&spec, &snapped, &w, &a, &interest));
    let v = design_value(&spec, &snapped, &interest, Criterion::A).unwrap();
    assert!((v / sol.criterion_value - 1.0).abs() < 1e-8);
}

#[test]
fn example2_pipeline() {
    let (spec, interest) = example2();
    let sol = optimal_product(&spec, &interest, Criterion::E, &SolverOptions::default()).unwrap();
    assert!((sol.covariate.criterion_value - 0.2).abs() < 1e-9);
    assert!(sol.design.weights()[..15].iter().all(|w| (w - 0.0182).abs() < 5e-4));
    assert!(sol.design.weights()[15..].iter().all(|w| (w - 0.0242).abs() < 5e-4));
    assert_eq!(sol.design.support_size(), 45);

    let (xs, report) =
        sparsify(&spec, &interest, Criterion::E, &sol.design, &[], &SparsifyOptions::default()).unwrap();
    assert!(report.output_support <= 28, "{report:?}");
    assert!(report.output_support <= report.rank);
    let v = design_value(&spec, &xs, &interest, Criterion::E).unwrap();
    assert!((v / sol.criterion_value - 1.0).abs() < 1e-6);
}

#[test]
fn example2_loaded_table() {
    let (spec, interest) = example2();
    let sol = optimal_product(&spec, &interest, Criterion::E, &SolverOptions::default()).unwrap();
    let table = ApproxDesign::from_unnormalized(3, 15, TABLE5.to_vec()).unwrap();
    let (w, a) = sol.design.marginals();
    assert!(transfer_residual(&spec, &table, &w, &a, &interest).unwrap() < 1e-3);
    let cs = theorem3_constraints(&spec, &interest, &w, &a).unwrap();
    let (snapped, moved) = refine_on_support(&cs, &table).unwrap();
    assert!(moved <= 1e-4, "{moved}");
    assert!(verify_transfer(&spec, &snapped, &w, &a, &interest));
    let v = design_value(&spec, &snapped, &interest, Criterion::E).unwrap();
    assert!((v / sol.criterion_value - 1.0).abs() < 1e-8);
}

#[test]
fn example3_pipeline() {
    let (spec, interest) = example3();
    let alpha = CovariateWeights::uniform(6);
    let sol = optimal_product_with(&spec, &interest, Criterion::A, Some(&alpha), &SolverOptions::default())
        .unwrap();
    for (w, e) in sol.treatment.weights.iter().zip([0.431, 0.249, 0.176, 0.144]) {
        assert!((w - e).abs() < 1e-3);
    }
    let user: Vec<UserConstraint> = (0..6)
        .map(|k| UserConstraint::covariate_marginal(4, 6, k, 1.0 / 6.0))
        .collect();
    let (xs, report) =
        sparsify(&spec, &interest, Criterion::A, &sol.design, &user, &SparsifyOptions::default()).unwrap();
    assert!(report.output_support <= 12, "{report:?}");
    let (_, a) = xs.marginals();
    assert!(a.iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-9));

    let table = ApproxDesign::from_unnormalized(4, 6, TABLE7.to_vec()).unwrap();
    let exact = stratum_argmax_round(&table, &covariate_strata(4, 6)).unwrap();
    let expected = ExactDesign::new(
        4,
        6,
        vec![
            1, 1, 0, 0, 0, 1, //
            0, 0, 0, 0, 1, 0, //
            0, 0, 0, 1, 0, 0, //
            0, 0, 1, 0, 0, 0,
        ],
    )
    .unwrap();
    assert_eq!(exact, expected);
    let eff = efficiency(&spec, &exact, &sol.design, &interest, Criterion::A).unwrap();
    assert!((eff - 0.8871).abs() < 1e-3, "{eff}");

    // the product design rounds to a single treatment
    let singular = stratum_argmax_round(&sol.design, &covariate_strata(4, 6)).unwrap();
    assert_eq!(
        efficiency(&spec, &singular, &sol.design, &interest, Criterion::A).unwrap(),
        0.0
    );
    assert!(info_matrix_full(&spec, &singular.to_approx().unwrap(), &interest).is_err());
}
