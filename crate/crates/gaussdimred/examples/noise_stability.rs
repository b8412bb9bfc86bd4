//! Noise stability E[<f(X), f(Y)>] under rho-correlated inputs, and how
//! well the dimension-reduction pipeline preserves it together with the
//! output mean.
//!
//! Stability is the one-strategy diagonal of the simulation problem: a
//! transformation that preserves joint distributions must preserve it up
//! to the same budget. Run with
//! `cargo run --release --example noise_stability`.

use gaussdimred::pipelines::{noise_stability, stability_dimension_reduction, Overrides, PipelineOptions};
use gaussdimred::poly::{HermitePolynomial, MultiIndex, VectorFunction};
use gaussdimred::simplex::projected;

const RHO: f64 = 0.6;
const EPS: f64 = 0.1;

fn main() {
    // The halfspace pair (1/2 +- x/2) rounded to the simplex.
    let pair = vec![
        HermitePolynomial::from_terms(
            1,
            vec![(MultiIndex::empty(), 0.5), (MultiIndex::single(0, 1), 0.5)],
        )
        .unwrap(),
        HermitePolynomial::from_terms(
            1,
            vec![(MultiIndex::empty(), 0.5), (MultiIndex::single(0, 1), -0.5)],
        )
        .unwrap(),
    ];
    let f = projected(&VectorFunction::from_polys(pair.clone()).unwrap());

    // Stability rises with rho: independent inputs give sum of squared
    // means, perfectly correlated inputs give the squared norm.
    println!("rho    E<f(X), f(Y)>");
    for &rho in &[0.0, 0.3, 0.6, 0.9] {
        let s = noise_stability(&f, rho, 100_000, 2, 1).unwrap();
        println!("{rho:<5}  {:.5} +- {:.5}", s.mean, s.std_error);
    }

    // Through the pipeline at desk-scale overrides.
    let opts = PipelineOptions {
        overrides: Overrides {
            d: Some(2),
            t: Some(16),
            big_d: Some(1000),
            h: None,
        },
        samples: 30_000,
        seed: 9,
        ..PipelineOptions::default()
    };
    let (strategy, report) = stability_dimension_reduction(&pair, RHO, EPS, &opts).unwrap();
    println!(
        "\npipeline output: degree {} on {} inputs",
        strategy.degree(),
        strategy.num_inputs()
    );
    println!(
        "stability {:.4} +- {:.4}  ->  {:.4} +- {:.4}",
        report.stability_before.mean,
        report.stability_before.std_error,
        report.stability_after.mean,
        report.stability_after.std_error
    );
    println!(
        "mean drift ||E f - E f~||_1 = {:.4} +- {:.4}",
        report.mean_drift_l1, report.mean_drift_std_error
    );

    let budget = EPS
        + 4.0 * (report.stability_before.std_error + report.stability_after.std_error)
        + 0.05;
    assert!((report.stability_before.mean - report.stability_after.mean).abs() <= budget);
    assert!(report.mean_drift_l1 <= budget);
}
