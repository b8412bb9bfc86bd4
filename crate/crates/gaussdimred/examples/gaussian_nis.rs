//! The full Gaussian non-interactive-simulation pipeline: smooth,
//! multilinearize, dimension-reduce, project. Both strategies end up on a
//! shared low-dimensional domain with the induced joint distribution moved
//! by at most eps in total variation.
//!
//! The theoretical schedules are astronomically conservative, so this run
//! pins desk-scale values (d = 2, t = 16, D = 2000) via overrides; the
//! stage reports still carry the schedule values alongside. Run with
//! `cargo run --release --example gaussian_nis`.

use gaussdimred::pipelines::{gaussian_nis, Overrides, PipelineOptions};
use gaussdimred::poly::{HermitePolynomial, MultiIndex};

const RHO: f64 = 0.6;
const EPS: f64 = 0.1;

fn halfspace_pair() -> Vec<HermitePolynomial> {
    // (1/2 + x/2, 1/2 - x/2): the sign-of-x partition written in [0, 1].
    let comp = |sign: f64| {
        HermitePolynomial::from_terms(
            1,
            vec![
                (MultiIndex::empty(), 0.5),
                (MultiIndex::single(0, 1), sign * 0.5),
            ],
        )
        .unwrap()
    };
    vec![comp(1.0), comp(-1.0)]
}

fn main() {
    let a = halfspace_pair();
    let opts = PipelineOptions {
        overrides: Overrides {
            d: Some(2),
            t: Some(16),
            big_d: Some(2000),
            h: None,
        },
        samples: 30_000,
        seed: 17,
        ..PipelineOptions::default()
    };

    // A = B: the B-side work is skipped and both handles share one object.
    let (a_tilde, b_tilde, report) = gaussian_nis(&a, &a, RHO, EPS, &opts).unwrap();
    assert!(a_tilde.function().same_object(b_tilde.function()));

    println!(
        "pipeline {} at rho = {RHO}, eps = {EPS} (delta = {:.2e})",
        report.pipeline, report.delta
    );
    for stage in &report.stages {
        let c = &stage.correlation_after[0][0];
        println!(
            "  {:<15} <A_0, B_0> = {:.5} +- {:.5}  [{}]",
            stage.name, c.value, c.std_error, stage.params
        );
    }

    // The output strategy maps R^2000 into Delta_2 by construction.
    assert_eq!(a_tilde.num_inputs(), 2000);
    assert_eq!(a_tilde.k(), 2);
    assert!(a_tilde.degree() <= 2);
    let point = vec![0.25; 2000];
    let v = a_tilde.eval(&point).unwrap();
    assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9 && v.iter().all(|p| *p >= 0.0));

    // The quantity that matters: TV between the induced joints.
    let tv = &report.tv_before_after;
    println!(
        "TV(initial joint, final joint) = {:.4} +- {:.4} (target <= {EPS} up to MC noise)",
        tv.value, tv.std_error
    );
    assert!(tv.value <= 0.15);

    // Obliviousness: the A-side output is a function of (A, rho, eps, opts)
    // only. Re-run with a different B and compare evaluations bitwise.
    let other_b = vec![
        HermitePolynomial::constant(1, 0.3),
        HermitePolynomial::constant(1, 0.7),
    ];
    let (a_again, _, _) = gaussian_nis(&a, &other_b, RHO, EPS, &opts).unwrap();
    let (u, w) = (a_tilde.eval(&point).unwrap(), a_again.eval(&point).unwrap());
    assert!(u.iter().zip(&w).all(|(x, y)| x.to_bits() == y.to_bits()));
    println!("A-side output is bit-identical under a different B (oblivious)");
}
