//! Multilinearization: each source variable becomes an average of `t` fresh
//! variables and only the multilinear part of the image is kept.
//!
//! The image lives on `n t` variables, every fresh variable in a block
//! carries the same influence (at most d/t of the block's mass), and the
//! discarded non-multilinear mass shrinks like d^2/t. Run with
//! `cargo run --release --example multilinearization`.

use gaussdimred::poly::{exact_correlation, HermitePolynomial, MultiIndex};
use gaussdimred::transforms::{multilin_params, multilinear_image_stats, multilinearize};

fn main() {
    // A = 0.6 h1(x0) + 0.5 h2(x0), degree d = 2, unit-free test input.
    let a = HermitePolynomial::from_terms(
        1,
        vec![
            (MultiIndex::single(0, 1), 0.6),
            (MultiIndex::single(0, 2), 0.5),
        ],
    )
    .unwrap();
    let d = a.degree();

    println!("t     kept mass   dropped     max influence   d/t bound");
    for &t in &[4usize, 16, 64, 256] {
        let stats = multilinear_image_stats(&a, t).unwrap();
        let image = multilinearize(&a, t).unwrap();
        assert!(image.is_multilinear());
        assert_eq!(image.num_vars(), t);

        // Exact image norm matches the closed-form stats.
        let norm_sq = image.functionals().norm2_sq;
        assert!((norm_sq - stats.ml_norm_sq).abs() < 1e-12);

        // Influence is spread evenly: every fresh variable gets at most
        // d/t of the norm (the smoothing degree over the block size).
        let bound = d as f64 / t as f64 * a.functionals().norm2_sq;
        assert!(stats.max_influence <= bound + 1e-12);
        println!(
            "{t:<5} {:<11.6} {:<11.6} {:<15.8} {:.8}",
            stats.ml_norm_sq, stats.nml_norm_sq, stats.max_influence, bound
        );
    }

    // Correlations move by at most the dropped mass: compare the exact
    // correlation before and after at matched t.
    let b = HermitePolynomial::from_terms(1, vec![(MultiIndex::single(0, 1), 0.8)]).unwrap();
    let rho = 0.7;
    let before = exact_correlation(&a, &b, rho).unwrap();
    let t = 64;
    let am = multilinearize(&a, t).unwrap();
    let bm = multilinearize(&b, t).unwrap();
    let after = exact_correlation(&am, &bm, rho).unwrap();
    let slack = multilinear_image_stats(&a, t).unwrap().nml_norm_sq.sqrt()
        + multilinear_image_stats(&b, t).unwrap().nml_norm_sq.sqrt();
    println!(
        "\n<A, B> at rho = {rho}: {before:.8} -> {after:.8} (|diff| {:.2e} <= {:.2e})",
        (before - after).abs(),
        slack
    );
    assert!((before - after).abs() <= slack + 1e-12);

    // The schedule picks t so the dropped mass fits the stage budget.
    let t = multilin_params(2, d, 0.05, 4.0).unwrap();
    println!("schedule: k = 2, d = {d}, delta = 0.05 -> t = {t}");
    assert!(t >= 1);
}
