//! Builds polynomials in the normalized Hermite basis, round-trips the text
//! format, and checks the exact correlation formula against Monte Carlo.
//!
//! The basis is orthonormal under the standard Gaussian, so
//! `E[A(X) B(Y)] = sum_sigma rho^{|sigma|} A^(sigma) B^(sigma)` when
//! `(X, Y)` are `rho`-correlated. Run with
//! `cargo run --release --example hermite_basis`.

use gaussdimred::poly::{exact_correlation, hermite_eval, HermitePolynomial, MultiIndex};
use gaussdimred::sampling::{fill_correlated_pair, fill_standard_normal, mc_run};

const RHO: f64 = 0.6;
const SAMPLES: u64 = 200_000;
const SEED: u64 = 7;

fn main() {
    // h2(x) = (x^2 - 1)/sqrt(2) via the recurrence, checked pointwise.
    for &x in &[-2.0, -0.5, 0.0, 1.0, 3.0] {
        let h2 = hermite_eval(2, x).unwrap();
        assert!((h2 - (x * x - 1.0) / 2f64.sqrt()).abs() < 1e-12);
    }
    println!("h_2 matches (x^2 - 1)/sqrt(2) on a point grid");

    // A = 0.5 + 0.3 h1(x0) + 0.2 h2(x1), B = 0.5 + 0.4 h1(x0).
    let a = HermitePolynomial::from_terms(
        2,
        vec![
            (MultiIndex::empty(), 0.5),
            (MultiIndex::single(0, 1), 0.3),
            (MultiIndex::single(1, 2), 0.2),
        ],
    )
    .unwrap();
    let b = HermitePolynomial::from_terms(
        2,
        vec![(MultiIndex::empty(), 0.5), (MultiIndex::single(0, 1), 0.4)],
    )
    .unwrap();

    let f = a.functionals();
    println!("A: {}", a.serialize());
    println!(
        "   degree {}  ||A||^2 = {:.4}  Var = {:.4}  total influence = {:.4}",
        a.degree(),
        f.norm2_sq,
        f.variance,
        f.total_influence
    );

    // The text format round-trips exactly.
    let back = HermitePolynomial::parse(&a.serialize()).unwrap();
    assert_eq!(back.serialize(), a.serialize());

    // Exact correlation: 0.25 + rho * 0.12 here (only shared indices count).
    let exact = exact_correlation(&a, &b, RHO).unwrap();
    assert!((exact - (0.25 + RHO * 0.3 * 0.4)).abs() < 1e-12);

    let est = mc_run(4, SAMPLES, SEED, 1, |rng, scratch| {
        let (x, y) = scratch.split_at_mut(2);
        fill_correlated_pair(rng, RHO, x, y);
        a.eval(x).unwrap() * b.eval(y).unwrap()
    })
    .unwrap();
    println!(
        "E[A(X)B(Y)] at rho = {RHO}: exact {exact:.6}, MC {:.6} +- {:.6}",
        est.mean, est.std_error
    );
    assert!((est.mean - exact).abs() <= 4.0 * est.std_error);

    // Orthonormality spot check: E[h_r(X) h_s(X)] = [r == s].
    for (r, s) in [(1u32, 1u32), (2, 2), (1, 2), (3, 4)] {
        let est = mc_run(1, SAMPLES, SEED + 100 + (10 * r + s) as u64, 1, |rng, x| {
            fill_standard_normal(rng, x);
            hermite_eval(r, x[0]).unwrap() * hermite_eval(s, x[0]).unwrap()
        })
        .unwrap();
        let want = if r == s { 1.0 } else { 0.0 };
        println!("E[h_{r} h_{s}] = {:+.4} +- {:.4} (want {want})", est.mean, est.std_error);
        assert!((est.mean - want).abs() <= 4.0 * est.std_error);
    }
}
