//! The smoothing schedule: noise rate `nu` and truncation degree `d` as a
//! function of (rho, k, delta), and what applying `U_nu` plus truncation
//! does to a polynomial.
//!
//! The schedule picks `nu = 1 - C (1 - rho) e / ln(1/e)` with
//! `e = delta / (2 sqrt k)` and the smallest `d >= 1` with `nu^{2d} <= e`,
//! so the discarded tail carries at most `e` of the norm. Run with
//! `cargo run --release --example smoothing_schedule`.

use gaussdimred::poly::{HermitePolynomial, MultiIndex};
use gaussdimred::transforms::{smooth, smoothing_params};

fn main() {
    println!("rho    k  delta    nu            d");
    for &(rho, k, delta) in &[
        (0.5, 2, 0.1),
        (0.5, 2, 0.01),
        (0.9, 2, 0.1),
        (0.5, 5, 0.1),
        (0.0, 2, 0.1),
    ] {
        let s = smoothing_params(rho, k, delta, 1.0).unwrap();
        println!("{rho:<4}   {k}  {delta:<6}  {:<12.10}  {}", s.nu, s.d);
        // Defining property: d is minimal with nu^{2d} below the budget.
        let e = s.eps_tilde();
        assert!(s.nu.powi(2 * s.d as i32) <= e);
        assert!(s.d == 1 || s.nu.powi(2 * (s.d as i32 - 1)) > e);
    }

    // rho = 1 needs no smoothing and the schedule refuses it.
    let err = smoothing_params(1.0, 2, 0.1, 1.0).unwrap_err();
    println!("\nrho = 1 rejected: {err}");

    // Apply the (rho = 0.5, k = 2, delta = 0.1) schedule to a polynomial
    // with mass on degrees 0, 1 and a small spike at degree 400.
    let params = smoothing_params(0.5, 2, 0.1, 1.0).unwrap();
    let a = HermitePolynomial::from_terms(
        1,
        vec![
            (MultiIndex::empty(), 0.5),
            (MultiIndex::single(0, 1), 0.4),
            (MultiIndex::single(0, 400), 0.2),
        ],
    )
    .unwrap();
    let smoothed = smooth(std::slice::from_ref(&a), &params).unwrap().remove(0);
    println!(
        "\ndegree {} -> {} (schedule d = {})",
        a.degree(),
        smoothed.degree(),
        params.d
    );
    assert!(smoothed.degree() <= params.d);

    // U_nu scales the coefficient at multi-degree |sigma| by nu^{|sigma|};
    // the mean is untouched and the degree-400 spike is gone.
    assert_eq!(smoothed.coeff(&MultiIndex::empty()), 0.5);
    let c1 = smoothed.coeff(&MultiIndex::single(0, 1));
    assert!((c1 - 0.4 * params.nu).abs() < 1e-15);
    assert_eq!(smoothed.coeff(&MultiIndex::single(0, 400)), 0.0);
    println!(
        "coeff at degree 1: 0.4 -> {:.6} (= 0.4 nu), spike at 400 dropped",
        c1
    );

    // Variance can only shrink.
    let (va, vs) = (a.functionals().variance, smoothed.functionals().variance);
    println!("variance {va:.4} -> {vs:.4}");
    assert!(vs <= va + 1e-15);
}
