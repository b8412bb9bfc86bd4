//! Maximal correlation and aligned bases of finite joint distributions, and
//! the exact correlation formula they support.
//!
//! `aligned_bases` diagonalizes the source: basis functions X_l, Y_l with
//! `E[X_l(x) Y_m(y)] = [l == m] sigma_l` and `sigma_1` the maximal
//! correlation. Polynomials written in these bases get their correlation
//! from coefficients alone. Run with
//! `cargo run --release --example maximal_correlation`.

use gaussdimred::discrete::{
    aligned_bases, discrete_correlation, dsbs, enumerate_correlation, eq, parse_source_spec,
    triple_uniform, DiscretePolynomial, Side,
};
use gaussdimred::poly::MultiIndex;

fn main() {
    // DSBS(rho): uniform bits flipped with probability (1 - rho)/2. Its
    // maximal correlation is rho exactly.
    let js = dsbs(0.6).unwrap();
    let bases = aligned_bases(&js);
    println!("DSBS(0.6): sigmas = {:?}", bases.sigmas());
    assert!((bases.rho() - 0.6).abs() < 1e-12);

    // The triple-uniform source (uniform on 3 of the 4 pairs) and Eq(q).
    let tu = triple_uniform();
    println!("triple-uniform: rho = {:.12}, alpha = {:.3}", aligned_bases(&tu).rho(), tu.alpha());
    let eq3 = eq(3).unwrap();
    println!("Eq(3): rho = {:.12} (perfectly correlated)", aligned_bases(&eq3).rho());
    assert!((aligned_bases(&eq3).rho() - 1.0).abs() < 1e-12);

    // Sources also parse from compact specs.
    let parsed = parse_source_spec("dsbs:0.6").unwrap();
    assert_eq!(parsed.probs(), js.probs());

    // f = indicator(x = 1), g = indicator(y = 1) as basis expansions, on
    // two coordinates each; correlation from coefficients vs. brute-force
    // enumeration over all q^n x q^n input pairs.
    let q = js.q();
    let to_poly = |side: Side| {
        // indicator(s = 1): c_0 = 1/2, c_1 = E[1{s=1} X_1] = X_1(1)/2
        // under the uniform marginal.
        let c1 = 0.5 * bases.value(side, 1, 1);
        DiscretePolynomial::from_terms(
            2,
            q,
            side,
            vec![(MultiIndex::empty(), 0.5), (MultiIndex::single(0, 1), c1)],
        )
        .unwrap()
    };
    let f = to_poly(Side::A);
    let g = to_poly(Side::B);
    let from_coeffs = discrete_correlation(&f, &g, &bases).unwrap();
    let from_enum = enumerate_correlation(&f, &g, &js, &bases).unwrap();
    println!(
        "E[f(x) g(y)]: coefficient formula {from_coeffs:.12}, enumeration {from_enum:.12}"
    );
    assert!((from_coeffs - from_enum).abs() < 1e-10);

    // Dictators on one bit: E[f g] = P(x = y = 1) = (1 + rho)/4 for DSBS.
    assert!((from_coeffs - (1.0 + 0.6) / 4.0).abs() < 1e-10);
}
