//! Euclidean projection onto the probability simplex and the rounding it
//! induces on vector-valued functions.
//!
//! `project_simplex` is the exact O(k log k) sort-based projection; for a
//! function f into R^k, `projected(f)` composes it pointwise and
//! `dist_to_simplex` measures E[dist(f(X), Delta_k)^2]^(1/2). Run with
//! `cargo run --release --example simplex_rounding`.

use gaussdimred::poly::{HermitePolynomial, MultiIndex, VectorFunction};
use gaussdimred::simplex::{dist_to_simplex, project_simplex, projected};

const SAMPLES: u64 = 200_000;
const SEED: u64 = 11;

fn main() {
    // A point already in Delta_2 is fixed; one outside moves to the nearest
    // face. (0.5, 0.6) is off by 0.1 in coordinate sum, so its distance is
    // 0.1 / sqrt(2).
    let inside = project_simplex(&[0.3, 0.7]).unwrap();
    assert_eq!(inside.coords(), &[0.3, 0.7]);

    let p = project_simplex(&[0.5, 0.6]).unwrap();
    let dist = ((0.5 - p.coords()[0]).powi(2) + (0.6 - p.coords()[1]).powi(2)).sqrt();
    println!("(0.5, 0.6) projects to ({:.3}, {:.3}), distance {:.6}", p.coords()[0], p.coords()[1], dist);
    assert!((dist - 0.1 / 2f64.sqrt()).abs() < 1e-12);

    // Idempotence: projecting a projection does nothing.
    let again = project_simplex(p.coords()).unwrap();
    assert!(p
        .coords()
        .iter()
        .zip(again.coords())
        .all(|(a, b)| (a - b).abs() < 1e-15));

    // Negative coordinates clamp to a vertex when far enough out.
    let v = project_simplex(&[1.9, -0.4, -0.2]).unwrap();
    println!("(1.9, -0.4, -0.2) projects to {:?}", v.coords());
    assert_eq!(v.coords(), &[1.0, 0.0, 0.0]);

    // The halfspace pair (1/2 +- x/2, valid on |x| <= 1) leaves the simplex
    // on Gaussian tails; rounding removes exactly that excursion.
    let f = VectorFunction::from_polys(vec![
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
    ])
    .unwrap();
    let before = dist_to_simplex(&f, SAMPLES, SEED, 1).unwrap();
    let after = dist_to_simplex(&projected(&f), SAMPLES, SEED, 1).unwrap();
    println!(
        "halfspace pair: ||R(A) - A||_2 before rounding {:.6} +- {:.6}, after {:.6}",
        before.mean, before.std_error, after.mean
    );
    assert!(before.mean > 4.0 * before.std_error);
    assert!(after.mean.abs() <= 1e-12);
}
