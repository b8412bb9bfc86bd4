//! Rounding onto the probability simplex and distribution utilities.
//!
//! `Delta_k` is the set of nonnegative vectors in `R^k` summing to 1. The
//! rounding operator `R` is Euclidean projection onto `Delta_k`, computed by
//! the sort-based threshold method: sort the coordinates in decreasing
//! order, take the largest `j` with `v_(j) + (1 - sum_{i<=j} v_(i))/j > 0`,
//! and subtract the corresponding shift, clamping at zero. `R` is the
//! identity on `Delta_k` and 1-Lipschitz.
//!
//! Strategies that must map into `Delta_k` are represented as arbitrary
//! vector functions composed with `R` at evaluation time; [`projected`]
//! builds that composition. [`joint_distribution`] estimates the k-by-k
//! output distribution `E[A_i(X) B_j(Y)]` of two such strategies under
//! rho-correlated Gaussian inputs, and [`tv_distance`] compares two output
//! distributions in total variation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::VectorFunction;
use crate::sampling::{fill_correlated_pair, fill_standard_normal, mc_run, mc_run_vec, MCEstimate};

/// A point of the probability simplex `Delta_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    /// Validates nonnegativity and that the coordinates sum to 1 within
    /// 1e-9.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::domain("simplex point: k must be at least 1"));
        }
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::domain("simplex point: coordinates must be finite and >= 0"));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "simplex point: coordinates sum to {sum}, not 1"
            )));
        }
        Ok(SimplexPoint { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn k(&self) -> usize {
        self.coords.len()
    }
}

/// A joint distribution over `[k] x [k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistributionK {
    probs: Vec<Vec<f64>>,
}

impl JointDistributionK {
    /// Validates a k-by-k matrix of nonnegative entries summing to 1 within
    /// 1e-9.
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let k = probs.len();
        if k == 0 {
            return Err(Error::shape("joint distribution: k must be at least 1"));
        }
        if probs.iter().any(|row| row.len() != k) {
            return Err(Error::shape("joint distribution: matrix must be k x k"));
        }
        let mut sum = 0.0;
        for row in &probs {
            for &p in row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::domain(
                        "joint distribution: entries must be finite and >= 0",
                    ));
                }
                sum += p;
            }
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "joint distribution: entries sum to {sum}, not 1"
            )));
        }
        Ok(JointDistributionK { probs })
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }
}

/// In-place Euclidean projection onto `Delta_k`; `scratch` must have the
/// same length as `v`.
pub fn project_simplex_in_place(v: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    let k = v.len();
    if k == 0 {
        return Err(Error::domain("project_simplex: k must be at least 1"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("project_simplex: non-finite input"));
    }
    scratch.copy_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite"));
    // Largest j with v_(j) + (1 - sum_{i<=j} v_(i))/j > 0; ties between
    // valid pivots give the same projection.
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &vj) in scratch.iter().enumerate() {
        cumsum += vj;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if vj - candidate > 0.0 {
            theta = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    Ok(())
}

/// Euclidean projection of `v` onto `Delta_k`; identity on `Delta_k`.
pub fn project_simplex(v: &[f64]) -> Result<SimplexPoint> {
    let mut out = v.to_vec();
    let mut scratch = vec![0.0; v.len()];
    project_simplex_in_place(&mut out, &mut scratch)?;
    // The threshold form guarantees nonnegativity; the sum can miss 1 only
    // by floating round-off, well inside the type's tolerance.
    SimplexPoint::new(out)
}

/// The composition `R(A(x))`: evaluates `a` and projects the output onto
/// `Delta_k`.
pub fn projected(a: &VectorFunction) -> VectorFunction {
    let inner = a.clone();
    let k = a.k();
    VectorFunction::from_fn(a.num_vars(), k, move |x, out| {
        inner.eval_into(x, out).expect("shape fixed at construction");
        let mut scratch = vec![0.0; k];
        project_simplex_in_place(out, &mut scratch).expect("finite output");
    })
}

/// Estimates `E_X ||R(A(X)) - A(X)||^2` under standard Gaussian input.
pub fn dist_to_simplex_sq(
    a: &VectorFunction,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<MCEstimate> {
    let n = a.num_vars();
    let k = a.k();
    let scratch_len = n + 3 * k;
    mc_run(scratch_len, samples, seed, workers, move |rng, scratch| {
        let (x, rest) = scratch.split_at_mut(n);
        let (f, rest) = rest.split_at_mut(k);
        let (r, sort_buf) = rest.split_at_mut(k);
        fill_standard_normal(rng, x);
        a.eval_into(x, f).expect("shape fixed");
        r.copy_from_slice(f);
        project_simplex_in_place(r, sort_buf).expect("finite");
        f.iter().zip(r.iter()).map(|(fi, ri)| (fi - ri) * (fi - ri)).sum()
    })
}

/// Estimates `||R(A) - A||_2 = sqrt(E_X ||R(A(X)) - A(X)||^2)`, with a
/// delta-method standard error.
pub fn dist_to_simplex(
    a: &VectorFunction,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<MCEstimate> {
    let sq = dist_to_simplex_sq(a, samples, seed, workers)?;
    let mean = sq.mean.max(0.0).sqrt();
    let std_error = if mean > 0.0 {
        sq.std_error / (2.0 * mean)
    } else {
        sq.std_error.sqrt()
    };
    Ok(MCEstimate {
        mean,
        std_error,
        samples: sq.samples,
        seed: sq.seed,
    })
}

/// A joint-distribution estimate with componentwise standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct JointEstimate {
    pub dist: JointDistributionK,
    pub std_errors: Vec<Vec<f64>>,
    pub samples: u64,
    pub seed: u64,
}

/// Estimates the output distribution `(i, j) -> E[A_i(X) B_j(Y)]` of two
/// strategies under `rho`-correlated Gaussian inputs. Both strategies are
/// composed with simplex projection, so the estimate is a genuine joint
/// distribution up to floating round-off.
pub fn joint_distribution(
    a: &VectorFunction,
    b: &VectorFunction,
    rho: f64,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<JointEstimate> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "joint_distribution: rho = {rho} outside [0, 1]"
        )));
    }
    if a.num_vars() != b.num_vars() {
        return Err(Error::shape(format!(
            "joint_distribution: {} vs {} variables",
            a.num_vars(),
            b.num_vars()
        )));
    }
    if a.k() != b.k() {
        return Err(Error::shape(format!(
            "joint_distribution: output dimensions {} vs {}",
            a.k(),
            b.k()
        )));
    }
    let n = a.num_vars();
    let k = a.k();
    let (ra, rb) = (projected(a), projected(b));
    let dim = k * k;
    let scratch_len = 2 * n + 2 * k;
    let est = mc_run_vec(dim, scratch_len, samples, seed, workers, |rng, out, scratch| {
        let (xy, fg) = scratch.split_at_mut(2 * n);
        let (x, y) = xy.split_at_mut(n);
        let (fa, fb) = fg.split_at_mut(k);
        fill_correlated_pair(rng, rho, x, y);
        ra.eval_into(x, fa).expect("shape fixed");
        rb.eval_into(y, fb).expect("shape fixed");
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = fa[i] * fb[j];
            }
        }
    })?;
    let to_matrix =
        |flat: &[f64]| -> Vec<Vec<f64>> { (0..k).map(|i| flat[i * k..(i + 1) * k].to_vec()).collect() };
    let probs = to_matrix(&est.means)
        .into_iter()
        .map(|row| row.into_iter().map(|p| p.max(0.0)).collect())
        .collect();
    Ok(JointEstimate {
        dist: JointDistributionK::new(probs)?,
        std_errors: to_matrix(&est.std_errors),
        samples,
        seed,
    })
}

/// Total variation distance `(1/2) sum |p_ij - q_ij|`.
pub fn tv_distance(p: &JointDistributionK, q: &JointDistributionK) -> Result<f64> {
    if p.k() != q.k() {
        return Err(Error::shape(format!(
            "tv_distance: sizes {} vs {}",
            p.k(),
            q.k()
        )));
    }
    let mut acc = 0.0;
    for (pr, qr) in p.probs.iter().zip(&q.probs) {
        for (pij, qij) in pr.iter().zip(qr) {
            acc += (pij - qij).abs();
        }
    }
    Ok(acc / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::substream_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn point_mass(k: usize, i: usize, j: usize) -> JointDistributionK {
        let mut probs = vec![vec![0.0; k]; k];
        probs[i][j] = 1.0;
        JointDistributionK::new(probs).unwrap()
    }

    #[test]
    fn projection_worked_examples() {
        assert_eq!(project_simplex(&[0.3, 0.7]).unwrap().coords(), &[0.3, 0.7]);
        let p = project_simplex(&[0.5, 0.6]).unwrap();
        assert_abs_diff_eq!(p.coords()[0], 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(p.coords()[1], 0.55, epsilon = 1e-15);
        assert_eq!(project_simplex(&[2.0, 0.0, 0.0]).unwrap().coords(), &[1.0, 0.0, 0.0]);
        assert_eq!(project_simplex(&[-1.0, -1.0]).unwrap().coords(), &[0.5, 0.5]);
        assert!(project_simplex(&[f64::NAN, 0.0]).is_err());
        assert!(project_simplex(&[]).is_err());
    }

    #[test]
    fn projection_invariants_on_random_inputs() {
        let mut rng = substream_rng(5, 0);
        for &k in &[2usize, 3, 5, 10] {
            for _ in 0..1000 {
                let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let p = project_simplex(&v).unwrap();
                // Variational inequality against random simplex points.
                for _ in 0..20 {
                    let mut q: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0f64..1.0)).collect();
                    let s: f64 = q.iter().sum();
                    q.iter_mut().for_each(|x| *x /= s);
                    let inner: f64 = (0..k)
                        .map(|i| (v[i] - p.coords()[i]) * (q[i] - p.coords()[i]))
                        .sum();
                    assert!(inner <= 1e-9, "k = {k}: certificate violated: {inner}");
                }
            }
        }
    }

    #[test]
    fn projection_is_one_lipschitz() {
        let mut rng = substream_rng(6, 0);
        for _ in 0..2000 {
            let k = rng.gen_range(2..8);
            let u: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let pu = project_simplex(&u).unwrap();
            let pv = project_simplex(&v).unwrap();
            let d_in: f64 = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let d_out: f64 = pu
                .coords()
                .iter()
                .zip(pv.coords())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(d_out <= d_in + 1e-12);
        }
    }

    #[test]
    fn distance_examples() {
        let inside = VectorFunction::constant(1, vec![0.25, 0.75]);
        let d = dist_to_simplex(&inside, 100, 0, 1).unwrap();
        assert_abs_diff_eq!(d.mean, 0.0, epsilon = 1e-12);

        let outside = VectorFunction::constant(1, vec![0.5, 0.6]);
        let d = dist_to_simplex(&outside, 100, 0, 1).unwrap();
        assert_abs_diff_eq!(d.mean, 0.005f64.sqrt(), epsilon = 1e-12);
        let dsq = dist_to_simplex_sq(&outside, 100, 0, 1).unwrap();
        assert_abs_diff_eq!(dsq.mean, 0.005, epsilon = 1e-12);
        assert_abs_diff_eq!(dsq.std_error, 0.0, epsilon = 1e-9);

        let far = VectorFunction::constant(1, vec![2.0, 0.0, 0.0]);
        let d = dist_to_simplex(&far, 100, 0, 1).unwrap();
        assert_abs_diff_eq!(d.mean, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn joint_distribution_constant_examples() {
        let e1 = VectorFunction::constant(1, vec![1.0, 0.0]);
        let j = joint_distribution(&e1, &e1, 0.3, 100, 0, 1).unwrap();
        assert_eq!(j.dist.probs()[0][0], 1.0);
        assert_eq!(j.dist.probs()[0][1], 0.0);
        assert_eq!(j.dist.probs()[1][0], 0.0);
        assert_eq!(j.dist.probs()[1][1], 0.0);

        let uniform = VectorFunction::constant(1, vec![0.5, 0.5]);
        let j = joint_distribution(&uniform, &uniform, 0.9, 100, 0, 1).unwrap();
        for row in j.dist.probs() {
            for &p in row {
                assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn joint_distribution_halfspace_diagonal() {
        // Orthant probability for rho = 0.6: 1/4 + arcsin(0.6)/(2 pi).
        let indicator = VectorFunction::from_fn(1, 2, |x, out| {
            let hit = x[0] >= 0.0;
            out[0] = if hit { 1.0 } else { 0.0 };
            out[1] = 1.0 - out[0];
        });
        let j = joint_distribution(&indicator, &indicator, 0.6, 400_000, 17, 1).unwrap();
        let target = 0.25 + 0.6f64.asin() / (2.0 * std::f64::consts::PI);
        assert_abs_diff_eq!(j.dist.probs()[0][0], target, epsilon = 0.01);
        assert_abs_diff_eq!(j.dist.probs()[1][1], target, epsilon = 0.01);
    }

    #[test]
    fn tv_examples_and_metric_properties() {
        let uniform = JointDistributionK::new(vec![vec![0.25; 2]; 2]).unwrap();
        let p11 = point_mass(2, 0, 0);
        let p22 = point_mass(2, 1, 1);
        assert_eq!(tv_distance(&uniform, &uniform).unwrap(), 0.0);
        assert_eq!(tv_distance(&p11, &p22).unwrap(), 1.0);
        assert_abs_diff_eq!(tv_distance(&uniform, &p11).unwrap(), 0.75, epsilon = 1e-15);

        let a = JointDistributionK::new(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        assert_eq!(
            tv_distance(&a, &uniform).unwrap(),
            tv_distance(&uniform, &a).unwrap()
        );
        let lhs = tv_distance(&a, &p22).unwrap();
        let rhs = tv_distance(&a, &uniform).unwrap() + tv_distance(&uniform, &p22).unwrap();
        assert!(lhs <= rhs + 1e-15);

        let k3 = point_mass(3, 0, 0);
        assert!(tv_distance(&a, &k3).is_err());
    }

    #[test]
    fn type_invariants_are_enforced() {
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexPoint::new(vec![]).is_err());
        assert!(JointDistributionK::new(vec![vec![0.5, 0.5]]).is_err());
        assert!(JointDistributionK::new(vec![vec![0.7, 0.4], vec![-0.1, 0.0]]).is_err());
    }
}
