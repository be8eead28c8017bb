//! Gauss–Legendre and Gauss–Jacobi rules on [-1, 1].
//!
//! Both families are built with the Golub–Welsch procedure: the abscissae are
//! the eigenvalues of the symmetric tridiagonal Jacobi matrix of the monic
//! orthogonal polynomial recurrence, and the weights are the zeroth moment
//! times the squared first component of each normalized eigenvector.
//!
//! Only the two Jacobi weights needed by one-sided Caputo integrals are
//! supported: `(1 - ζ)^(-α)` (left horizon, singular at ζ = 1) and
//! `(1 + ζ)^(-α)` (right horizon, singular at ζ = -1).

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleKind {
    Legendre,
    /// Weight `(1 - ζ)^(-α)`.
    JacobiLeft(f64),
    /// Weight `(1 + ζ)^(-α)`.
    JacobiRight(f64),
}

#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ w_i f(ζ_i)`; the rule's weight function is implicit.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

pub fn gauss_legendre(n: usize) -> Result<QuadRule> {
    if n == 0 {
        return Err(Error::config("Gauss-Legendre rule needs at least one point"));
    }
    let (points, weights) = golub_welsch(n, 0.0, 0.0, 2.0);
    Ok(QuadRule {
        points,
        weights,
        kind: RuleKind::Legendre,
    })
}

/// Left-sided Gauss–Jacobi rule, weight `(1 - ζ)^(-α)`.
pub fn gauss_jacobi_left(n: usize, alpha: f64) -> Result<QuadRule> {
    check_jacobi(n, alpha)?;
    let (points, weights) = golub_welsch(n, -alpha, 0.0, jacobi_mass(alpha));
    Ok(QuadRule {
        points,
        weights,
        kind: RuleKind::JacobiLeft(alpha),
    })
}

/// Right-sided Gauss–Jacobi rule, weight `(1 + ζ)^(-α)`; the mirror image of
/// [`gauss_jacobi_left`].
pub fn gauss_jacobi_right(n: usize, alpha: f64) -> Result<QuadRule> {
    let left = gauss_jacobi_left(n, alpha)?;
    let points = left.points.iter().rev().map(|z| -z).collect();
    let weights = left.weights.iter().rev().copied().collect();
    Ok(QuadRule {
        points,
        weights,
        kind: RuleKind::JacobiRight(alpha),
    })
}

/// `∫_{-1}^{1} (1 - ζ)^(-α) dζ = 2^(1-α) / (1-α)`.
pub fn jacobi_mass(alpha: f64) -> f64 {
    2f64.powf(1.0 - alpha) / (1.0 - alpha)
}

fn check_jacobi(n: usize, alpha: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::config("Gauss-Jacobi rule needs at least one point"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "Gauss-Jacobi order α must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Golub–Welsch for weight `(1-x)^a (1+x)^b` with zeroth moment `mu0`.
fn golub_welsch(n: usize, a: f64, b: f64, mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let ab = a + b;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            let s = 2.0 * kf + ab;
            (b * b - a * a) / (s * (s + 2.0))
        };
        jac[(k, k)] = diag;
        if k + 1 < n {
            let j = kf + 1.0;
            let s = 2.0 * j + ab;
            let beta = 4.0 * j * (j + a) * (j + b) * (j + ab) / (s * s * (s + 1.0) * (s - 1.0));
            let off = beta.sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    // Polish the eigenvalues on the recurrence, then take weights from
    // 1 / ((1 - x²) P_n'(x)²), normalized to the exact zeroth moment.
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = jacobi_eval(n, a, b, *x);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        let (_, dp) = jacobi_eval(n, a, b, *x);
        weights.push(1.0 / ((1.0 - *x * *x) * dp * dp));
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w *= mu0 / total);
    (nodes, weights)
}

/// `P_n^{(a,b)}(x)` and its derivative by the three-term recurrence.
fn jacobi_eval(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    let ab = a + b;
    let (mut p0, mut d0) = (1.0, 0.0);
    if n == 0 {
        return (p0, d0);
    }
    let mut p1 = 0.5 * (a - b + (ab + 2.0) * x);
    let mut d1 = 0.5 * (ab + 2.0);
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + ab;
        let c0 = 2.0 * k * (k + ab) * (s - 2.0);
        let c1 = (s - 1.0) * s * (s - 2.0);
        let c2 = (s - 1.0) * (a * a - b * b);
        let c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let p2 = ((c1 * x + c2) * p1 - c3 * p0) / c0;
        let d2 = ((c1 * x + c2) * d1 + c1 * p1 - c3 * d0) / c0;
        p0 = p1;
        d0 = d1;
        p1 = p2;
        d1 = d2;
    }
    (p1, d1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum CacheKey {
    Legendre(usize),
    Left(usize, u64),
    Right(usize, u64),
}

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<QuadRule>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<QuadRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn cached(key: CacheKey, build: impl FnOnce() -> Result<QuadRule>) -> Result<Arc<QuadRule>> {
    if let Some(rule) = cache().read().expect("rule cache poisoned").get(&key) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(build()?);
    let mut map = cache().write().expect("rule cache poisoned");
    Ok(Arc::clone(map.entry(key).or_insert(rule)))
}

/// Shared, memoized rules. Safe to call from many threads at once.
pub fn cached_legendre(n: usize) -> Result<Arc<QuadRule>> {
    cached(CacheKey::Legendre(n), || gauss_legendre(n))
}

pub fn cached_jacobi_left(n: usize, alpha: f64) -> Result<Arc<QuadRule>> {
    cached(CacheKey::Left(n, alpha.to_bits()), || {
        gauss_jacobi_left(n, alpha)
    })
}

pub fn cached_jacobi_right(n: usize, alpha: f64) -> Result<Arc<QuadRule>> {
    cached(CacheKey::Right(n, alpha.to_bits()), || {
        gauss_jacobi_right(n, alpha)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `∫_{-1}^{1} ζ^k (1-ζ)^(-α) dζ`.
    fn left_moment(k: u32, alpha: f64) -> f64 {
        // (k + 1 - α) I_k = k I_{k-1} + (-1)^k 2^(1-α), from integration by parts
        let edge = 2f64.powf(1.0 - alpha);
        let mut m = jacobi_mass(alpha);
        for j in 1..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            m = (j as f64 * m + sign * edge) / (j as f64 + 1.0 - alpha);
        }
        m
    }

    #[test]
    fn legendre_small_rules() {
        let r1 = gauss_legendre(1).unwrap();
        assert_relative_eq!(r1.points[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(r1.weights[0], 2.0, epsilon = 1e-14);

        let r2 = gauss_legendre(2).unwrap();
        let p = 1.0 / 3f64.sqrt();
        assert_relative_eq!(r2.points[0], -p, epsilon = 1e-14);
        assert_relative_eq!(r2.points[1], p, epsilon = 1e-14);
        assert_relative_eq!(r2.weights[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(r2.weights[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn legendre_exactness_degree() {
        let r3 = gauss_legendre(3).unwrap();
        assert_relative_eq!(r3.integrate(|z| z.powi(4)), 0.4, epsilon = 1e-14);
        for n in 1..12 {
            let r = gauss_legendre(n).unwrap();
            assert_relative_eq!(r.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for k in 0..(2 * n as i32) {
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert_relative_eq!(r.integrate(|z| z.powi(k)), exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn zero_points_rejected() {
        assert!(matches!(gauss_legendre(0), Err(Error::Config(_))));
        assert!(matches!(gauss_jacobi_left(0, 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn alpha_outside_open_interval_rejected() {
        for a in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(gauss_jacobi_left(8, a), Err(Error::Config(_))));
            assert!(matches!(gauss_jacobi_right(8, a), Err(Error::Config(_))));
        }
    }

    #[test]
    fn jacobi_weight_sum_is_closed_form_mass() {
        for &alpha in &[0.1, 0.3, 0.5, 0.7, 0.9, 0.9999] {
            let r = gauss_jacobi_left(12, alpha).unwrap();
            let sum: f64 = r.weights.iter().sum();
            assert_relative_eq!(sum, jacobi_mass(alpha), max_relative = 1e-12);
        }
    }

    #[test]
    fn jacobi_linear_moment_at_half() {
        // ∫ ζ (1-ζ)^(-1/2) dζ = 2√2/3
        let r = gauss_jacobi_left(4, 0.5).unwrap();
        assert_relative_eq!(
            r.integrate(|z| z),
            2.0 * 2f64.sqrt() / 3.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn jacobi_moments_match_closed_form() {
        for &alpha in &[0.2, 0.5, 0.8] {
            for n in [4usize, 8, 16, 30] {
                let left = gauss_jacobi_left(n, alpha).unwrap();
                let right = gauss_jacobi_right(n, alpha).unwrap();
                for k in 0..(2 * n as u32 - 1).min(24) {
                    let exact = left_moment(k, alpha);
                    let got = left.integrate(|z| z.powi(k as i32));
                    assert_relative_eq!(got, exact, max_relative = 1e-10, epsilon = 1e-12);
                    // ∫ ζ^k (1+ζ)^(-α) = (-1)^k ∫ ζ^k (1-ζ)^(-α)
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let got_r = right.integrate(|z| z.powi(k as i32));
                    assert_relative_eq!(got_r, sign * exact, max_relative = 1e-10, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn jacobi_self_convergence_on_smooth_function() {
        let f = |z: f64| (0.7 * z).cos() + z.exp() * 0.1;
        let coarse = gauss_jacobi_left(8, 0.6).unwrap().integrate(f);
        let fine = gauss_jacobi_left(40, 0.6).unwrap().integrate(f);
        assert!((coarse - fine).abs() < 1e-10, "{coarse} vs {fine}");
    }

    #[test]
    fn mirror_property_and_positive_weights() {
        let left = gauss_jacobi_left(15, 0.35).unwrap();
        let right = gauss_jacobi_right(15, 0.35).unwrap();
        for i in 0..15 {
            assert!(left.weights[i] > 0.0 && right.weights[i] > 0.0);
            assert_eq!(right.points[i], -left.points[14 - i]);
            assert_eq!(right.weights[i], left.weights[14 - i]);
        }
    }

    #[test]
    fn cache_returns_shared_rule() {
        let a = cached_jacobi_left(10, 0.45).unwrap();
        let b = cached_jacobi_left(10, 0.45).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
