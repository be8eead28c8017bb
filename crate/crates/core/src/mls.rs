//! Moving least squares shape functions and their integer-order derivatives.
//!
//! The shape row is `φ(x) = pᵀ(x) A⁻¹(x) H(x)` with `A = Pᵀ W P` and
//! `H = Pᵀ W`. Rather than forming `A⁻¹` and its derivatives explicitly we
//! solve for `γ = A⁻¹ p` and differentiate `A γ = p`:
//!
//! ```text
//! A γ,x  = p,x  - A,x γ
//! A γ,xx = p,xx - 2 A,x γ,x - A,xx γ
//! A γ,xy = p,xy - A,x γ,y - A,y γ,x - A,xy γ
//! ```
//!
//! which is the product rule applied to `pᵀ A⁻¹ H` with
//! `∂A⁻¹ = -A⁻¹ ∂A A⁻¹`. Then `φ_i = γ·p_i W_i`, and so on.
//!
//! The basis is evaluated in local coordinates `((x - x_e)/L_x, (y - y_e)/L_y)`
//! centred on the evaluation point, which spans the same polynomial space as
//! the global monomials but keeps `A` well scaled.

use crate::error::{Error, Result};
use crate::geometry::{BasisOrder, NodeCloud, Point};

/// Moment matrices with a condition estimate above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Cubic spline weight and its first two derivatives with respect to `r`.
///
/// At the breakpoint `r = 0.5` the left branch is used.
pub fn cubic_spline_weight(r: f64) -> Result<(f64, f64, f64)> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::Domain(format!("normalized distance must be ≥ 0, got {r}")));
    }
    Ok(spline(r))
}

#[inline]
fn spline(r: f64) -> (f64, f64, f64) {
    if r <= 0.5 {
        (
            2.0 / 3.0 - 4.0 * r * r + 4.0 * r * r * r,
            -8.0 * r + 12.0 * r * r,
            -8.0 + 24.0 * r,
        )
    } else if r <= 1.0 {
        (
            4.0 / 3.0 - 4.0 * r + 4.0 * r * r - 4.0 / 3.0 * r * r * r,
            -4.0 + 8.0 * r - 4.0 * r * r,
            8.0 - 8.0 * r,
        )
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// Tensor-product weight `W = w(r_x) w(r_y)` with Cartesian derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightDerivs {
    pub w: f64,
    pub wx: f64,
    pub wy: f64,
    pub wxx: f64,
    pub wyy: f64,
    pub wxy: f64,
}

pub fn tensor_weight(point: Point, node: Point, supports: (f64, f64)) -> Result<WeightDerivs> {
    let (dx, dy) = supports;
    if !(dx > 0.0 && dy > 0.0) {
        return Err(Error::Domain(format!(
            "support lengths must be positive, got ({dx}, {dy})"
        )));
    }
    Ok(tensor(point, node, dx, dy))
}

#[inline]
fn tensor(point: Point, node: Point, dx: f64, dy: f64) -> WeightDerivs {
    let ux = point.x - node.x;
    let uy = point.y - node.y;
    let (wx0, wx1, wx2) = spline(ux.abs() / dx);
    let (wy0, wy1, wy2) = spline(uy.abs() / dy);
    let sx = ux.signum() / dx;
    let sy = uy.signum() / dy;
    WeightDerivs {
        w: wx0 * wy0,
        wx: wx1 * sx * wy0,
        wy: wx0 * wy1 * sy,
        wxx: wx2 / (dx * dx) * wy0,
        wyy: wx0 * wy2 / (dy * dy),
        wxy: wx1 * sx * wy1 * sy,
    }
}

/// Highest derivative order requested from [`evaluate_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DerivDepth {
    Value = 0,
    First = 1,
    Second = 2,
}

/// Selector for one row of a [`ShapeEval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Deriv {
    Value,
    Dx,
    Dy,
    Dxx,
    Dyy,
    Dxy,
}

impl Deriv {
    pub fn depth(self) -> DerivDepth {
        match self {
            Deriv::Value => DerivDepth::Value,
            Deriv::Dx | Deriv::Dy => DerivDepth::First,
            _ => DerivDepth::Second,
        }
    }
}

/// Shape-function rows at one point, restricted to the active nodes.
#[derive(Debug, Clone, Default)]
pub struct ShapeEval {
    pub active: Vec<usize>,
    pub phi: Vec<f64>,
    pub dphi_dx: Vec<f64>,
    pub dphi_dy: Vec<f64>,
    pub d2phi_dxx: Vec<f64>,
    pub d2phi_dyy: Vec<f64>,
    pub d2phi_dxy: Vec<f64>,
}

impl ShapeEval {
    pub fn row(&self, which: Deriv) -> &[f64] {
        match which {
            Deriv::Value => &self.phi,
            Deriv::Dx => &self.dphi_dx,
            Deriv::Dy => &self.dphi_dy,
            Deriv::Dxx => &self.d2phi_dxx,
            Deriv::Dyy => &self.d2phi_dyy,
            Deriv::Dxy => &self.d2phi_dxy,
        }
    }

    /// Reconstruct `which` of the field with nodal parameters `values`.
    pub fn apply(&self, which: Deriv, values: &[f64]) -> f64 {
        self.active
            .iter()
            .zip(self.row(which))
            .map(|(&i, &c)| c * values[i])
            .sum()
    }

    /// Scatter `scale × row` into a dense row of length `n`.
    pub fn scatter_into(&self, which: Deriv, scale: f64, dense: &mut [f64]) {
        for (&i, &c) in self.active.iter().zip(self.row(which)) {
            dense[i] += scale * c;
        }
    }
}

const M: usize = 6;
type Vec6 = [f64; M];
type Mat6 = [[f64; M]; M];

#[inline]
fn basis(order: BasisOrder, xi: f64, eta: f64) -> Vec6 {
    match order {
        BasisOrder::Linear => [1.0, xi, eta, 0.0, 0.0, 0.0],
        BasisOrder::Quadratic => [1.0, xi, eta, xi * xi, xi * eta, eta * eta],
    }
}

/// In-place Cholesky of the leading `m × m` block; returns a condition
/// estimate `(max L_ii / min L_ii)²`, or `None` if not positive definite.
#[allow(clippy::needless_range_loop)]
fn cholesky(a: &mut Mat6, m: usize) -> Option<f64> {
    for j in 0..m {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in (j + 1)..m {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    let (mut lo, mut hi) = (f64::MAX, 0.0f64);
    for j in 0..m {
        lo = lo.min(a[j][j]);
        hi = hi.max(a[j][j]);
    }
    Some((hi / lo).powi(2))
}

fn chol_solve(l: &Mat6, m: usize, b: &mut Vec6) {
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * b[k];
        }
        b[i] = s / l[i][i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in (i + 1)..m {
            s -= l[k][i] * b[k];
        }
        b[i] = s / l[i][i];
    }
}

#[inline]
fn mat_vec_sub(out: &mut Vec6, a: &Mat6, v: &Vec6, m: usize, scale: f64) {
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..m {
            s += a[i][j] * v[j];
        }
        out[i] -= scale * s;
    }
}

#[inline]
fn dot(a: &Vec6, b: &Vec6, m: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..m {
        s += a[k] * b[k];
    }
    s
}

/// MLS shape functions of `cloud` at `point`, with derivatives up to `depth`.
pub fn evaluate_shape(
    point: Point,
    cloud: &NodeCloud,
    order: BasisOrder,
    depth: DerivDepth,
) -> Result<ShapeEval> {
    if depth == DerivDepth::Second && order == BasisOrder::Linear {
        return Err(Error::Usage(
            "second derivatives require the quadratic basis".into(),
        ));
    }
    let m = order.size();

    let mut active = Vec::with_capacity(32);
    let mut weights: Vec<WeightDerivs> = Vec::with_capacity(32);
    let (mut lx, mut ly) = (0.0f64, 0.0f64);
    cloud.for_each_covering(point, order, |i| {
        let (dx, dy) = cloud.support(i, order);
        let wd = tensor(point, cloud.nodes[i], dx, dy);
        if wd.w > 0.0 {
            active.push(i);
            weights.push(wd);
            lx = lx.max(dx);
            ly = ly.max(dy);
        }
    });
    if active.len() < m {
        return Err(Error::Coverage {
            point,
            active: active.len(),
            condition: f64::INFINITY,
        });
    }

    let pis: Vec<Vec6> = active
        .iter()
        .map(|&i| {
            let q = cloud.nodes[i];
            basis(order, (q.x - point.x) / lx, (q.y - point.y) / ly)
        })
        .collect();

    let need1 = depth >= DerivDepth::First;
    let need2 = depth >= DerivDepth::Second;

    let mut a = [[0.0; M]; M];
    let mut ax = [[0.0; M]; M];
    let mut ay = [[0.0; M]; M];
    let mut axx = [[0.0; M]; M];
    let mut ayy = [[0.0; M]; M];
    let mut axy = [[0.0; M]; M];
    for (p, w) in pis.iter().zip(&weights) {
        for r in 0..m {
            for c in 0..=r {
                let pp = p[r] * p[c];
                a[r][c] += w.w * pp;
                if need1 {
                    ax[r][c] += w.wx * pp;
                    ay[r][c] += w.wy * pp;
                }
                if need2 {
                    axx[r][c] += w.wxx * pp;
                    ayy[r][c] += w.wyy * pp;
                    axy[r][c] += w.wxy * pp;
                }
            }
        }
    }
    #[allow(clippy::needless_range_loop)]
    for mat in [&mut a, &mut ax, &mut ay, &mut axx, &mut ayy, &mut axy] {
        for r in 0..m {
            for c in 0..r {
                mat[c][r] = mat[r][c];
            }
        }
    }

    let mut l = a;
    let condition = match cholesky(&mut l, m) {
        Some(k) if k <= MAX_CONDITION => k,
        Some(k) => {
            return Err(Error::Coverage {
                point,
                active: active.len(),
                condition: k,
            })
        }
        None => {
            return Err(Error::Coverage {
                point,
                active: active.len(),
                condition: f64::INFINITY,
            })
        }
    };
    debug_assert!(condition.is_finite());

    // p and its derivatives at the evaluation point (local origin)
    let p0: Vec6 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut px: Vec6 = [0.0; M];
    let mut py: Vec6 = [0.0; M];
    px[1] = 1.0 / lx;
    py[2] = 1.0 / ly;
    let mut pxx: Vec6 = [0.0; M];
    let mut pyy: Vec6 = [0.0; M];
    let mut pxy: Vec6 = [0.0; M];
    if order == BasisOrder::Quadratic {
        pxx[3] = 2.0 / (lx * lx);
        pxy[4] = 1.0 / (lx * ly);
        pyy[5] = 2.0 / (ly * ly);
    }

    let mut g = p0;
    chol_solve(&l, m, &mut g);

    let n_act = active.len();
    let mut out = ShapeEval {
        phi: Vec::with_capacity(n_act),
        ..Default::default()
    };
    for (p, w) in pis.iter().zip(&weights) {
        out.phi.push(dot(&g, p, m) * w.w);
    }

    if need1 {
        let mut gx = px;
        mat_vec_sub(&mut gx, &ax, &g, m, 1.0);
        chol_solve(&l, m, &mut gx);
        let mut gy = py;
        mat_vec_sub(&mut gy, &ay, &g, m, 1.0);
        chol_solve(&l, m, &mut gy);

        out.dphi_dx.reserve(n_act);
        out.dphi_dy.reserve(n_act);
        for (p, w) in pis.iter().zip(&weights) {
            let gp = dot(&g, p, m);
            out.dphi_dx.push(dot(&gx, p, m) * w.w + gp * w.wx);
            out.dphi_dy.push(dot(&gy, p, m) * w.w + gp * w.wy);
        }

        if need2 {
            let mut gxx = pxx;
            mat_vec_sub(&mut gxx, &ax, &gx, m, 2.0);
            mat_vec_sub(&mut gxx, &axx, &g, m, 1.0);
            chol_solve(&l, m, &mut gxx);

            let mut gyy = pyy;
            mat_vec_sub(&mut gyy, &ay, &gy, m, 2.0);
            mat_vec_sub(&mut gyy, &ayy, &g, m, 1.0);
            chol_solve(&l, m, &mut gyy);

            let mut gxy = pxy;
            mat_vec_sub(&mut gxy, &ax, &gy, m, 1.0);
            mat_vec_sub(&mut gxy, &ay, &gx, m, 1.0);
            mat_vec_sub(&mut gxy, &axy, &g, m, 1.0);
            chol_solve(&l, m, &mut gxy);

            out.d2phi_dxx.reserve(n_act);
            out.d2phi_dyy.reserve(n_act);
            out.d2phi_dxy.reserve(n_act);
            for (p, w) in pis.iter().zip(&weights) {
                let gp = dot(&g, p, m);
                let gxp = dot(&gx, p, m);
                let gyp = dot(&gy, p, m);
                out.d2phi_dxx
                    .push(dot(&gxx, p, m) * w.w + 2.0 * gxp * w.wx + gp * w.wxx);
                out.d2phi_dyy
                    .push(dot(&gyy, p, m) * w.w + 2.0 * gyp * w.wy + gp * w.wyy);
                out.d2phi_dxy.push(
                    dot(&gxy, p, m) * w.w + gxp * w.wy + gyp * w.wx + gp * w.wxy,
                );
            }
        }
    }
    out.active = active;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_uniform_grid, CircleGrading, make_circular_cloud};
    use approx::assert_relative_eq;

    #[test]
    fn spline_values() {
        assert_relative_eq!(cubic_spline_weight(0.0).unwrap().0, 2.0 / 3.0);
        let left = spline(0.5);
        let right_branch = 4.0 / 3.0 - 2.0 + 1.0 - 1.0 / 6.0;
        assert_relative_eq!(left.0, 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(right_branch, 1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(cubic_spline_weight(1.2).unwrap(), (0.0, 0.0, 0.0));
        assert!(matches!(cubic_spline_weight(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn spline_is_c1_at_breakpoints() {
        let eps = 1e-9;
        for r in [0.5, 1.0] {
            let a = spline(r - eps);
            let b = spline(r + eps);
            assert!((a.0 - b.0).abs() < 1e-8);
            assert!((a.1 - b.1).abs() < 1e-7);
        }
    }

    #[test]
    fn tensor_weight_cases() {
        let o = Point::new(0.3, 0.4);
        let w = tensor_weight(o, o, (0.2, 0.2)).unwrap();
        assert_relative_eq!(w.w, 4.0 / 9.0, epsilon = 1e-15);
        let w = tensor_weight(Point::new(0.6, 0.4), o, (0.2, 0.2)).unwrap();
        assert_eq!(w.w, 0.0);
        let w = tensor_weight(Point::new(0.4, 0.5), o, (0.2, 0.2)).unwrap();
        assert_relative_eq!(w.w, 1.0 / 36.0, epsilon = 1e-14);
        assert!(tensor_weight(o, o, (0.0, 1.0)).is_err());
    }

    #[test]
    fn tensor_weight_derivatives_match_finite_differences() {
        let node = Point::new(0.5, 0.5);
        let s = (0.3, 0.25);
        let h = 1e-6;
        for &(x, y) in &[(0.62, 0.41), (0.33, 0.58), (0.71, 0.66)] {
            let w = tensor_weight(Point::new(x, y), node, s).unwrap();
            let f = |x: f64, y: f64| tensor_weight(Point::new(x, y), node, s).unwrap();
            let fx = (f(x + h, y).w - f(x - h, y).w) / (2.0 * h);
            let fy = (f(x, y + h).w - f(x, y - h).w) / (2.0 * h);
            let fxx = (f(x + h, y).wx - f(x - h, y).wx) / (2.0 * h);
            let fxy = (f(x, y + h).wx - f(x, y - h).wx) / (2.0 * h);
            assert_relative_eq!(w.wx, fx, max_relative = 1e-6, epsilon = 1e-8);
            assert_relative_eq!(w.wy, fy, max_relative = 1e-6, epsilon = 1e-8);
            assert_relative_eq!(w.wxx, fxx, max_relative = 1e-5, epsilon = 1e-6);
            assert_relative_eq!(w.wxy, fxy, max_relative = 1e-5, epsilon = 1e-6);
        }
    }

    #[test]
    fn partition_of_unity_and_reproduction() {
        let cloud = make_uniform_grid(1.0, 1.0, 8, 8).unwrap();
        let ones = vec![1.0; cloud.len()];
        let quad: Vec<f64> = cloud.nodes.iter().map(|p| p.x * p.x + p.x * p.y).collect();
        for &(x, y) in &[(0.5, 0.5), (0.013, 0.97), (0.0, 0.0), (0.77, 0.31)] {
            let s = evaluate_shape(Point::new(x, y), &cloud, BasisOrder::Quadratic, DerivDepth::Second)
                .unwrap();
            assert_relative_eq!(s.apply(Deriv::Value, &ones), 1.0, epsilon = 1e-12);
            for d in [Deriv::Dx, Deriv::Dy, Deriv::Dxx, Deriv::Dyy, Deriv::Dxy] {
                assert!(s.apply(d, &ones).abs() < 1e-9, "{d:?}");
            }
            assert_relative_eq!(s.apply(Deriv::Value, &quad), x * x + x * y, epsilon = 1e-12);
            assert_relative_eq!(s.apply(Deriv::Dxx, &quad), 2.0, epsilon = 1e-8);
            assert_relative_eq!(s.apply(Deriv::Dxy, &quad), 1.0, epsilon = 1e-8);
            assert!(s.apply(Deriv::Dyy, &quad).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_basis_rejects_second_derivatives() {
        let cloud = make_uniform_grid(1.0, 1.0, 6, 6).unwrap();
        let r = evaluate_shape(Point::new(0.5, 0.5), &cloud, BasisOrder::Linear, DerivDepth::Second);
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn linear_basis_reproduces_linear_fields() {
        let cloud = make_uniform_grid(1.0, 1.0, 6, 6).unwrap();
        let f: Vec<f64> = cloud.nodes.iter().map(|p| 2.0 * p.x - 3.0 * p.y + 0.5).collect();
        let s = evaluate_shape(Point::new(0.21, 0.93), &cloud, BasisOrder::Linear, DerivDepth::First)
            .unwrap();
        assert_relative_eq!(s.apply(Deriv::Value, &f), 2.0 * 0.21 - 3.0 * 0.93 + 0.5, epsilon = 1e-12);
        assert_relative_eq!(s.apply(Deriv::Dx, &f), 2.0, epsilon = 1e-10);
        assert_relative_eq!(s.apply(Deriv::Dy, &f), -3.0, epsilon = 1e-10);
    }

    #[test]
    fn sparse_cloud_reports_coverage_error() {
        let cloud = make_uniform_grid(1.0, 1.0, 6, 6)
            .unwrap()
            .with_support_scale(crate::geometry::SupportScale { linear: 0.6, quadratic: 0.6 })
            .unwrap();
        let r = evaluate_shape(Point::new(0.5, 0.5), &cloud, BasisOrder::Quadratic, DerivDepth::Value);
        assert!(matches!(r, Err(Error::Coverage { .. })));
    }

    #[test]
    fn kronecker_delta_fails_on_generic_cloud() {
        let cloud = make_uniform_grid(1.0, 1.0, 8, 8).unwrap();
        let worst = (0..cloud.len())
            .map(|i| {
                let s = evaluate_shape(cloud.nodes[i], &cloud, BasisOrder::Quadratic, DerivDepth::Value)
                    .unwrap();
                let k = s.active.iter().position(|&j| j == i).unwrap();
                (s.phi[k] - 1.0).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst > 1e-3, "{worst}");
    }

    #[test]
    fn circle_cloud_is_covered_everywhere() {
        let cloud = make_circular_cloud(1.0, CircleGrading::default()).unwrap();
        for k in 0..400 {
            let t = k as f64 * 0.7312;
            let r = ((k as f64 + 0.5) / 400.0).sqrt() * 0.999;
            let p = Point::new(r * t.cos(), r * t.sin());
            evaluate_shape(p, &cloud, BasisOrder::Quadratic, DerivDepth::Second).unwrap();
            evaluate_shape(p, &cloud, BasisOrder::Linear, DerivDepth::First).unwrap();
        }
    }
}
