//! Riesz–Caputo fractional derivatives of MLS approximants.
//!
//! Along axis `j` with truncated horizon `(l_A, l_B)`:
//!
//! ```text
//! D^α ψ(x) = (1-α)/2 [ l_A^(α-1) ∫_{x-l_A}^{x} ψ'(s) |x-s|^(-α) ds
//!                     + l_B^(α-1) ∫_{x}^{x+l_B} ψ'(s) |x-s|^(-α) ds ]
//! ```
//!
//! Mapping the left interval with `s = x - l_A (1-ζ)/2` (right:
//! `s = x + l_B (1+ζ)/2`) turns each side into
//! `(1-α) 2^(α-2) ∫_{-1}^{1} ψ'(s(ζ)) (1∓ζ)^(-α) dζ`; the horizon length
//! cancels and the singular factor becomes the Gauss–Jacobi weight.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Axis, BasisOrder, Domain, Horizon, NodeCloud, Point, MIN_HORIZON_FRACTION};
use crate::mls::{evaluate_shape, Deriv, DerivDepth, ShapeEval};
use crate::quadrature::{cached_jacobi_left, cached_jacobi_right, QuadRule};

/// Default number of Gauss–Jacobi points per one-sided horizon integral.
pub const DEFAULT_GJ_POINTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracParams {
    pub alpha: f64,
    pub h_l: f64,
}

impl FracParams {
    pub fn new(alpha: f64, h_l: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!(
                "fractional order alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if !(h_l > 0.0 && h_l.is_finite()) {
            return Err(Error::config(format!("horizon length h_l must be positive, got {h_l}")));
        }
        Ok(FracParams { alpha, h_l })
    }

    /// `α = 1` reduces every fractional row to its local counterpart.
    pub fn is_local(&self) -> bool {
        self.alpha == 1.0
    }
}

/// Left/right Gauss–Jacobi rule pair for one `α`.
#[derive(Debug, Clone)]
pub struct FracRules {
    pub left: Arc<QuadRule>,
    pub right: Arc<QuadRule>,
}

impl FracRules {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        Ok(FracRules {
            left: cached_jacobi_left(n, alpha)?,
            right: cached_jacobi_right(n, alpha)?,
        })
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// Sparse row over node indices, sorted by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseRow {
    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(&self.val)
            .map(|(&i, &v)| v * values[i as usize])
            .sum()
    }

    pub fn sum(&self) -> f64 {
        self.val.iter().sum()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut d = vec![0.0; n];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            d[i as usize] += v;
        }
        d
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().map(|&i| i as usize).zip(self.val.iter().copied())
    }

    fn from_shape(s: &ShapeEval, which: Deriv) -> Self {
        let mut pairs: Vec<(u32, f64)> = s
            .active
            .iter()
            .zip(s.row(which))
            .map(|(&i, &v)| (i as u32, v))
            .collect();
        pairs.sort_unstable_by_key(|p| p.0);
        SparseRow {
            idx: pairs.iter().map(|p| p.0).collect(),
            val: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Sum of two rows.
    pub fn add(&self, other: &SparseRow) -> SparseRow {
        let mut out = SparseRow::default();
        let (mut i, mut j) = (0, 0);
        while i < self.idx.len() || j < other.idx.len() {
            let a = self.idx.get(i).copied().unwrap_or(u32::MAX);
            let b = other.idx.get(j).copied().unwrap_or(u32::MAX);
            if a == b {
                out.idx.push(a);
                out.val.push(self.val[i] + other.val[j]);
                i += 1;
                j += 1;
            } else if a < b {
                out.idx.push(a);
                out.val.push(self.val[i]);
                i += 1;
            } else {
                out.idx.push(b);
                out.val.push(other.val[j]);
                j += 1;
            }
        }
        out
    }
}

/// Dense scatter buffer that remembers which entries were touched.
struct Accum {
    dense: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<u32>,
}

impl Accum {
    fn new(n: usize) -> Self {
        Accum {
            dense: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, s: &ShapeEval, which: Deriv, scale: f64) {
        for (&i, &v) in s.active.iter().zip(s.row(which)) {
            if !self.seen[i] {
                self.seen[i] = true;
                self.touched.push(i as u32);
            }
            self.dense[i] += scale * v;
        }
    }

    fn finish(mut self) -> SparseRow {
        self.touched.sort_unstable();
        let val = self.touched.iter().map(|&i| self.dense[i as usize]).collect();
        SparseRow {
            idx: self.touched,
            val,
        }
    }
}

/// Fractional strain-displacement rows at one evaluation point.
///
/// The in-plane fields share a basis, so `D^α v₀` rows coincide with the
/// `D^α u₀` rows; see [`FracBMatrices::bv_x`]. `bw_xy` is the `y`-fractional
/// derivative of `∂w/∂x` and `bw_yx` the `x`-fractional derivative of
/// `∂w/∂y`; they differ in general.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FracBMatrices {
    pub bu_x: SparseRow,
    pub bu_y: SparseRow,
    pub bw_x: SparseRow,
    pub bw_y: SparseRow,
    pub bw_xx: SparseRow,
    pub bw_yy: SparseRow,
    pub bw_xy: SparseRow,
    pub bw_yx: SparseRow,
}

impl FracBMatrices {
    pub fn bv_x(&self) -> &SparseRow {
        &self.bu_x
    }

    pub fn bv_y(&self) -> &SparseRow {
        &self.bu_y
    }

    /// All ten rows in a fixed order with their names.
    pub fn named_rows(&self) -> [(&'static str, &SparseRow); 10] {
        [
            ("Bu_x", &self.bu_x),
            ("Bu_y", &self.bu_y),
            ("Bv_x", &self.bu_x),
            ("Bv_y", &self.bu_y),
            ("Bw_x", &self.bw_x),
            ("Bw_y", &self.bw_y),
            ("Bw_xx", &self.bw_xx),
            ("Bw_yy", &self.bw_yy),
            ("Bw_xy", &self.bw_xy),
            ("Bw_yx", &self.bw_yx),
        ]
    }
}

/// Rows of the integer-order derivatives feeding each fractional row along
/// `axis`: `(basis, derivative)` pairs in output order.
fn axis_plan(axis: Axis) -> [(BasisOrder, Deriv); 4] {
    match axis {
        Axis::X => [
            (BasisOrder::Linear, Deriv::Dx),
            (BasisOrder::Quadratic, Deriv::Dx),
            (BasisOrder::Quadratic, Deriv::Dxx),
            (BasisOrder::Quadratic, Deriv::Dxy),
        ],
        Axis::Y => [
            (BasisOrder::Linear, Deriv::Dy),
            (BasisOrder::Quadratic, Deriv::Dy),
            (BasisOrder::Quadratic, Deriv::Dyy),
            (BasisOrder::Quadratic, Deriv::Dxy),
        ],
    }
}

/// Sample points `s(ζ)` and combined weights for both sides of the horizon.
fn horizon_samples(
    point: Point,
    axis: Axis,
    horizon: &Horizon,
    alpha: f64,
    rules: &FracRules,
) -> Vec<(Point, f64)> {
    let (la, lb) = horizon.along(axis);
    let x = point.coord(axis);
    let c = (1.0 - alpha) * 2f64.powf(alpha - 2.0);
    let mut out = Vec::with_capacity(rules.left.len() + rules.right.len());
    for (z, w) in rules.left.iter() {
        out.push((point.with_coord(axis, x - 0.5 * la * (1.0 - z)), c * w));
    }
    for (z, w) in rules.right.iter() {
        out.push((point.with_coord(axis, x + 0.5 * lb * (1.0 + z)), c * w));
    }
    out
}

fn check_horizon(point: Point, axis: Axis, horizon: &Horizon, domain: &Domain) -> Result<()> {
    let (la, lb) = horizon.along(axis);
    let (ea, eb) = domain.chord_extents(point, axis);
    let slack = MIN_HORIZON_FRACTION * horizon.h_l * 1.0001 + 1e-12 * domain.length();
    if !(la > 0.0 && lb > 0.0) || la > ea + slack || lb > eb + slack {
        return Err(Error::Invariant(format!(
            "horizon ({la}, {lb}) along {axis:?} at ({}, {}) leaves the domain",
            point.x, point.y
        )));
    }
    Ok(())
}

/// One fractional row: `D^α_axis` applied to the integer row `base` of the
/// given basis.
#[allow(clippy::too_many_arguments)]
pub fn frac_row(
    point: Point,
    axis: Axis,
    order: BasisOrder,
    base: Deriv,
    horizon: &Horizon,
    alpha: f64,
    rules: &FracRules,
    cloud: &NodeCloud,
) -> Result<SparseRow> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "quadrature path needs alpha in (0, 1), got {alpha}"
        )));
    }
    check_horizon(point, axis, horizon, &cloud.domain)?;
    let depth = base.depth().max(DerivDepth::First);
    let mut acc = Accum::new(cloud.len());
    for (s, w) in horizon_samples(point, axis, horizon, alpha, rules) {
        let eval = evaluate_shape(s, cloud, order, depth)?;
        acc.add(&eval, base, w);
    }
    Ok(acc.finish())
}

/// All fractional rows at `point`, with horizons truncated at the domain
/// boundary. `rules` is ignored when `α = 1`.
pub fn frac_b_all(
    point: Point,
    params: &FracParams,
    rules: Option<&FracRules>,
    cloud: &NodeCloud,
) -> Result<FracBMatrices> {
    if params.is_local() {
        let lin = evaluate_shape(point, cloud, BasisOrder::Linear, DerivDepth::First)?;
        let quad = evaluate_shape(point, cloud, BasisOrder::Quadratic, DerivDepth::Second)?;
        return Ok(FracBMatrices {
            bu_x: SparseRow::from_shape(&lin, Deriv::Dx),
            bu_y: SparseRow::from_shape(&lin, Deriv::Dy),
            bw_x: SparseRow::from_shape(&quad, Deriv::Dx),
            bw_y: SparseRow::from_shape(&quad, Deriv::Dy),
            bw_xx: SparseRow::from_shape(&quad, Deriv::Dxx),
            bw_yy: SparseRow::from_shape(&quad, Deriv::Dyy),
            bw_xy: SparseRow::from_shape(&quad, Deriv::Dxy),
            bw_yx: SparseRow::from_shape(&quad, Deriv::Dxy),
        });
    }
    let rules = rules.ok_or_else(|| Error::Usage("fractional rows need Gauss-Jacobi rules".into()))?;
    let horizon = crate::geometry::truncate_horizon(point, params.h_l, &cloud.domain)?;
    frac_b_with_horizon(point, params.alpha, &horizon, rules, cloud)
}

/// As [`frac_b_all`] but with an explicit horizon and `α < 1`.
pub fn frac_b_with_horizon(
    point: Point,
    alpha: f64,
    horizon: &Horizon,
    rules: &FracRules,
    cloud: &NodeCloud,
) -> Result<FracBMatrices> {
    let n = cloud.len();
    let mut rows: Vec<SparseRow> = Vec::with_capacity(8);
    for axis in Axis::BOTH {
        check_horizon(point, axis, horizon, &cloud.domain)?;
        let plan = axis_plan(axis);
        let mut acc: Vec<Accum> = (0..4).map(|_| Accum::new(n)).collect();
        for (s, w) in horizon_samples(point, axis, horizon, alpha, rules) {
            let lin = evaluate_shape(s, cloud, BasisOrder::Linear, DerivDepth::First)?;
            let quad = evaluate_shape(s, cloud, BasisOrder::Quadratic, DerivDepth::Second)?;
            for (a, &(order, d)) in acc.iter_mut().zip(&plan) {
                let src = if order == BasisOrder::Linear { &lin } else { &quad };
                a.add(src, d, w);
            }
        }
        rows.extend(acc.into_iter().map(Accum::finish));
    }
    let mut it = rows.into_iter();
    let mut next = || it.next().unwrap();
    let (bu_x, bw_x, bw_xx, bw_yx) = (next(), next(), next(), next());
    let (bu_y, bw_y, bw_yy, bw_xy) = (next(), next(), next(), next());
    Ok(FracBMatrices {
        bu_x,
        bu_y,
        bw_x,
        bw_y,
        bw_xx,
        bw_yy,
        bw_xy,
        bw_yx,
    })
}

/// Power-law kernel weighting the interaction between `xj` and `sj`.
pub fn attenuation(xj: f64, sj: f64, l_a: f64, l_b: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let d = xj - sj;
    if d == 0.0 {
        return Err(Error::Domain("attenuation kernel is unbounded at s = x".into()));
    }
    let l = if d > 0.0 { l_a } else { l_b };
    if !(l > 0.0) || d.abs() >= l {
        return Err(Error::Domain(format!(
            "s = {sj} lies outside the horizon ({}, {})",
            xj - l_a,
            xj + l_b
        )));
    }
    Ok(0.5 * (1.0 - alpha) * l.powf(alpha - 1.0) * d.abs().powf(-alpha))
}

/// Write `(point, x, y, row, node, value)` records for inspection.
pub fn write_rows_csv<W: Write>(out: W, samples: &[(Point, FracBMatrices)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["point", "x", "y", "row", "node", "value"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for (k, (p, fb)) in samples.iter().enumerate() {
        for (name, row) in fb.named_rows() {
            for (i, v) in row.iter() {
                w.serialize((k, p.x, p.y, name, i, v))
                    .map_err(|e| Error::Parse(e.to_string()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_uniform_grid;
    use approx::assert_relative_eq;

    fn field(cloud: &NodeCloud, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        cloud.nodes.iter().map(|p| f(p.x, p.y)).collect()
    }

    #[test]
    fn params_validation() {
        assert!(FracParams::new(1.5, 0.5).is_err());
        assert!(FracParams::new(0.0, 0.5).is_err());
        assert!(FracParams::new(0.8, 0.0).is_err());
        assert!(FracParams::new(1.0, 0.5).unwrap().is_local());
    }

    #[test]
    fn attenuation_examples() {
        assert_relative_eq!(attenuation(0.5, 0.25, 1.0, 1.0, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        let l = attenuation(0.5, 0.4, 0.3, 0.3, 0.7).unwrap();
        let r = attenuation(0.5, 0.6, 0.3, 0.3, 0.7).unwrap();
        assert_relative_eq!(l, r, epsilon = 1e-15);
        assert!(attenuation(0.5, 0.4, 0.3, 0.3, 0.999_999).unwrap() < 1e-5);
        assert!(matches!(attenuation(0.5, 0.5, 0.3, 0.3, 0.5), Err(Error::Domain(_))));
        assert!(attenuation(0.5, 0.1, 0.3, 0.3, 0.5).is_err());
    }

    #[test]
    fn polynomial_oracles() {
        let cloud = make_uniform_grid(1.0, 1.0, 12, 12).unwrap();
        let ones = field(&cloud, |_, _| 1.0);
        let lin = field(&cloud, |x, _| x);
        let sq = field(&cloud, |x, _| x * x);
        let p = Point::new(0.43, 0.57);
        for alpha in [0.3, 0.7, 0.9] {
            let rules = FracRules::new(30, alpha).unwrap();
            let h = Horizon { l_a_x: 0.2, l_b_x: 0.35, l_a_y: 0.3, l_b_y: 0.3, h_l: 0.4 };
            let fb = frac_b_with_horizon(p, alpha, &h, &rules, &cloud).unwrap();
            for (name, row) in fb.named_rows() {
                assert!(row.dot(&ones).abs() < 1e-10, "{name}");
            }
            assert_relative_eq!(fb.bu_x.dot(&lin), 1.0, epsilon = 1e-8);
            assert_relative_eq!(fb.bw_x.dot(&lin), 1.0, epsilon = 1e-8);
            let expect = 2.0 * p.x + (1.0 - alpha) * (0.35 - 0.2) / (2.0 - alpha);
            assert_relative_eq!(fb.bw_x.dot(&sq), expect, epsilon = 1e-6);
            assert_relative_eq!(fb.bw_xx.dot(&sq), 2.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn mixed_rows_differ_under_asymmetric_truncation() {
        let cloud = make_uniform_grid(1.0, 1.0, 12, 12).unwrap();
        let cubic = field(&cloud, |x, y| x * x * y);
        let p = Point::new(0.2, 0.5);
        let params = FracParams::new(0.7, 0.5).unwrap();
        let rules = FracRules::new(30, 0.7).unwrap();
        let fb = frac_b_all(p, &params, Some(&rules), &cloud).unwrap();
        assert!((fb.bw_xy.dot(&cubic) - fb.bw_yx.dot(&cubic)).abs() > 1e-3);
    }

    #[test]
    fn local_limit_is_verbatim() {
        let cloud = make_uniform_grid(1.0, 1.0, 10, 10).unwrap();
        let p = Point::new(0.31, 0.62);
        let fb = frac_b_all(p, &FracParams::new(1.0, 0.5).unwrap(), None, &cloud).unwrap();
        let q = evaluate_shape(p, &cloud, BasisOrder::Quadratic, DerivDepth::Second).unwrap();
        let dense = fb.bw_xx.to_dense(cloud.len());
        for (&i, &v) in q.active.iter().zip(&q.d2phi_dxx) {
            assert_eq!(dense[i].to_bits(), v.to_bits());
        }
        assert_eq!(fb.bw_xy, fb.bw_yx);
    }

    #[test]
    fn near_local_matches_local() {
        let cloud = make_uniform_grid(1.0, 1.0, 12, 12).unwrap();
        let f = field(&cloud, |x, y| (1.3 * x).sin() * (0.7 * y + 0.2).cos());
        let p = Point::new(0.5, 0.5);
        let loc = frac_b_all(p, &FracParams::new(1.0, 0.3).unwrap(), None, &cloud).unwrap();
        let rules = FracRules::new(30, 0.9999).unwrap();
        let near = frac_b_all(p, &FracParams::new(0.9999, 0.3).unwrap(), Some(&rules), &cloud).unwrap();
        for ((name, a), (_, b)) in loc.named_rows().iter().zip(near.named_rows()) {
            let (va, vb) = (a.dot(&f), b.dot(&f));
            assert!((va - vb).abs() <= 1e-3 * va.abs().max(1e-2), "{name}: {va} vs {vb}");
        }
    }

    #[test]
    fn frac_row_matches_batched_rows() {
        let cloud = make_uniform_grid(1.0, 1.0, 8, 8).unwrap();
        let p = Point::new(0.6, 0.3);
        let h = crate::geometry::truncate_horizon(p, 0.5, &cloud.domain).unwrap();
        let rules = FracRules::new(20, 0.8).unwrap();
        let fb = frac_b_with_horizon(p, 0.8, &h, &rules, &cloud).unwrap();
        let r = frac_row(p, Axis::Y, BasisOrder::Quadratic, Deriv::Dxy, &h, 0.8, &rules, &cloud).unwrap();
        assert_eq!(r, fb.bw_xy);
    }

    #[test]
    fn overlong_horizon_is_an_invariant_error() {
        let cloud = make_uniform_grid(1.0, 1.0, 8, 8).unwrap();
        let rules = FracRules::new(10, 0.8).unwrap();
        let h = Horizon::symmetric(0.5);
        let r = frac_b_with_horizon(Point::new(0.1, 0.5), 0.8, &h, &rules, &cloud);
        assert!(matches!(r, Err(Error::Invariant(_))));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let cloud = make_uniform_grid(1.0, 1.0, 6, 6).unwrap();
        let p = Point::new(0.5, 0.5);
        let fb = frac_b_all(p, &FracParams::new(1.0, 0.5).unwrap(), None, &cloud).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &[(p, fb)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("point,x,y,row,node,value"));
        assert!(text.lines().count() > 10);
    }
}
