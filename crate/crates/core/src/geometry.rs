//! Node clouds, background integration meshes and truncated nonlocal horizons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::cached_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn coord(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }

    /// Copy of `self` with the `axis` coordinate replaced.
    pub fn with_coord(&self, axis: Axis, value: f64) -> Point {
        match axis {
            Axis::X => Point::new(value, self.y),
            Axis::Y => Point::new(self.x, value),
        }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];
}

/// The plate mid-plane. Rectangles span `[0, a] × [0, b]`; circles are
/// centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Domain {
    Rectangle { a: f64, b: f64 },
    Circle { radius: f64 },
}

impl Domain {
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        match *self {
            Domain::Rectangle { a, b } => {
                p.x >= -tol && p.x <= a + tol && p.y >= -tol && p.y <= b + tol
            }
            Domain::Circle { radius } => p.x.hypot(p.y) <= radius + tol,
        }
    }

    /// Distances from `p` to the boundary along `-axis` and `+axis`.
    pub fn chord_extents(&self, p: Point, axis: Axis) -> (f64, f64) {
        match (*self, axis) {
            (Domain::Rectangle { a, .. }, Axis::X) => (p.x, a - p.x),
            (Domain::Rectangle { b, .. }, Axis::Y) => (p.y, b - p.y),
            (Domain::Circle { radius }, _) => {
                let along = p.coord(axis);
                let across = match axis {
                    Axis::X => p.y,
                    Axis::Y => p.x,
                };
                let half = (radius * radius - across * across).max(0.0).sqrt();
                (along + half, half - along)
            }
        }
    }

    /// Characteristic length `a` used by the normalizations.
    pub fn length(&self) -> f64 {
        match *self {
            Domain::Rectangle { a, .. } => a,
            Domain::Circle { radius } => radius,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Domain::Rectangle { a, b } => a * b,
            Domain::Circle { radius } => std::f64::consts::PI * radius * radius,
        }
    }

    /// Default probe point: plate centre.
    pub fn center(&self) -> Point {
        match *self {
            Domain::Rectangle { a, b } => Point::new(0.5 * a, 0.5 * b),
            Domain::Circle { .. } => Point::new(0.0, 0.0),
        }
    }
}

/// Boundary membership flags of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct BoundaryTag(u8);

impl BoundaryTag {
    pub const NONE: BoundaryTag = BoundaryTag(0);
    pub const LEFT: BoundaryTag = BoundaryTag(1);
    pub const RIGHT: BoundaryTag = BoundaryTag(2);
    pub const BOTTOM: BoundaryTag = BoundaryTag(4);
    pub const TOP: BoundaryTag = BoundaryTag(8);
    pub const RIM: BoundaryTag = BoundaryTag(16);

    pub fn contains(self, other: BoundaryTag) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn is_boundary(self) -> bool {
        self.0 != 0
    }
}

impl std::ops::BitOr for BoundaryTag {
    type Output = BoundaryTag;
    fn bitor(self, rhs: BoundaryTag) -> BoundaryTag {
        BoundaryTag(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for BoundaryTag {
    fn bitor_assign(&mut self, rhs: BoundaryTag) {
        self.0 |= rhs.0;
    }
}

/// Polynomial order of an MLS basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisOrder {
    /// `1, x, y` (m = 3), used for in-plane displacements.
    Linear,
    /// `1, x, y, x², xy, y²` (m = 6), used for the transverse displacement.
    Quadratic,
}

impl BasisOrder {
    pub fn size(self) -> usize {
        match self {
            BasisOrder::Linear => 3,
            BasisOrder::Quadratic => 6,
        }
    }
}

/// Support length as a multiple of local nodal spacing, per basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportScale {
    pub linear: f64,
    pub quadratic: f64,
}

impl Default for SupportScale {
    fn default() -> Self {
        SupportScale {
            linear: 1.5,
            quadratic: 2.5,
        }
    }
}

impl SupportScale {
    pub fn for_order(&self, order: BasisOrder) -> f64 {
        match order {
            BasisOrder::Linear => self.linear,
            BasisOrder::Quadratic => self.quadratic,
        }
    }
}

/// Scattered nodes with per-node spacing and boundary tags.
///
/// Support lengths are `scale × spacing`, so the same cloud serves the
/// linear and quadratic approximations with different support sizes.
#[derive(Debug, Clone)]
pub struct NodeCloud {
    pub nodes: Vec<Point>,
    pub spacing_x: Vec<f64>,
    pub spacing_y: Vec<f64>,
    pub boundary: Vec<BoundaryTag>,
    pub scale: SupportScale,
    pub domain: Domain,
    index: BucketIndex,
}

impl NodeCloud {
    pub fn new(
        domain: Domain,
        nodes: Vec<Point>,
        spacing_x: Vec<f64>,
        spacing_y: Vec<f64>,
        boundary: Vec<BoundaryTag>,
        scale: SupportScale,
    ) -> Result<Self> {
        let n = nodes.len();
        if spacing_x.len() != n || spacing_y.len() != n || boundary.len() != n {
            return Err(Error::config("node cloud arrays differ in length"));
        }
        if scale.linear <= 0.0 || scale.quadratic <= 0.0 {
            return Err(Error::config("support scale must be positive"));
        }
        if spacing_x.iter().chain(&spacing_y).any(|&s| !(s > 0.0)) {
            return Err(Error::config("nodal spacing must be strictly positive"));
        }
        let tol = 1e-9 * domain.length();
        if let Some(p) = nodes.iter().find(|p| !domain.contains(**p, tol)) {
            return Err(Error::config(format!(
                "node ({}, {}) lies outside the domain",
                p.x, p.y
            )));
        }
        let max_sx = scale.linear.max(scale.quadratic)
            * spacing_x.iter().copied().fold(0.0, f64::max);
        let max_sy = scale.linear.max(scale.quadratic)
            * spacing_y.iter().copied().fold(0.0, f64::max);
        let index = BucketIndex::build(&nodes, max_sx, max_sy);
        Ok(NodeCloud {
            nodes,
            spacing_x,
            spacing_y,
            boundary,
            scale,
            domain,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Support half-widths `(d_mx, d_my)` of node `i` for the given basis.
    #[inline]
    pub fn support(&self, i: usize, order: BasisOrder) -> (f64, f64) {
        let s = self.scale.for_order(order);
        (s * self.spacing_x[i], s * self.spacing_y[i])
    }

    pub fn with_support_scale(mut self, scale: SupportScale) -> Result<Self> {
        if scale.linear <= 0.0 || scale.quadratic <= 0.0 {
            return Err(Error::config("support scale must be positive"));
        }
        let s = scale.linear.max(scale.quadratic);
        let max_sx = s * self.spacing_x.iter().copied().fold(0.0, f64::max);
        let max_sy = s * self.spacing_y.iter().copied().fold(0.0, f64::max);
        self.index = BucketIndex::build(&self.nodes, max_sx, max_sy);
        self.scale = scale;
        Ok(self)
    }

    /// Calls `f(i)` for every node whose support (for `order`) strictly
    /// contains `p`, in ascending node order.
    pub fn for_each_covering<F: FnMut(usize)>(&self, p: Point, order: BasisOrder, mut f: F) {
        let s = self.scale.for_order(order);
        self.index.for_each_candidate(p, |i| {
            let q = self.nodes[i];
            if (p.x - q.x).abs() < s * self.spacing_x[i] && (p.y - q.y).abs() < s * self.spacing_y[i]
            {
                f(i);
            }
        });
    }

    pub fn covering_count(&self, p: Point, order: BasisOrder) -> usize {
        let mut count = 0;
        self.for_each_covering(p, order, |_| count += 1);
        count
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.boundary[i].is_boundary())
            .collect()
    }
}

/// Uniform bucket grid; the cell size is at least the largest support, so a
/// 3×3 neighbourhood holds every node that can cover a query point.
#[derive(Debug, Clone)]
struct BucketIndex {
    origin: Point,
    cell_x: f64,
    cell_y: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl BucketIndex {
    fn build(nodes: &[Point], reach_x: f64, reach_y: f64) -> Self {
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in nodes {
            xmin = xmin.min(p.x);
            xmax = xmax.max(p.x);
            ymin = ymin.min(p.y);
            ymax = ymax.max(p.y);
        }
        if nodes.is_empty() {
            (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
        }
        let cell_x = reach_x.max(1e-12);
        let cell_y = reach_y.max(1e-12);
        let nx = (((xmax - xmin) / cell_x).floor() as usize + 1).max(1);
        let ny = (((ymax - ymin) / cell_y).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        let origin = Point::new(xmin, ymin);
        for (i, p) in nodes.iter().enumerate() {
            let ix = (((p.x - xmin) / cell_x) as usize).min(nx - 1);
            let iy = (((p.y - ymin) / cell_y) as usize).min(ny - 1);
            buckets[iy * nx + ix].push(i);
        }
        BucketIndex {
            origin,
            cell_x,
            cell_y,
            nx,
            ny,
            buckets,
        }
    }

    fn for_each_candidate<F: FnMut(usize)>(&self, p: Point, mut f: F) {
        let fx = ((p.x - self.origin.x) / self.cell_x).floor();
        let fy = ((p.y - self.origin.y) / self.cell_y).floor();
        let ix = fx.clamp(-1.0, self.nx as f64) as i64;
        let iy = fy.clamp(-1.0, self.ny as f64) as i64;
        // sorted so callers see nodes in ascending order
        let mut found: smallvec_like::Small = smallvec_like::Small::new();
        for by in (iy - 1).max(0)..=(iy + 1).min(self.ny as i64 - 1) {
            for bx in (ix - 1).max(0)..=(ix + 1).min(self.nx as i64 - 1) {
                for &i in &self.buckets[by as usize * self.nx + bx as usize] {
                    found.push(i);
                }
            }
        }
        found.sort();
        for &i in found.as_slice() {
            f(i);
        }
    }
}

mod smallvec_like {
    /// Stack buffer for candidate indices with heap spill-over.
    pub struct Small {
        inline: [usize; 96],
        len: usize,
        spill: Vec<usize>,
    }

    impl Small {
        pub fn new() -> Self {
            Small {
                inline: [0; 96],
                len: 0,
                spill: Vec::new(),
            }
        }

        #[inline]
        pub fn push(&mut self, v: usize) {
            if !self.spill.is_empty() {
                self.spill.push(v);
            } else if self.len < self.inline.len() {
                self.inline[self.len] = v;
                self.len += 1;
            } else {
                self.spill.extend_from_slice(&self.inline[..self.len]);
                self.spill.push(v);
            }
        }

        pub fn sort(&mut self) {
            if self.spill.is_empty() {
                self.inline[..self.len].sort_unstable();
            } else {
                self.spill.sort_unstable();
            }
        }

        pub fn as_slice(&self) -> &[usize] {
            if self.spill.is_empty() {
                &self.inline[..self.len]
            } else {
                &self.spill
            }
        }
    }
}

fn check_breaks(name: &str, breaks: &[f64], lo: f64, hi: f64) -> Result<()> {
    if breaks.len() < 2 {
        return Err(Error::config(format!("{name}: need at least two breaks")));
    }
    if breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(format!("{name}: breaks must be strictly increasing")));
    }
    let tol = 1e-9 * (hi - lo).abs().max(1.0);
    if (breaks[0] - lo).abs() > tol || (breaks[breaks.len() - 1] - hi).abs() > tol {
        return Err(Error::config(format!(
            "{name}: breaks must span [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Spacing at break `k`: the larger of its two neighbouring gaps.
fn local_spacing(breaks: &[f64], k: usize) -> f64 {
    let left = if k > 0 { breaks[k] - breaks[k - 1] } else { 0.0 };
    let right = if k + 1 < breaks.len() { breaks[k + 1] - breaks[k] } else { 0.0 };
    left.max(right)
}

/// Spacing of a 1D break list at an arbitrary coordinate.
fn spacing_at(breaks: &[f64], v: f64) -> f64 {
    let k = breaks.partition_point(|&b| b <= v);
    let k = k.clamp(1, breaks.len() - 1);
    let gap = breaks[k] - breaks[k - 1];
    let mut s = gap;
    if k >= 2 {
        s = s.max(breaks[k - 1] - breaks[k - 2]);
    }
    if k + 1 < breaks.len() {
        s = s.max(breaks[k + 1] - breaks[k]);
    }
    s
}

/// Uniform `(nx+1) × (ny+1)` tensor grid on `[0,a] × [0,b]`.
pub fn make_uniform_grid(a: f64, b: f64, nx: usize, ny: usize) -> Result<NodeCloud> {
    make_uniform_grid_scaled(a, b, nx, ny, SupportScale::default())
}

pub fn make_uniform_grid_scaled(
    a: f64,
    b: f64,
    nx: usize,
    ny: usize,
    scale: SupportScale,
) -> Result<NodeCloud> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::config("plate dimensions must be positive"));
    }
    if nx < 2 || ny < 2 {
        return Err(Error::config(format!(
            "grid {nx}×{ny} is too coarse: a quadratic MLS basis needs at least 3 node lines per axis"
        )));
    }
    let xb: Vec<f64> = (0..=nx).map(|i| a * i as f64 / nx as f64).collect();
    let yb: Vec<f64> = (0..=ny).map(|j| b * j as f64 / ny as f64).collect();
    make_nonuniform_grid_scaled(a, b, &xb, &yb, scale)
}

/// Tensor-product grid through the given break lists.
pub fn make_nonuniform_grid(a: f64, b: f64, x_breaks: &[f64], y_breaks: &[f64]) -> Result<NodeCloud> {
    make_nonuniform_grid_scaled(a, b, x_breaks, y_breaks, SupportScale::default())
}

pub fn make_nonuniform_grid_scaled(
    a: f64,
    b: f64,
    x_breaks: &[f64],
    y_breaks: &[f64],
    scale: SupportScale,
) -> Result<NodeCloud> {
    check_breaks("x_breaks", x_breaks, 0.0, a)?;
    check_breaks("y_breaks", y_breaks, 0.0, b)?;
    if x_breaks.len() < 3 || y_breaks.len() < 3 {
        return Err(Error::config(
            "non-uniform grid needs at least 3 breaks per axis for a quadratic basis",
        ));
    }
    let (mx, my) = (x_breaks.len(), y_breaks.len());
    let mut nodes = Vec::with_capacity(mx * my);
    let mut sx = Vec::with_capacity(mx * my);
    let mut sy = Vec::with_capacity(mx * my);
    let mut tags = Vec::with_capacity(mx * my);
    for (j, &y) in y_breaks.iter().enumerate() {
        for (i, &x) in x_breaks.iter().enumerate() {
            nodes.push(Point::new(x, y));
            sx.push(local_spacing(x_breaks, i));
            sy.push(local_spacing(y_breaks, j));
            let mut tag = BoundaryTag::NONE;
            if i == 0 {
                tag |= BoundaryTag::LEFT;
            }
            if i == mx - 1 {
                tag |= BoundaryTag::RIGHT;
            }
            if j == 0 {
                tag |= BoundaryTag::BOTTOM;
            }
            if j == my - 1 {
                tag |= BoundaryTag::TOP;
            }
            tags.push(tag);
        }
    }
    NodeCloud::new(Domain::Rectangle { a, b }, nodes, sx, sy, tags, scale)
}

/// Break list on `[0, len]` with a refined band: `n_outer` uniform divisions
/// are split `refine` times inside `[band_lo, band_hi]`.
pub fn refined_breaks(len: f64, n_outer: usize, band_lo: f64, band_hi: f64, refine: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    let h = len / n_outer as f64;
    for k in 0..n_outer {
        let (x0, x1) = (k as f64 * h, (k + 1) as f64 * h);
        let mid = 0.5 * (x0 + x1);
        let parts = if mid > band_lo && mid < band_hi { refine.max(1) } else { 1 };
        for p in 1..=parts {
            out.push(x0 + (x1 - x0) * p as f64 / parts as f64);
        }
    }
    *out.last_mut().unwrap() = len;
    out
}

/// Rim-graded node lines for a disc: `divisions` intervals across the
/// diameter, compressed toward the rim by `bias ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleGrading {
    pub divisions: usize,
    pub bias: f64,
}

impl Default for CircleGrading {
    fn default() -> Self {
        CircleGrading {
            divisions: 16,
            bias: 0.5,
        }
    }
}

impl CircleGrading {
    /// Breaks on `[-r, r]` via `x = r((1-β)t + β sin(πt/2))`, t uniform.
    pub fn breaks(&self, radius: f64) -> Vec<f64> {
        let n = self.divisions;
        (0..=n)
            .map(|k| {
                let t = -1.0 + 2.0 * k as f64 / n as f64;
                let g = (1.0 - self.bias) * t + self.bias * (0.5 * std::f64::consts::PI * t).sin();
                radius * g
            })
            .collect()
    }
}

/// Axis-aligned node lines inside a disc, plus rim nodes where those lines
/// meet the circle.
pub fn make_circular_cloud(radius: f64, grading: CircleGrading) -> Result<NodeCloud> {
    make_circular_cloud_scaled(radius, grading, SupportScale::default())
}

pub fn make_circular_cloud_scaled(
    radius: f64,
    grading: CircleGrading,
    scale: SupportScale,
) -> Result<NodeCloud> {
    if !(radius > 0.0) {
        return Err(Error::config("circle radius must be positive"));
    }
    if grading.divisions < 6 {
        return Err(Error::config(format!(
            "circular grading with {} divisions gives insufficient MLS coverage (need ≥ 6)",
            grading.divisions
        )));
    }
    if !(0.0..1.0).contains(&grading.bias) {
        return Err(Error::config("circular grading bias must lie in [0, 1)"));
    }
    let br = grading.breaks(radius);
    if br.iter().any(|v| v.abs() > radius * (1.0 + 1e-12)) {
        return Err(Error::config("grading places node lines outside the circle"));
    }
    let mut nodes = Vec::new();
    let mut sx = Vec::new();
    let mut sy = Vec::new();
    let mut tags = Vec::new();

    // interior grid points, kept clear of the rim by a fraction of the spacing
    for (j, &y) in br.iter().enumerate() {
        for (i, &x) in br.iter().enumerate() {
            let (hx, hy) = (local_spacing(&br, i), local_spacing(&br, j));
            let gap = radius - x.hypot(y);
            if gap > 0.4 * hx.min(hy) {
                nodes.push(Point::new(x, y));
                sx.push(hx);
                sy.push(hy);
                tags.push(BoundaryTag::NONE);
            }
        }
    }

    // rim nodes at the intersections of node lines with the circle
    let mut rim: Vec<f64> = Vec::new();
    for &v in &br {
        let c = (v / radius).clamp(-1.0, 1.0);
        // x = v lines: angles ±acos(c); y = v lines: asin(c), π - asin(c)
        rim.push(c.acos());
        rim.push(-c.acos());
        rim.push(c.asin());
        rim.push(std::f64::consts::PI - c.asin());
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut angles: Vec<f64> = rim.into_iter().map(|t| t.rem_euclid(two_pi)).collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    let min_sep = 0.25 * br.windows(2).map(|w| w[1] - w[0]).fold(f64::MAX, f64::min) / radius;
    let mut kept: Vec<f64> = Vec::new();
    for t in angles {
        if kept.last().is_none_or(|&last| t - last > min_sep) {
            kept.push(t);
        }
    }
    if kept.len() > 1 && kept[0] + two_pi - kept[kept.len() - 1] <= min_sep {
        kept.pop();
    }
    for t in kept {
        let p = Point::new(radius * t.cos(), radius * t.sin());
        nodes.push(p);
        sx.push(spacing_at(&br, p.x));
        sy.push(spacing_at(&br, p.y));
        tags.push(BoundaryTag::RIM);
    }
    NodeCloud::new(Domain::Circle { radius }, nodes, sx, sy, tags, scale)
}

/// Truncated nonlocal horizon lengths at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub l_a_x: f64,
    pub l_b_x: f64,
    pub l_a_y: f64,
    pub l_b_y: f64,
    pub h_l: f64,
}

impl Horizon {
    /// `(l_A, l_B)` along `axis`.
    pub fn along(&self, axis: Axis) -> (f64, f64) {
        match axis {
            Axis::X => (self.l_a_x, self.l_b_x),
            Axis::Y => (self.l_a_y, self.l_b_y),
        }
    }

    pub fn symmetric(h_l: f64) -> Self {
        Horizon {
            l_a_x: h_l,
            l_b_x: h_l,
            l_a_y: h_l,
            l_b_y: h_l,
            h_l,
        }
    }
}

/// Relative floor on truncated horizon lengths.
pub const MIN_HORIZON_FRACTION: f64 = 1e-6;

/// Clip the intrinsic horizon `h_l` at the domain boundary along both axes.
pub fn truncate_horizon(point: Point, h_l: f64, domain: &Domain) -> Result<Horizon> {
    if !(h_l > 0.0) {
        return Err(Error::config(format!("horizon length must be positive, got {h_l}")));
    }
    let tol = 1e-12 * domain.length();
    if !domain.contains(point, tol) {
        return Err(Error::Domain(format!(
            "point ({}, {}) lies outside the domain",
            point.x, point.y
        )));
    }
    let floor = MIN_HORIZON_FRACTION * h_l;
    let clip = |d: f64| h_l.min(d).max(floor);
    let (ax, bx) = domain.chord_extents(point, Axis::X);
    let (ay, by) = domain.chord_extents(point, Axis::Y);
    Ok(Horizon {
        l_a_x: clip(ax),
        l_b_x: clip(bx),
        l_a_y: clip(ay),
        l_b_y: clip(by),
        h_l,
    })
}

/// One Gauss–Legendre sample of the background mesh. `weight` already
/// includes the cell Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPoint {
    pub point: Point,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub corners: [Point; 4],
    /// Jacobian determinant at the cell centre.
    pub jacobian: f64,
    pub gauss_points: Vec<GaussPoint>,
}

#[derive(Debug, Clone)]
pub struct BackgroundMesh {
    pub cells: Vec<Cell>,
    pub order: usize,
}

impl BackgroundMesh {
    /// Axis-aligned cells between consecutive breaks.
    pub fn rectangle(x_breaks: &[f64], y_breaks: &[f64], order: usize) -> Result<Self> {
        if x_breaks.len() < 2 || y_breaks.len() < 2 {
            return Err(Error::config("background mesh needs at least one cell per axis"));
        }
        let rule = cached_legendre(order)?;
        let mut cells = Vec::with_capacity((x_breaks.len() - 1) * (y_breaks.len() - 1));
        for yw in y_breaks.windows(2) {
            for xw in x_breaks.windows(2) {
                let (hx, hy) = (xw[1] - xw[0], yw[1] - yw[0]);
                let jac = 0.25 * hx * hy;
                let mut gps = Vec::with_capacity(order * order);
                for (eta, wy) in rule.iter() {
                    for (xi, wx) in rule.iter() {
                        gps.push(GaussPoint {
                            point: Point::new(
                                xw[0] + 0.5 * (xi + 1.0) * hx,
                                yw[0] + 0.5 * (eta + 1.0) * hy,
                            ),
                            weight: wx * wy * jac,
                        });
                    }
                }
                cells.push(Cell {
                    corners: [
                        Point::new(xw[0], yw[0]),
                        Point::new(xw[1], yw[0]),
                        Point::new(xw[1], yw[1]),
                        Point::new(xw[0], yw[1]),
                    ],
                    jacobian: jac,
                    gauss_points: gps,
                });
            }
        }
        Ok(BackgroundMesh { cells, order })
    }

    /// Disc mesh: a central square `[-c, c]²` (c = radius/2) split into
    /// `n_tangential²` cells, and four ruled patches joining each square
    /// edge to its quarter arc, each with `n_tangential × n_radial` cells
    /// graded toward the rim by `radial_bias`.
    pub fn circle(
        radius: f64,
        n_tangential: usize,
        n_radial: usize,
        radial_bias: f64,
        order: usize,
    ) -> Result<Self> {
        if n_tangential < 1 || n_radial < 1 {
            return Err(Error::config("circle mesh needs at least one cell per direction"));
        }
        if !(0.0..1.0).contains(&radial_bias) {
            return Err(Error::config("radial bias must lie in [0, 1)"));
        }
        let rule = cached_legendre(order)?;
        let c = 0.5 * radius;
        let mut cells = Vec::new();

        let t_breaks: Vec<f64> = (0..=n_tangential).map(|k| k as f64 / n_tangential as f64).collect();
        // radial parameter: uniform blended with a sine profile that clusters toward η = 1
        let r_breaks: Vec<f64> = (0..=n_radial)
            .map(|k| {
                let t = k as f64 / n_radial as f64;
                (1.0 - radial_bias) * t + radial_bias * (0.5 * std::f64::consts::PI * t).sin()
            })
            .collect();

        // central square
        let sq: Vec<f64> = t_breaks.iter().map(|t| -c + 2.0 * c * t).collect();
        cells.extend(BackgroundMesh::rectangle(&sq, &sq, order)?.cells);

        // four patches: rotate the right-hand patch by k·π/2
        for k in 0..4 {
            let rot = k as f64 * 0.5 * std::f64::consts::PI;
            let (cr, sr) = (rot.cos(), rot.sin());
            let map = |s: f64, eta: f64| -> (Point, [f64; 4]) {
                // right patch in local frame: inner edge x = c, y ∈ [-c, c]
                let th = -0.25 * std::f64::consts::PI + 0.5 * std::f64::consts::PI * s;
                let (inner_x, inner_y) = (c, -c + 2.0 * c * s);
                let (outer_x, outer_y) = (radius * th.cos(), radius * th.sin());
                let x = (1.0 - eta) * inner_x + eta * outer_x;
                let y = (1.0 - eta) * inner_y + eta * outer_y;
                let dth = 0.5 * std::f64::consts::PI;
                let dx_ds = eta * (-radius * th.sin() * dth);
                let dy_ds = (1.0 - eta) * 2.0 * c + eta * radius * th.cos() * dth;
                let dx_de = outer_x - inner_x;
                let dy_de = outer_y - inner_y;
                let p = Point::new(cr * x - sr * y, sr * x + cr * y);
                (p, [dx_ds, dy_ds, dx_de, dy_de])
            };
            for rw in r_breaks.windows(2) {
                for tw in t_breaks.windows(2) {
                    let mut gps = Vec::with_capacity(order * order);
                    for (q_e, w_e) in rule.iter() {
                        for (q_s, w_s) in rule.iter() {
                            let s = tw[0] + 0.5 * (q_s + 1.0) * (tw[1] - tw[0]);
                            let e = rw[0] + 0.5 * (q_e + 1.0) * (rw[1] - rw[0]);
                            let (p, d) = map(s, e);
                            let det = (d[0] * d[3] - d[1] * d[2]).abs();
                            let scale = 0.25 * (tw[1] - tw[0]) * (rw[1] - rw[0]);
                            gps.push(GaussPoint {
                                point: p,
                                weight: w_s * w_e * det * scale,
                            });
                        }
                    }
                    let (_, dc) = map(0.5 * (tw[0] + tw[1]), 0.5 * (rw[0] + rw[1]));
                    let jac = (dc[0] * dc[3] - dc[1] * dc[2]).abs()
                        * 0.25
                        * (tw[1] - tw[0])
                        * (rw[1] - rw[0]);
                    let corners = [
                        map(tw[0], rw[0]).0,
                        map(tw[1], rw[0]).0,
                        map(tw[1], rw[1]).0,
                        map(tw[0], rw[1]).0,
                    ];
                    cells.push(Cell {
                        corners,
                        jacobian: jac,
                        gauss_points: gps,
                    });
                }
            }
        }
        Ok(BackgroundMesh { cells, order })
    }

    pub fn gauss_points(&self) -> impl Iterator<Item = &GaussPoint> {
        self.cells.iter().flat_map(|c| c.gauss_points.iter())
    }

    pub fn n_gauss_points(&self) -> usize {
        self.cells.iter().map(|c| c.gauss_points.len()).sum()
    }

    /// Sum of all quadrature weights (the integrated area).
    pub fn area(&self) -> f64 {
        self.gauss_points().map(|g| g.weight).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_grid_counts_and_spacing() {
        let c = make_uniform_grid(1.0, 1.0, 12, 12).unwrap();
        assert_eq!(c.len(), 169);
        assert_relative_eq!(c.spacing_x[0], 1.0 / 12.0, epsilon = 1e-15);
        assert_relative_eq!(c.spacing_y[80], 1.0 / 12.0, epsilon = 1e-15);

        let c = make_uniform_grid(2.0, 1.0, 4, 2).unwrap();
        assert_eq!(c.len(), 15);
        assert_relative_eq!(c.spacing_x[0], 0.5);
        assert_relative_eq!(c.spacing_y[0], 0.5);
    }

    #[test]
    fn too_coarse_grid_rejected() {
        assert!(matches!(make_uniform_grid(1.0, 1.0, 1, 1), Err(Error::Config(_))));
    }

    #[test]
    fn boundary_tags_on_unit_square() {
        let c = make_uniform_grid(1.0, 1.0, 4, 4).unwrap();
        assert_eq!(c.boundary_nodes().len(), 16);
        assert!(c.boundary[0].contains(BoundaryTag::LEFT));
        assert!(c.boundary[0].contains(BoundaryTag::BOTTOM));
        assert!(!c.boundary[6].is_boundary());
    }

    #[test]
    fn nonuniform_with_uniform_breaks_matches_uniform() {
        let xb: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let a = make_nonuniform_grid(1.0, 1.0, &xb, &xb).unwrap();
        let b = make_uniform_grid(1.0, 1.0, 8, 8).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.spacing_x, b.spacing_x);
        assert_eq!(a.boundary, b.boundary);
    }

    #[test]
    fn nonmonotone_breaks_rejected() {
        let xb = [0.0, 0.3, 0.2, 0.6, 0.8, 1.0];
        let yb = [0.0, 0.25, 0.5, 0.75, 1.0];
        assert!(matches!(make_nonuniform_grid(1.0, 1.0, &xb, &yb), Err(Error::Config(_))));
    }

    #[test]
    fn refined_band_supports_vary_along_x_only() {
        let xb = refined_breaks(1.0, 12, 0.3, 0.7, 2);
        let yb: Vec<f64> = (0..=12).map(|j| j as f64 / 12.0).collect();
        let c = make_nonuniform_grid(1.0, 1.0, &xb, &yb).unwrap();
        assert_eq!(c.len(), xb.len() * yb.len());
        let sx_min = c.spacing_x.iter().copied().fold(f64::MAX, f64::min);
        let sx_max = c.spacing_x.iter().copied().fold(0.0, f64::max);
        assert!(sx_min < sx_max);
        assert!(c.spacing_y.iter().all(|&s| (s - 1.0 / 12.0).abs() < 1e-12));
    }

    #[test]
    fn circular_cloud_containment_and_grading() {
        let c = make_circular_cloud(1.0, CircleGrading { divisions: 8, bias: 0.3 }).unwrap();
        assert!(c.nodes.iter().all(|p| p.x * p.x + p.y * p.y <= 1.0 + 1e-12));
        assert!(c.boundary.iter().any(|t| t.contains(BoundaryTag::RIM)));

        let g = CircleGrading { divisions: 20, bias: 0.5 };
        let br = g.breaks(1.0);
        let rim_gap = br[1] - br[0];
        let mid_gap = br[10] - br[9];
        assert!(rim_gap < mid_gap);
    }

    #[test]
    fn circular_cloud_single_ring_rejected() {
        assert!(make_circular_cloud(1.0, CircleGrading { divisions: 1, bias: 0.0 }).is_err());
        assert!(make_circular_cloud(-1.0, CircleGrading::default()).is_err());
    }

    #[test]
    fn horizon_truncation_square() {
        let d = Domain::Rectangle { a: 1.0, b: 1.0 };
        let h = truncate_horizon(Point::new(0.5, 0.5), 0.3, &d).unwrap();
        assert_eq!(h.along(Axis::X), (0.3, 0.3));
        assert_eq!(h.along(Axis::Y), (0.3, 0.3));

        let h = truncate_horizon(Point::new(0.1, 0.5), 0.5, &d).unwrap();
        assert_relative_eq!(h.l_a_x, 0.1, epsilon = 1e-15);
        assert_eq!(h.l_b_x, 0.5);
        assert_eq!(h.l_a_y, 0.5);
        assert_eq!(h.l_b_y, 0.5);
    }

    #[test]
    fn horizon_truncation_circle_chord() {
        let d = Domain::Circle { radius: 1.0 };
        let h = truncate_horizon(Point::new(0.9, 0.0), 0.5, &d).unwrap();
        assert_relative_eq!(h.l_b_x, 0.1, epsilon = 1e-12);
        assert_eq!(h.l_a_x, 0.5);
        // off-axis: chord half-length √(1 - y²)
        let y: f64 = 0.6;
        let h = truncate_horizon(Point::new(0.5, y), 0.5, &d).unwrap();
        assert_relative_eq!(h.l_b_x, (1.0 - y * y).sqrt() - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn horizon_on_boundary_is_clamped_not_zero() {
        let d = Domain::Rectangle { a: 1.0, b: 1.0 };
        let h = truncate_horizon(Point::new(0.0, 0.5), 0.4, &d).unwrap();
        assert_relative_eq!(h.l_a_x, 0.4 * MIN_HORIZON_FRACTION);
        assert!(truncate_horizon(Point::new(1.5, 0.5), 0.4, &d).is_err());
        assert!(truncate_horizon(Point::new(0.5, 0.5), 0.0, &d).is_err());
    }

    #[test]
    fn rectangle_mesh_area() {
        let xb = refined_breaks(2.0, 6, 0.5, 1.0, 3);
        let yb: Vec<f64> = (0..=5).map(|j| j as f64 / 5.0).collect();
        let m = BackgroundMesh::rectangle(&xb, &yb, 4).unwrap();
        assert_relative_eq!(m.area(), 2.0, max_relative = 1e-13);
        assert_eq!(m.n_gauss_points(), m.cells.len() * 16);
    }

    #[test]
    fn circle_mesh_area_and_containment() {
        let m = BackgroundMesh::circle(1.0, 6, 4, 0.4, 4).unwrap();
        assert_relative_eq!(m.area(), std::f64::consts::PI, max_relative = 1e-8);
        assert!(m
            .gauss_points()
            .all(|g| g.point.x.hypot(g.point.y) < 1.0 && g.weight > 0.0));
        // second moment ∫ r² dA = π/2
        let m2: f64 = m
            .gauss_points()
            .map(|g| g.weight * (g.point.x.powi(2) + g.point.y.powi(2)))
            .sum();
        assert_relative_eq!(m2, std::f64::consts::FRAC_PI_2, max_relative = 1e-8);
    }

    #[test]
    fn bucket_query_matches_brute_force() {
        let c = make_circular_cloud(1.0, CircleGrading { divisions: 12, bias: 0.5 }).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.7, 0.6), (-0.95, 0.1), (0.2, -0.97)] {
            let p = Point::new(x, y);
            for order in [BasisOrder::Linear, BasisOrder::Quadratic] {
                let mut fast = Vec::new();
                c.for_each_covering(p, order, |i| fast.push(i));
                let slow: Vec<usize> = (0..c.len())
                    .filter(|&i| {
                        let (dx, dy) = c.support(i, order);
                        (p.x - c.nodes[i].x).abs() < dx && (p.y - c.nodes[i].y).abs() < dy
                    })
                    .collect();
                assert_eq!(fast, slow);
            }
        }
    }
}
