//! Fractional Kirchhoff plate: constitutive law, strain-displacement blocks,
//! system assembly and collocation of essential boundary conditions.
//!
//! Global unknowns are ordered `[u₀ (n), v₀ (n), w₀ (n)]`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fracdiff::{frac_b_all, FracBMatrices, FracParams, FracRules, SparseRow};
use crate::geometry::{BackgroundMesh, BasisOrder, Domain, NodeCloud, Point};
use crate::mls::{evaluate_shape, Deriv, DerivDepth};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
}

impl Material {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0) {
            return Err(Error::config(format!("Young's modulus must be positive, got {e}")));
        }
        if !(nu > -1.0 && nu < 0.5) {
            return Err(Error::config(format!("Poisson ratio must lie in (-1, 0.5), got {nu}")));
        }
        Ok(Material { e, nu })
    }

    /// Flexural rigidity `E h³ / (12 (1 - ν²))`.
    pub fn rigidity(&self, h: f64) -> f64 {
        self.e * h.powi(3) / (12.0 * (1.0 - self.nu * self.nu))
    }
}

/// Plane-stress isotropic stiffness.
pub fn constitutive(m: &Material) -> Matrix3<f64> {
    let s = m.e / (1.0 - m.nu * m.nu);
    Matrix3::new(
        s,
        m.nu * s,
        0.0,
        m.nu * s,
        s,
        0.0,
        0.0,
        0.0,
        m.e / (2.0 * (1.0 + m.nu)),
    )
}

/// Thickness-integrated `[[h C, 0], [0, h³/12 C]]`.
pub fn dt_matrix(m: &Material, h: f64) -> Result<Matrix6<f64>> {
    if !(h > 0.0) {
        return Err(Error::config(format!("thickness must be positive, got {h}")));
    }
    let c = constitutive(m);
    let mut d = Matrix6::zeros();
    d.fixed_view_mut::<3, 3>(0, 0).copy_from(&(c * h));
    d.fixed_view_mut::<3, 3>(3, 3).copy_from(&(c * (h.powi(3) / 12.0)));
    Ok(d)
}

/// Everything needed to assemble one plate problem.
#[derive(Debug, Clone)]
pub struct PlateCase {
    pub thickness: f64,
    pub material: Material,
    pub frac: FracParams,
    /// Uniform transverse load (Pa).
    pub q0: f64,
    pub cloud: NodeCloud,
    pub mesh: BackgroundMesh,
    /// Gauss–Jacobi points per one-sided horizon integral.
    pub n_gjp: usize,
}

/// Smallest admitted span-to-thickness ratio for thin-plate kinematics.
pub const MIN_ASPECT_RATIO: f64 = 50.0;

impl PlateCase {
    pub fn new(
        thickness: f64,
        material: Material,
        frac: FracParams,
        q0: f64,
        cloud: NodeCloud,
        mesh: BackgroundMesh,
        n_gjp: usize,
    ) -> Result<Self> {
        if !(thickness > 0.0) {
            return Err(Error::config(format!("thickness must be positive, got {thickness}")));
        }
        let span = match cloud.domain {
            Domain::Rectangle { a, b } => a.min(b),
            Domain::Circle { radius } => radius,
        };
        if span / thickness < MIN_ASPECT_RATIO * (1.0 - 1e-12) {
            return Err(Error::config(format!(
                "span/thickness = {} is below the thin-plate limit {MIN_ASPECT_RATIO}",
                span / thickness
            )));
        }
        if !q0.is_finite() {
            return Err(Error::config("load q0 must be finite"));
        }
        if n_gjp == 0 {
            return Err(Error::config("n_gjp must be at least 1"));
        }
        if cloud.boundary_nodes().is_empty() {
            return Err(Error::config("node cloud has no tagged boundary nodes"));
        }
        Ok(PlateCase {
            thickness,
            material,
            frac,
            q0,
            cloud,
            mesh,
            n_gjp,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.cloud.domain
    }

    pub fn n_nodes(&self) -> usize {
        self.cloud.len()
    }

    pub fn n_dof(&self) -> usize {
        3 * self.cloud.len()
    }
}

/// Fractional rows and transverse shape values at one Gauss point.
#[derive(Debug, Clone)]
pub struct GaussData {
    pub point: Point,
    pub weight: f64,
    pub fb: FracBMatrices,
    pub phi_w: SparseRow,
}

/// Shape rows used to collocate `u₀ = v₀ = w₀ = 0` at one boundary node.
#[derive(Debug, Clone)]
pub struct Collocation {
    pub node: usize,
    pub phi_lin: SparseRow,
    pub phi_quad: SparseRow,
}

/// State-independent discretization data, computed once per case.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub n: usize,
    pub gauss: Vec<GaussData>,
    pub collocation: Vec<Collocation>,
    pub dt: Matrix6<f64>,
    pub q0: f64,
    k_linear: std::sync::OnceLock<DMatrix<f64>>,
}

fn shape_row(p: Point, cloud: &NodeCloud, order: BasisOrder) -> Result<SparseRow> {
    let s = evaluate_shape(p, cloud, order, DerivDepth::Value)?;
    let mut pairs: Vec<(u32, f64)> = s.active.iter().map(|&i| i as u32).zip(s.phi.iter().copied()).collect();
    pairs.sort_unstable_by_key(|p| p.0);
    Ok(SparseRow {
        idx: pairs.iter().map(|p| p.0).collect(),
        val: pairs.iter().map(|p| p.1).collect(),
    })
}

impl Discretization {
    /// Evaluate fractional rows at every Gauss point (in parallel, order
    /// preserved) and collocation rows at every boundary node.
    pub fn build(case: &PlateCase) -> Result<Self> {
        let rules = if case.frac.is_local() {
            None
        } else {
            Some(FracRules::new(case.n_gjp, case.frac.alpha)?)
        };
        let gps: Vec<_> = case.mesh.gauss_points().copied().collect();
        let gauss = gps
            .par_iter()
            .map(|gp| {
                Ok(GaussData {
                    point: gp.point,
                    weight: gp.weight,
                    fb: frac_b_all(gp.point, &case.frac, rules.as_ref(), &case.cloud)?,
                    phi_w: shape_row(gp.point, &case.cloud, BasisOrder::Quadratic)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let collocation = case
            .cloud
            .boundary_nodes()
            .into_iter()
            .map(|node| {
                let p = case.cloud.nodes[node];
                Ok(Collocation {
                    node,
                    phi_lin: shape_row(p, &case.cloud, BasisOrder::Linear)?,
                    phi_quad: shape_row(p, &case.cloud, BasisOrder::Quadratic)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if collocation.is_empty() {
            return Err(Error::config("no boundary nodes tagged for collocation"));
        }
        Ok(Discretization {
            n: case.n_nodes(),
            gauss,
            collocation,
            dt: dt_matrix(&case.material, case.thickness)?,
            q0: case.q0,
            k_linear: std::sync::OnceLock::new(),
        })
    }

    pub fn n_dof(&self) -> usize {
        3 * self.n
    }

    /// Linear stiffness `∫ B_Lᵀ D_t B_L dS`, computed on first use.
    pub fn linear_stiffness(&self) -> &DMatrix<f64> {
        self.k_linear.get_or_init(|| assemble(self, None).k)
    }
}

/// Row over global degrees of freedom, sorted by index.
#[derive(Debug, Clone, Default)]
struct DofRow {
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl DofRow {
    /// Concatenate scaled blocks; blocks must be given in ascending offset
    /// order.
    fn from_blocks(blocks: &[(u32, f64, &SparseRow)]) -> Self {
        let mut r = DofRow::default();
        for &(off, s, row) in blocks {
            if s == 0.0 {
                continue;
            }
            r.idx.extend(row.idx.iter().map(|&i| i + off));
            r.val.extend(row.val.iter().map(|&v| s * v));
        }
        r
    }
}

fn lincomb(a: f64, ra: &SparseRow, b: f64, rb: &SparseRow) -> SparseRow {
    let scaled = |c: f64, r: &SparseRow| SparseRow {
        idx: r.idx.clone(),
        val: r.val.iter().map(|v| c * v).collect(),
    };
    match (a == 0.0, b == 0.0) {
        (true, true) => return SparseRow::default(),
        (false, true) => return scaled(a, ra),
        (true, false) => return scaled(b, rb),
        _ => {}
    }
    let mut sa = ra.clone();
    sa.val.iter_mut().for_each(|v| *v *= a);
    let mut sb = rb.clone();
    sb.val.iter_mut().for_each(|v| *v *= b);
    sa.add(&sb)
}

/// Fractional gradients `(D^α_x w₀, D^α_y w₀)` at a Gauss point.
pub fn w_gradients(fb: &FracBMatrices, u: &[f64], n: usize) -> (f64, f64) {
    let w = &u[2 * n..3 * n];
    (fb.bw_x.dot(w), fb.bw_y.dot(w))
}

/// The six rows of `B_L + β B_N(state)` where the state enters through
/// `(a, b) = (D^α_x w₀, D^α_y w₀)`.
fn strain_rows(fb: &FracBMatrices, n: usize, beta: f64, a: f64, b: f64) -> [DofRow; 6] {
    let (nu, nv, nw) = (0u32, n as u32, 2 * n as u32);
    let mixed_w = lincomb(beta * a, &fb.bw_y, beta * b, &fb.bw_x);
    let bend_xy = fb.bw_xy.add(&fb.bw_yx);
    [
        DofRow::from_blocks(&[(nu, 1.0, &fb.bu_x), (nw, beta * a, &fb.bw_x)]),
        DofRow::from_blocks(&[(nv, 1.0, &fb.bu_y), (nw, beta * b, &fb.bw_y)]),
        DofRow::from_blocks(&[(nu, 1.0, &fb.bu_y), (nv, 1.0, &fb.bu_x), (nw, 1.0, &mixed_w)]),
        DofRow::from_blocks(&[(nw, 1.0, &fb.bw_xx)]),
        DofRow::from_blocks(&[(nw, 1.0, &fb.bw_yy)]),
        DofRow::from_blocks(&[(nw, 1.0, &bend_xy)]),
    ]
}

fn dense_row(r: &DofRow, ndof: usize) -> Vec<f64> {
    let mut d = vec![0.0; ndof];
    for (&i, &v) in r.idx.iter().zip(&r.val) {
        d[i as usize] += v;
    }
    d
}

fn to_dense(rows: &[DofRow; 6], ndof: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(6, ndof);
    for (k, r) in rows.iter().enumerate() {
        for (j, v) in dense_row(r, ndof).into_iter().enumerate() {
            m[(k, j)] = v;
        }
    }
    m
}

/// Linear strain-displacement matrix (6 × 3n).
pub fn bl_matrix(fb: &FracBMatrices, n: usize) -> DMatrix<f64> {
    to_dense(&strain_rows(fb, n, 0.0, 0.0, 0.0), 3 * n)
}

/// Nonlinear strain-displacement matrix (6 × 3n) at `state`.
pub fn bn_matrix(fb: &FracBMatrices, state: &[f64], n: usize) -> DMatrix<f64> {
    let (a, b) = w_gradients(fb, state, n);
    let mut full = to_dense(&strain_rows(fb, n, 1.0, a, b), 3 * n);
    full -= bl_matrix(fb, n);
    full
}

/// Which residual the nonlinear solver drives to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualForm {
    /// `R = K_s(u) u` with the secant stiffness `∫ Aᵀ D A`, `A = B_L + ½B_N`.
    Secant,
    /// `R = ∫ (B_L + B_N)ᵀ D ε`, the gradient of the strain energy.
    #[default]
    Variational,
}

/// Assembled global system `K u = F`.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub k: DMatrix<f64>,
    pub f: DVector<f64>,
    /// Number of collocated rows (zero until boundary conditions are applied).
    pub constrained: usize,
}

impl SystemMatrices {
    pub fn n_dof(&self) -> usize {
        self.f.len()
    }
}

/// One bilinear contribution `coef · Lᵀ R` to the global matrix.
struct Term {
    coef: f64,
    l: usize,
    r: usize,
}

struct GaussTerms {
    rows: Vec<DofRow>,
    terms: Vec<Term>,
}

const MEMBRANE_PAIRS: [(usize, usize); 5] = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)];

/// `Σ_ij D_ij L_iᵀ R_j` terms for left rows at `l0` and right rows at `r0`.
fn d_terms(terms: &mut Vec<Term>, dt: &Matrix6<f64>, w: f64, l0: usize, r0: usize) {
    for blk in [0, 3] {
        for &(i, j) in &MEMBRANE_PAIRS {
            let c = dt[(blk + i, blk + j)];
            if c != 0.0 {
                terms.push(Term {
                    coef: w * c,
                    l: l0 + blk + i,
                    r: r0 + blk + j,
                });
            }
        }
    }
}

/// Column-parallel accumulation: every column block sees the Gauss points
/// in the same order, so the result does not depend on thread count.
fn accumulate(k: &mut DMatrix<f64>, batch: &[GaussTerms]) {
    let ndof = k.nrows();
    let threads = rayon::current_num_threads().max(1);
    let cols = ndof.div_ceil(threads * 4).max(8);
    k.as_mut_slice()
        .par_chunks_mut(ndof * cols)
        .enumerate()
        .for_each(|(ci, kc)| {
            let c0 = (ci * cols) as u32;
            let c1 = c0 + (kc.len() / ndof) as u32;
            for g in batch {
                for t in &g.terms {
                    let r = &g.rows[t.r];
                    let lo = r.idx.partition_point(|&c| c < c0);
                    let hi = r.idx.partition_point(|&c| c < c1);
                    if lo == hi {
                        continue;
                    }
                    let l = &g.rows[t.l];
                    for q in lo..hi {
                        let rv = t.coef * r.val[q];
                        let col = &mut kc[(r.idx[q] - c0) as usize * ndof..][..ndof];
                        for (&li, &lv) in l.idx.iter().zip(&l.val) {
                            col[li as usize] += lv * rv;
                        }
                    }
                }
            }
        });
}

const BATCH: usize = 256;

fn assemble_with<F>(disc: &Discretization, build: F) -> DMatrix<f64>
where
    F: Fn(&GaussData) -> GaussTerms + Sync,
{
    let ndof = disc.n_dof();
    let mut k = DMatrix::zeros(ndof, ndof);
    for chunk in disc.gauss.chunks(BATCH) {
        let batch: Vec<GaussTerms> = chunk.par_iter().map(&build).collect();
        accumulate(&mut k, &batch);
    }
    k
}

/// Load vector `∫ φ_wᵀ q₀ dS` in the `w₀` block.
pub fn load_vector(disc: &Discretization) -> DVector<f64> {
    let n = disc.n;
    let mut f = DVector::zeros(3 * n);
    if disc.q0 == 0.0 {
        return f;
    }
    for g in &disc.gauss {
        for (i, v) in g.phi_w.iter() {
            f[2 * n + i] += g.weight * disc.q0 * v;
        }
    }
    f
}

/// Secant stiffness `∫ (B_L + ½B_N)ᵀ D_t (B_L + ½B_N) dS` at `state`
/// (zero state gives the linear stiffness) and the load vector.
pub fn assemble(disc: &Discretization, state: Option<&[f64]>) -> SystemMatrices {
    let n = disc.n;
    let k = assemble_with(disc, |g| {
        let (a, b) = state.map_or((0.0, 0.0), |u| w_gradients(&g.fb, u, n));
        let rows = strain_rows(&g.fb, n, 0.5, a, b).to_vec();
        let mut terms = Vec::with_capacity(10);
        d_terms(&mut terms, &disc.dt, g.weight, 0, 0);
        GaussTerms { rows, terms }
    });
    SystemMatrices {
        k,
        f: load_vector(disc),
        constrained: 0,
    }
}

/// Generalized strains `[ε⁰; κ]` at a Gauss point: membrane strains with
/// the von Kármán terms when `nonlinear`, and fractional curvatures.
pub fn generalized_strain(fb: &FracBMatrices, u: &[f64], n: usize, nonlinear: bool) -> [f64; 6] {
    let (uu, vv, ww) = (&u[..n], &u[n..2 * n], &u[2 * n..]);
    let (a, b) = if nonlinear { w_gradients(fb, u, n) } else { (0.0, 0.0) };
    [
        fb.bu_x.dot(uu) + 0.5 * a * a,
        fb.bu_y.dot(vv) + 0.5 * b * b,
        fb.bu_y.dot(uu) + fb.bu_x.dot(vv) + a * b,
        fb.bw_xx.dot(ww),
        fb.bw_yy.dot(ww),
        fb.bw_xy.dot(ww) + fb.bw_yx.dot(ww),
    ]
}

fn stress_resultants(dt: &Matrix6<f64>, e: &[f64; 6]) -> [f64; 6] {
    let mut s = [0.0; 6];
    for i in 0..6 {
        for j in 0..6 {
            s[i] += dt[(i, j)] * e[j];
        }
    }
    s
}

/// Internal force vector at `u` for the chosen residual form.
pub fn internal_force(disc: &Discretization, u: &[f64], form: ResidualForm) -> DVector<f64> {
    let n = disc.n;
    let beta = match form {
        ResidualForm::Secant => 0.5,
        ResidualForm::Variational => 1.0,
    };
    let parts: Vec<Vec<(u32, f64)>> = disc
        .gauss
        .par_iter()
        .map(|g| {
            let (a, b) = w_gradients(&g.fb, u, n);
            let e = generalized_strain(&g.fb, u, n, true);
            let s = stress_resultants(&disc.dt, &e);
            let rows = strain_rows(&g.fb, n, beta, a, b);
            let mut out = Vec::new();
            for (r, &si) in rows.iter().zip(&s) {
                if si != 0.0 {
                    out.extend(r.idx.iter().zip(&r.val).map(|(&i, &v)| (i, g.weight * si * v)));
                }
            }
            out
        })
        .collect();
    let mut r = DVector::zeros(3 * n);
    for p in parts {
        for (i, v) in p {
            r[i as usize] += v;
        }
    }
    r
}

/// Consistent tangent of [`internal_force`] at `u`.
///
/// Secant form: `∫ Aᵀ D (B_L + B_N) + ½ G`; variational form:
/// `∫ (B_L + B_N)ᵀ D (B_L + B_N) + G`, with the geometric term
/// `G = N_x B_xᵀB_x + N_y B_yᵀB_y + N_xy (B_xᵀB_y + B_yᵀB_x)` on the `w₀`
/// block.
///
/// Only the membrane part depends on the state, and it is a combination
/// of six base rows `Z = [Bu_x(u), Bu_y(u), Bu_x(v), Bu_y(v), Bw_x, Bw_y]`:
/// `A_m = T_A Z`, `B_T,m = T_B Z`. The tangent is the cached linear
/// stiffness plus `Σ Zᵀ (T_Aᵀ D_m T_B + g G - T_0ᵀ D_m T_0) Z`.
pub fn tangent(disc: &Discretization, u: &[f64], form: ResidualForm) -> DMatrix<f64> {
    let n = disc.n;
    let (beta, g_scale) = match form {
        ResidualForm::Secant => (0.5, 0.5),
        ResidualForm::Variational => (1.0, 1.0),
    };
    let dm = disc.dt.fixed_view::<3, 3>(0, 0).into_owned();
    let t_rows = |bt: f64, a: f64, b: f64| {
        nalgebra::SMatrix::<f64, 3, 6>::from_row_slice(&[
            1.0, 0.0, 0.0, 0.0, bt * a, 0.0, //
            0.0, 0.0, 0.0, 1.0, 0.0, bt * b, //
            0.0, 1.0, 1.0, 0.0, bt * b, bt * a,
        ])
    };
    let t0 = t_rows(0.0, 0.0, 0.0);
    let m0 = t0.transpose() * dm * t0;
    let (nu, nv, nw) = (0u32, n as u32, 2 * n as u32);
    let mut k = assemble_with(disc, |g| {
        let (a, b) = w_gradients(&g.fb, u, n);
        let e = generalized_strain(&g.fb, u, n, true);
        let s = stress_resultants(&disc.dt, &e);
        let mut m = t_rows(beta, a, b).transpose() * dm * t_rows(1.0, a, b) - m0;
        m[(4, 4)] += g_scale * s[0];
        m[(5, 5)] += g_scale * s[1];
        m[(4, 5)] += g_scale * s[2];
        m[(5, 4)] += g_scale * s[2];
        let fb = &g.fb;
        let base = [
            (nu, &fb.bu_x),
            (nu, &fb.bu_y),
            (nv, &fb.bu_x),
            (nv, &fb.bu_y),
            (nw, &fb.bw_x),
            (nw, &fb.bw_y),
        ];
        let mut rows: Vec<DofRow> = base
            .iter()
            .map(|&(off, r)| DofRow::from_blocks(&[(off, 1.0, r)]))
            .collect();
        let mut terms = Vec::with_capacity(6);
        for i in 0..6 {
            let c = m.row(i);
            if c.iter().all(|v| *v == 0.0) {
                continue;
            }
            let ub = lincomb(c[0], &fb.bu_x, c[1], &fb.bu_y);
            let vb = lincomb(c[2], &fb.bu_x, c[3], &fb.bu_y);
            let wb = lincomb(c[4], &fb.bw_x, c[5], &fb.bw_y);
            rows.push(DofRow::from_blocks(&[(nu, 1.0, &ub), (nv, 1.0, &vb), (nw, 1.0, &wb)]));
            terms.push(Term {
                coef: g.weight,
                l: i,
                r: rows.len() - 1,
            });
        }
        GaussTerms { rows, terms }
    });
    k += disc.linear_stiffness();
    k
}

/// Replace the rows of boundary-node unknowns by collocation rows
/// `Φ(x_b)·u = target - Φ(x_b)·current`. Rows are scaled to the magnitude
/// of the row they replace so pivoting stays balanced.
pub fn apply_essential_bcs_to(
    k: &mut DMatrix<f64>,
    rhs: &mut DVector<f64>,
    disc: &Discretization,
    current: Option<&[f64]>,
) -> usize {
    let n = disc.n;
    let mut count = 0;
    for c in &disc.collocation {
        for (field, phi) in [(0usize, &c.phi_lin), (1, &c.phi_lin), (2, &c.phi_quad)] {
            let row = field * n + c.node;
            let scale = k.row(row).amax();
            let scale = if scale > 0.0 { scale } else { 1.0 };
            k.row_mut(row).fill(0.0);
            for (j, v) in phi.iter() {
                k[(row, field * n + j)] = scale * v;
            }
            let off = field * n;
            let now = current.map_or(0.0, |u| phi.iter().map(|(j, v)| v * u[off + j]).sum());
            rhs[row] = -scale * now;
            count += 1;
        }
    }
    count
}

/// Collocate `u₀ = v₀ = w₀ = 0` at every tagged boundary node.
pub fn apply_essential_bcs(sys: &mut SystemMatrices, disc: &Discretization) -> Result<()> {
    if disc.collocation.is_empty() {
        return Err(Error::config("no boundary nodes tagged for collocation"));
    }
    sys.constrained = apply_essential_bcs_to(&mut sys.k, &mut sys.f, disc, None);
    Ok(())
}

/// Largest reconstructed boundary value `|Φ(x_b)·field|` over all
/// collocation points and fields.
pub fn collocation_residual(disc: &Discretization, u: &[f64]) -> f64 {
    let n = disc.n;
    disc.collocation
        .iter()
        .flat_map(|c| {
            [(0, &c.phi_lin), (1, &c.phi_lin), (2, &c.phi_quad)]
                .map(|(f, phi)| phi.iter().map(|(j, v)| v * u[f * n + j]).sum::<f64>().abs())
        })
        .fold(0.0, f64::max)
}

/// Strain and stress state at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainSample {
    pub point: Point,
    /// Mid-plane strains `[ε_xx, ε_yy, γ_xy]`.
    pub membrane: Vector3<f64>,
    /// Fractional curvatures multiplying `-z`.
    pub curvature: Vector3<f64>,
    pub strain_top: Vector3<f64>,
    pub strain_bottom: Vector3<f64>,
    pub stress_mid: Vector3<f64>,
    pub stress_top: Vector3<f64>,
    pub stress_bottom: Vector3<f64>,
}

/// Strains `(B_L + ½B_N) u` and stresses at the mid-plane and at
/// `z = ±h/2` for each requested point.
pub fn recover_strains(
    case: &PlateCase,
    u: &[f64],
    points: &[Point],
    nonlinear: bool,
) -> Result<Vec<StrainSample>> {
    let n = case.n_nodes();
    if u.len() != 3 * n {
        return Err(Error::Usage(format!("solution has {} entries, expected {}", u.len(), 3 * n)));
    }
    let rules = if case.frac.is_local() {
        None
    } else {
        Some(FracRules::new(case.n_gjp, case.frac.alpha)?)
    };
    let c = constitutive(&case.material);
    let tol = 1e-12 * case.domain().length();
    let half = 0.5 * case.thickness;
    points
        .iter()
        .map(|&p| {
            if !case.domain().contains(p, tol) {
                return Err(Error::Domain(format!("point ({}, {}) lies outside the domain", p.x, p.y)));
            }
            let fb = frac_b_all(p, &case.frac, rules.as_ref(), &case.cloud)?;
            let e = generalized_strain(&fb, u, n, nonlinear);
            let membrane = Vector3::new(e[0], e[1], e[2]);
            let curvature = Vector3::new(e[3], e[4], e[5]);
            let strain_top = membrane - curvature * half;
            let strain_bottom = membrane + curvature * half;
            Ok(StrainSample {
                point: p,
                membrane,
                curvature,
                strain_top,
                strain_bottom,
                stress_mid: c * membrane,
                stress_top: c * strain_top,
                stress_bottom: c * strain_bottom,
            })
        })
        .collect()
}

/// Transverse deflection `w₀` reconstructed at `p`.
pub fn deflection_at(cloud: &NodeCloud, u: &[f64], p: Point) -> Result<f64> {
    let n = cloud.len();
    let s = evaluate_shape(p, cloud, BasisOrder::Quadratic, DerivDepth::Value)?;
    Ok(s.apply(Deriv::Value, &u[2 * n..3 * n]))
}

/// Reconstructed `[u₀, v₀, w₀]` at `p`.
pub fn displacement_at(cloud: &NodeCloud, u: &[f64], p: Point) -> Result<[f64; 3]> {
    let n = cloud.len();
    if u.len() != 3 * n {
        return Err(Error::Usage(format!("solution has {} entries, expected {}", u.len(), 3 * n)));
    }
    let lin = evaluate_shape(p, cloud, BasisOrder::Linear, DerivDepth::Value)?;
    Ok([
        lin.apply(Deriv::Value, &u[..n]),
        lin.apply(Deriv::Value, &u[n..2 * n]),
        deflection_at(cloud, u, p)?,
    ])
}
