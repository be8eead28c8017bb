//! Linear and incremental Newton–Raphson solves, plus the operation-count
//! model for the fractional assembly.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plate::{
    apply_essential_bcs, apply_essential_bcs_to, assemble, collocation_residual, internal_force,
    load_vector, tangent, Discretization, PlateCase, ResidualForm,
};

/// Pivots smaller than this fraction of the largest are treated as zero.
const PIVOT_RATIO: f64 = 1e-14;
/// Relative residual accepted from the dense linear solve.
pub const LINEAR_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Iteration {
    /// Full Newton with the consistent tangent.
    Newton,
    /// Fixed point on the secant stiffness.
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub n_load_steps: usize,
    /// Absolute tolerance on `‖Δu‖₂` (m).
    pub tol_disp: f64,
    pub max_iters: usize,
    pub iteration: Iteration,
    pub residual: ResidualFormSetting,
    /// Abort once `‖Δu‖` has grown this many iterations in a row.
    pub divergence_window: usize,
}

/// Serializable mirror of [`ResidualForm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualFormSetting {
    Secant,
    Variational,
}

impl From<ResidualFormSetting> for ResidualForm {
    fn from(s: ResidualFormSetting) -> Self {
        match s {
            ResidualFormSetting::Secant => ResidualForm::Secant,
            ResidualFormSetting::Variational => ResidualForm::Variational,
        }
    }
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            n_load_steps: 10,
            tol_disp: 1e-3 * 0.02,
            max_iters: 25,
            iteration: Iteration::Newton,
            residual: ResidualFormSetting::Variational,
            divergence_window: 3,
        }
    }
}

impl SolverSettings {
    /// Defaults with the displacement tolerance `10⁻³ h`.
    pub fn for_thickness(h: f64) -> Self {
        SolverSettings {
            tol_disp: 1e-3 * h,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_load_steps == 0 {
            return Err(Error::config("n_load_steps must be at least 1"));
        }
        if !(self.tol_disp > 0.0) {
            return Err(Error::config(format!("tol_disp must be positive, got {}", self.tol_disp)));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if self.divergence_window == 0 {
            return Err(Error::config("divergence_window must be at least 1"));
        }
        Ok(())
    }
}

/// Convergence record of one load step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub load_factor: f64,
    pub increment_norms: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub converged: bool,
}

impl StepRecord {
    pub fn iterations(&self) -> usize {
        self.increment_norms.len()
    }
}

/// Wall-clock breakdown of a solve (s).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub discretize: f64,
    pub assemble: f64,
    pub solve: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// `[u₀; v₀; w₀]` nodal parameters.
    pub u: Vec<f64>,
    pub history: Vec<StepRecord>,
    pub flops: FlopReport,
    /// Worst reconstructed boundary value.
    pub collocation_residual: f64,
    pub timings: Timings,
}

impl SolveResult {
    pub fn n_nodes(&self) -> usize {
        self.u.len() / 3
    }

    pub fn w(&self) -> &[f64] {
        let n = self.n_nodes();
        &self.u[2 * n..]
    }
}

fn lu_solve(k: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = k.lu();
    let diag = lu.u().diagonal();
    let max = diag.amax();
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || !min.is_finite() || min <= PIVOT_RATIO * max {
        return Err(Error::Singular { min_pivot: min });
    }
    lu.solve(rhs).ok_or(Error::Singular { min_pivot: min })
}

/// Solve a constrained system `K u = F` by dense LU, with one step of
/// iterative refinement when the residual check fails.
pub fn solve_linear(sys: &crate::plate::SystemMatrices) -> Result<Vec<f64>> {
    let fnorm = sys.f.norm();
    if fnorm == 0.0 {
        return Ok(vec![0.0; sys.n_dof()]);
    }
    let mut u = lu_solve(sys.k.clone(), &sys.f)?;
    let mut res = &sys.f - &sys.k * &u;
    if res.norm() > LINEAR_RESIDUAL_TOL * fnorm {
        u += lu_solve(sys.k.clone(), &res)?;
        res = &sys.f - &sys.k * &u;
    }
    let rel = res.norm() / fnorm;
    if rel > LINEAR_RESIDUAL_TOL {
        return Err(Error::Invariant(format!("linear residual {rel:.3e} exceeds {LINEAR_RESIDUAL_TOL:e}")));
    }
    Ok(u.as_slice().to_vec())
}

/// Assemble, constrain and solve the small-deflection problem.
pub fn solve_case_linear(case: &PlateCase) -> Result<SolveResult> {
    let t0 = Instant::now();
    let disc = Discretization::build(case)?;
    let t1 = Instant::now();
    let mut sys = assemble(&disc, None);
    apply_essential_bcs(&mut sys, &disc)?;
    let t2 = Instant::now();
    let u = solve_linear(&sys)?;
    let t3 = Instant::now();
    finish(case, &disc, u, Vec::new(), [t0, t1, t2, t3])
}

fn finish(
    case: &PlateCase,
    disc: &Discretization,
    u: Vec<f64>,
    history: Vec<StepRecord>,
    t: [Instant; 4],
) -> Result<SolveResult> {
    let collocation_residual = collocation_residual(disc, &u);
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if collocation_residual > 1e-8 * scale.max(1.0) {
        return Err(Error::Invariant(format!(
            "boundary collocation residual {collocation_residual:.3e} exceeds tolerance"
        )));
    }
    Ok(SolveResult {
        u,
        history,
        flops: estimate_flops(case),
        collocation_residual,
        timings: Timings {
            discretize: (t[1] - t[0]).as_secs_f64(),
            assemble: (t[2] - t[1]).as_secs_f64(),
            solve: (t[3] - t[2]).as_secs_f64(),
        },
    })
}

/// Incremental-load Newton–Raphson on the von Kármán plate.
pub fn solve_nonlinear(case: &PlateCase, settings: &SolverSettings) -> Result<SolveResult> {
    settings.validate()?;
    let t0 = Instant::now();
    let disc = Discretization::build(case)?;
    let t1 = Instant::now();
    let (u, history, assemble_time) = newton(&disc, settings)?;
    let t3 = Instant::now();
    let t2 = t1 + assemble_time;
    finish(case, &disc, u, history, [t0, t1, t2, t3])
}

/// Newton loop on a prebuilt discretization. Returns the solution, the
/// per-step history and the time spent assembling.
pub fn newton(
    disc: &Discretization,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, Vec<StepRecord>, std::time::Duration)> {
    settings.validate()?;
    let form: ResidualForm = settings.residual.into();
    let ndof = disc.n_dof();
    let f_full = load_vector(disc);
    let mut u = vec![0.0; ndof];
    let mut history = Vec::with_capacity(settings.n_load_steps);
    let mut assemble_time = std::time::Duration::ZERO;

    for step in 1..=settings.n_load_steps {
        let lambda = step as f64 / settings.n_load_steps as f64;
        let mut rec = StepRecord {
            step,
            load_factor: lambda,
            increment_norms: Vec::new(),
            residual_norms: Vec::new(),
            converged: false,
        };
        let mut growing = 0usize;
        for _ in 0..settings.max_iters {
            let ta = Instant::now();
            let r = internal_force(disc, &u, form);
            let mut rhs = &f_full * lambda - r;
            let mut k = match settings.iteration {
                Iteration::Newton => tangent(disc, &u, form),
                Iteration::Picard => assemble(disc, Some(&u)).k,
            };
            if settings.iteration == Iteration::Picard && form == ResidualForm::Variational {
                return Err(Error::config("Picard iteration requires the secant residual"));
            }
            apply_essential_bcs_to(&mut k, &mut rhs, disc, Some(&u));
            assemble_time += ta.elapsed();
            rec.residual_norms.push(rhs.norm());
            let du = lu_solve(k, &rhs)?;
            for (ui, di) in u.iter_mut().zip(du.iter()) {
                *ui += di;
            }
            let norm = du.norm();
            if !norm.is_finite() {
                rec.increment_norms.push(norm);
                history.push(rec);
                return Err(Error::NonConvergence {
                    step,
                    reason: "non-finite increment".into(),
                    history,
                });
            }
            if let Some(&prev) = rec.increment_norms.last() {
                growing = if norm > prev { growing + 1 } else { 0 };
            }
            rec.increment_norms.push(norm);
            if norm < settings.tol_disp {
                rec.converged = true;
                break;
            }
            if growing >= settings.divergence_window {
                history.push(rec);
                return Err(Error::NonConvergence {
                    step,
                    reason: format!("increment grew for {} consecutive iterations", settings.divergence_window),
                    history,
                });
            }
        }
        let ok = rec.converged;
        history.push(rec);
        if !ok {
            return Err(Error::NonConvergence {
                step,
                reason: format!("no convergence within {} iterations", settings.max_iters),
                history,
            });
        }
    }
    Ok((u, history, assemble_time))
}

/// Operation counts of the fractional assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopReport {
    pub n_elements: u64,
    pub n_gauss_per_element: u64,
    pub n_gauss_jacobi: u64,
    pub g_dof: u64,
    /// `N_e · N_GP · N_GJP · (2 · 6 · G_DOF)`.
    pub btilde_flops: u64,
    /// `N_e · N_GP · (G_DOF² + 11 G_DOF² + 66 G_DOF)`.
    pub stiffness_flops: u64,
    pub btilde_order: String,
    pub stiffness_order: String,
}

pub fn flop_counts(n_e: u64, n_gp: u64, n_gjp: u64, g_dof: u64) -> FlopReport {
    FlopReport {
        n_elements: n_e,
        n_gauss_per_element: n_gp,
        n_gauss_jacobi: n_gjp,
        g_dof,
        btilde_flops: n_e * n_gp * n_gjp * (2 * 6 * g_dof),
        stiffness_flops: n_e * n_gp * (g_dof * g_dof + 11 * g_dof * g_dof + 66 * g_dof),
        btilde_order: "O(G_DOF^2)".into(),
        stiffness_order: "O(G_DOF^3)".into(),
    }
}

pub fn estimate_flops(case: &PlateCase) -> FlopReport {
    let n_e = case.mesh.cells.len() as u64;
    let n_gp = (case.mesh.order * case.mesh.order) as u64;
    flop_counts(n_e, n_gp, case.n_gjp as u64, case.n_dof() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracdiff::FracParams;
    use crate::geometry::{make_uniform_grid, BackgroundMesh};
    use crate::plate::{deflection_at, Material, SystemMatrices};
    use crate::geometry::Point;

    fn case(q0: f64, nx: usize) -> PlateCase {
        let cloud = make_uniform_grid(1.0, 1.0, nx, nx).unwrap();
        let br: Vec<f64> = (0..=nx).map(|i| i as f64 / nx as f64).collect();
        let mesh = BackgroundMesh::rectangle(&br, &br, 4).unwrap();
        PlateCase::new(
            0.02,
            Material::new(1.09e6, 0.3).unwrap(),
            FracParams::new(1.0, 0.5).unwrap(),
            q0,
            cloud,
            mesh,
            30,
        )
        .unwrap()
    }

    #[test]
    fn flop_golden_value() {
        let r = flop_counts(144, 16, 30, 507);
        assert_eq!(r.btilde_flops, 420_526_080);
        let a = flop_counts(144, 16, 30, 507).stiffness_flops;
        let b = flop_counts(144, 16, 60, 507).stiffness_flops;
        assert_eq!(a, b);
        assert_eq!(a, 144 * 16 * (12 * 507 * 507 + 66 * 507));
    }

    #[test]
    fn flops_from_case() {
        let r = estimate_flops(&case(1.0, 12));
        assert_eq!((r.n_elements, r.n_gauss_per_element, r.g_dof), (144, 16, 507));
        assert_eq!(r.btilde_flops, 420_526_080);
    }

    #[test]
    fn singular_system_is_reported() {
        let sys = SystemMatrices {
            k: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
            f: DVector::from_vec(vec![1.0, 1.0]),
            constrained: 0,
        };
        assert!(matches!(solve_linear(&sys), Err(Error::Singular { .. })));
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let r = solve_case_linear(&case(0.0, 6)).unwrap();
        assert!(r.u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn load_linearity() {
        let a = solve_case_linear(&case(1.0, 6)).unwrap();
        let b = solve_case_linear(&case(2.0, 6)).unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((2.0 * x - y).abs() <= 1e-9 * y.abs().max(1e-12));
        }
    }

    #[test]
    fn small_load_nonlinear_matches_linear() {
        let c = case(1e-3, 6);
        let lin = solve_case_linear(&c).unwrap();
        let mut s = SolverSettings::for_thickness(0.02);
        s.n_load_steps = 1;
        s.tol_disp = 1e-12;
        let nl = solve_nonlinear(&c, &s).unwrap();
        let p = Point::new(0.5, 0.5);
        let wl = deflection_at(&c.cloud, &lin.u, p).unwrap();
        let wn = deflection_at(&c.cloud, &nl.u, p).unwrap();
        assert!(((wl - wn) / wl).abs() < 1e-4, "{wl} {wn}");
    }

    #[test]
    fn settings_validation() {
        let s = SolverSettings { n_load_steps: 0, ..Default::default() };
        assert!(s.validate().is_err());
        let s = SolverSettings { tol_disp: 0.0, ..Default::default() };
        assert!(s.validate().is_err());
    }
}
