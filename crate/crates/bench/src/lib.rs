//! Benchmark fixtures for the f-EFG assembly kernels.

use fefg::fracdiff::FracParams;
use fefg::geometry::{make_uniform_grid, BackgroundMesh};
use fefg::plate::{Material, PlateCase};

/// Unit square plate on an `n × n` uniform grid with 4×4 Gauss points per
/// cell and 30 Gauss–Jacobi points per horizon side.
pub fn square_plate(n: usize, alpha: f64, h_l: f64) -> PlateCase {
    let cloud = make_uniform_grid(1.0, 1.0, n, n).expect("valid grid");
    let br: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mesh = BackgroundMesh::rectangle(&br, &br, 4).expect("valid mesh");
    PlateCase::new(
        0.02,
        Material::new(1.09e6, 0.3).expect("valid material"),
        FracParams::new(alpha, h_l).expect("valid parameters"),
        10.0,
        cloud,
        mesh,
        30,
    )
    .expect("valid case")
}
