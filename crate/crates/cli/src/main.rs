//! Command-line driver: run configured plate cases, normalize and compare
//! against the bundled reference tables, and write field and cost data.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use fefg::case::{Mode, RunConfig};
use fefg::fracdiff::{frac_b_all, write_rows_csv, FracRules};
use fefg::plate::{deflection_at, displacement_at, PlateCase};
use fefg::report::{compare_tables, normalize, Comparison, Quantity, ReferenceSet, Scales};
use fefg::solver::{estimate_flops, solve_case_linear, solve_nonlinear, FlopReport, StepRecord, Timings};
use fefg::Error;

#[derive(Parser)]
#[command(name = "fefg", version, about = "Fractional-order EFG solver for nonlocal Kirchhoff plates")]
struct Cli {
    /// Output directory; each case writes to `<out>/<id>/`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Write the bundled reference tables as CSV to this path.
    #[arg(long, global = true)]
    seed_tables: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case.
    Run { config: PathBuf },
    /// Solve every `*.toml` case in a directory.
    Suite { dir: PathBuf },
    /// Print the operation-count model for a case without solving.
    Flops { config: PathBuf },
}

/// Exit status for an error: 2 validation, 3 nonconvergence, 4 internal.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Usage(_) | Error::Io(_) | Error::Coverage { .. } => 2,
        Error::NonConvergence { .. } => 3,
        Error::Invariant(_) | Error::Singular { .. } | Error::Domain(_) => 4,
    }
}

#[derive(Serialize)]
struct Normalized {
    value: f64,
    units: &'static str,
    formula: &'static str,
}

#[derive(Serialize)]
struct CaseReport {
    id: String,
    mode: Mode,
    status: &'static str,
    error: Option<String>,
    /// Applied load (Pa).
    q0: f64,
    probe: [f64; 2],
    /// Deflection at the probe (m).
    w0: Option<f64>,
    normalized: Option<Normalized>,
    comparison: Option<Comparison>,
    history: Vec<StepRecord>,
    collocation_residual: Option<f64>,
    timings: Option<Timings>,
    n_nodes: usize,
    flops: FlopReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> fefg::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn csv_writer(path: &Path) -> fefg::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_nodal(path: &Path, case: &PlateCase, u: &[f64]) -> fefg::Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "x,y,u0,v0,w0")?;
    for p in &case.cloud.nodes {
        let [u0, v0, w0] = displacement_at(&case.cloud, u, *p)?;
        writeln!(w, "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", p.x, p.y, u0, v0, w0)?;
    }
    w.flush()?;
    Ok(())
}

fn write_centerline(path: &Path, cfg: &RunConfig, case: &PlateCase, u: &[f64]) -> fefg::Result<()> {
    let scales = Scales::from_config(cfg);
    let mut w = csv_writer(path)?;
    writeln!(w, "x,y,w0,w_bar")?;
    for p in cfg.centerline() {
        let w0 = deflection_at(&case.cloud, u, p)?;
        let wb = normalize(w0, &scales, cfg.mode)?;
        writeln!(w, "{:.12e},{:.12e},{:.12e},{:.12e}", p.x, p.y, w0, wb)?;
    }
    w.flush()?;
    Ok(())
}

fn write_btilde(path: &Path, case: &PlateCase) -> fefg::Result<()> {
    let rules = if case.frac.is_local() {
        None
    } else {
        Some(FracRules::new(case.n_gjp, case.frac.alpha)?)
    };
    let samples = case
        .mesh
        .gauss_points()
        .map(|g| Ok((g.point, frac_b_all(g.point, &case.frac, rules.as_ref(), &case.cloud)?)))
        .collect::<fefg::Result<Vec<_>>>()?;
    write_rows_csv(csv_writer(path)?, &samples)
}

/// Solve one configured case and write its artifacts.
fn run_case(cfg: &RunConfig, out: &Path, refs: &ReferenceSet) -> fefg::Result<()> {
    let case = cfg.build_case()?;
    let dir = out.join(&cfg.id);
    fs::create_dir_all(&dir)?;
    let flops = estimate_flops(&case);
    write_json(&dir.join("flops.json"), &flops)?;
    if cfg.output.dump_btilde {
        write_btilde(&dir.join("btilde.csv"), &case)?;
    }
    let probe = cfg.probe();
    let mut report = CaseReport {
        id: cfg.id.clone(),
        mode: cfg.mode,
        status: "ok",
        error: None,
        q0: cfg.q0(),
        probe: [probe.x, probe.y],
        w0: None,
        normalized: None,
        comparison: None,
        history: Vec::new(),
        collocation_residual: None,
        timings: None,
        n_nodes: case.n_nodes(),
        flops,
    };
    let solved = match cfg.mode {
        Mode::Linear => solve_case_linear(&case),
        Mode::Nonlinear => solve_nonlinear(&case, &cfg.solver_settings()),
    };
    let res = match solved {
        Ok(r) => r,
        Err(e) => {
            report.status = "failed";
            report.error = Some(e.to_string());
            if let Error::NonConvergence { history, .. } = &e {
                report.history = history.clone();
            }
            write_json(&dir.join("report.json"), &report)?;
            return Err(e);
        }
    };
    write_nodal(&dir.join("nodal.csv"), &case, &res.u)?;
    write_centerline(&dir.join("centerline.csv"), cfg, &case, &res.u)?;

    let scales = Scales::from_config(cfg);
    let w0 = deflection_at(&case.cloud, &res.u, probe)?;
    let quantity = Quantity::for_mode(cfg.mode);
    report.w0 = Some(w0);
    report.normalized = Some(Normalized {
        value: normalize(w0, &scales, cfg.mode)?,
        units: quantity.units(),
        formula: quantity.formula(),
    });
    report.comparison = Some(compare_tables(&cfg.id, report.probe, w0, &scales, &cfg.compare, refs)?);
    report.history = res.history;
    report.collocation_residual = Some(res.collocation_residual);
    report.timings = Some(res.timings);
    write_json(&dir.join("report.json"), &report)?;

    let norm = report.normalized.as_ref().map(|n| n.value).unwrap_or(f64::NAN);
    println!("{}: w0 = {w0:.6e} m, w_bar = {norm:.5}", cfg.id);
    if let Some(c) = &report.comparison {
        for r in &c.rows {
            let verdict = match r.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "MISSING",
            };
            let reference = r.reference.map_or("-".to_string(), |v| format!("{v}"));
            let err = r.rel_error.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
            println!(
                "  {verdict} {}/{}/{}: value {:.5} ref {reference} rel.err {err} tol {:.0}%",
                r.table,
                r.row,
                r.column,
                r.value,
                100.0 * r.tolerance
            );
        }
    }
    Ok(())
}

fn report_error(context: &str, e: &Error) -> u8 {
    eprintln!("{context}: {e}");
    exit_code(e)
}

fn suite_configs(dir: &Path) -> fefg::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Usage(format!("no *.toml case files in {}", dir.display())));
    }
    Ok(paths)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let refs = ReferenceSet::bundled();
    if let Some(path) = &cli.seed_tables {
        let res = fs::File::create(path)
            .map_err(Error::from)
            .and_then(|f| refs.write_csv(BufWriter::new(f)));
        if let Err(e) = res {
            return ExitCode::from(report_error("seed-tables", &e));
        }
        println!("wrote {} reference values to {}", refs.len(), path.display());
    }
    let code = match &cli.command {
        None if cli.seed_tables.is_some() => 0,
        None => {
            eprintln!("nothing to do: give a subcommand or --seed-tables (see --help)");
            2
        }
        Some(Command::Run { config }) => match RunConfig::from_path(config) {
            Ok(cfg) => run_case(&cfg, &cli.out, &refs).map_or_else(|e| report_error(&cfg.id, &e), |_| 0),
            Err(e) => report_error(&config.display().to_string(), &e),
        },
        Some(Command::Suite { dir }) => match suite_configs(dir) {
            Err(e) => report_error(&dir.display().to_string(), &e),
            Ok(paths) => {
                // validate every case before solving any
                let cfgs: Result<Vec<RunConfig>, u8> = paths
                    .iter()
                    .map(|p| RunConfig::from_path(p).map_err(|e| report_error(&p.display().to_string(), &e)))
                    .collect();
                match cfgs {
                    Err(code) => code,
                    Ok(cfgs) => cfgs
                        .par_iter()
                        .map(|cfg| run_case(cfg, &cli.out, &refs).map_or_else(|e| report_error(&cfg.id, &e), |_| 0))
                        .collect::<Vec<u8>>()
                        .into_iter()
                        .max()
                        .unwrap_or(0),
                }
            }
        },
        Some(Command::Flops { config }) => match RunConfig::from_path(config).and_then(|c| {
            let case = c.build_case()?;
            let flops = estimate_flops(&case);
            let dir = cli.out.join(&c.id);
            fs::create_dir_all(&dir)?;
            write_json(&dir.join("flops.json"), &flops)?;
            Ok(flops)
        }) {
            Ok(f) => {
                println!("{}", serde_json::to_string_pretty(&f).unwrap_or_default());
                0
            }
            Err(e) => report_error(&config.display().to_string(), &e),
        },
    };
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Parse("x".into())), 2);
        let nc = Error::NonConvergence {
            step: 1,
            reason: "x".into(),
            history: Vec::new(),
        };
        assert_eq!(exit_code(&nc), 3);
        assert_eq!(exit_code(&Error::Invariant("x".into())), 4);
        assert_eq!(exit_code(&Error::Singular { min_pivot: 0.0 }), 4);
    }
}
