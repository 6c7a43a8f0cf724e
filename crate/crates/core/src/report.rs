//! Plain-text outputs: experiment CSVs and flat key-value manifests.
//! All numeric cells use 17 significant digits so files are reproducible
//! bit-for-bit and parse back exactly.

use crate::experiments::{CompareReport, RegimeReport};
use crate::nesterov::PhaseRow;
use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

fn writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?,
    ))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Writes `key = value` lines in the given order.
pub fn write_kv_manifest(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut out = writer(path)?;
    for (k, v) in pairs {
        writeln!(out, "{k} = {v}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Phase-diagram CSV: `u,eta,lambda_max_1,lambda_max_2,verdict`.
pub fn write_phase_csv(path: &Path, rows: &[PhaseRow]) -> Result<()> {
    let mut out = writer(path)?;
    writeln!(out, "u,eta,lambda_max_1,lambda_max_2,verdict").map_err(io_err(path))?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.u,
            r.eta,
            r.lambda_max_1,
            r.lambda_max_2,
            if r.diverges { "diverges" } else { "converges" }
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Comparison summary CSV: one row per method with its best cell.
pub fn write_compare_csv(path: &Path, report: &CompareReport) -> Result<()> {
    let mut out = writer(path)?;
    writeln!(out, "method,eta,gamma,eta2,iterations,status").map_err(io_err(path))?;
    for s in &report.summaries {
        let (eta, gamma, eta2) = match &s.best {
            crate::optim::OptimizerSpec::Sgd { eta } => (*eta, 0.0, 0.0),
            crate::optim::OptimizerSpec::Nesterov { eta, gamma }
            | crate::optim::OptimizerSpec::HeavyBall { eta, gamma } => (*eta, *gamma, 0.0),
            crate::optim::OptimizerSpec::MassPractical(p) => (p.eta1, p.gamma, p.eta2),
            crate::optim::OptimizerSpec::MassAnalytic(p) => {
                let pr = crate::optim::to_practical(p).expect("alpha > 0");
                (pr.eta1, pr.gamma, pr.eta2)
            }
        };
        let (iters, status) = match s.outcome {
            crate::experiments::CellOutcome::Reached(t) => (t.to_string(), "reached"),
            crate::experiments::CellOutcome::Diverged => (String::new(), "diverged"),
        };
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            s.method, eta, gamma, eta2, iters, status
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Full grid-cell CSV backing a comparison run.
pub fn write_compare_cells_csv(path: &Path, report: &CompareReport) -> Result<()> {
    let mut out = writer(path)?;
    writeln!(out, "method,eta,gamma,eta2,median_iterations,status").map_err(io_err(path))?;
    for c in &report.cells {
        let (eta, gamma, eta2) = match &c.spec {
            crate::optim::OptimizerSpec::Sgd { eta } => (*eta, 0.0, 0.0),
            crate::optim::OptimizerSpec::Nesterov { eta, gamma }
            | crate::optim::OptimizerSpec::HeavyBall { eta, gamma } => (*eta, *gamma, 0.0),
            crate::optim::OptimizerSpec::MassPractical(p) => (p.eta1, p.gamma, p.eta2),
            crate::optim::OptimizerSpec::MassAnalytic(p) => {
                let pr = crate::optim::to_practical(p).expect("alpha > 0");
                (pr.eta1, pr.gamma, pr.eta2)
            }
        };
        let (iters, status) = match c.outcome {
            crate::experiments::CellOutcome::Reached(t) => (t.to_string(), "reached"),
            crate::experiments::CellOutcome::Diverged => (String::new(), "diverged"),
        };
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            c.method, eta, gamma, eta2, iters, status
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Regime-sweep CSV: one row per batch size.
pub fn write_regime_csv(path: &Path, report: &RegimeReport) -> Result<()> {
    let mut out = writer(path)?;
    writeln!(
        out,
        "m,iterations,speed,theory_speed,eta,alpha,delta,status"
    )
    .map_err(io_err(path))?;
    for r in &report.rows {
        let iters = r.iterations.map(|t| t.to_string()).unwrap_or_default();
        let speed = r.speed.map(|s| format!("{s:.16e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.m,
            iters,
            speed,
            r.theory_speed,
            r.params.eta,
            r.params.alpha,
            r.params.delta,
            if r.iterations.is_some() {
                "reached"
            } else {
                "unreached"
            }
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{compare_optimizers, GridSpec};
    use crate::par::Jobs;
    use crate::problem::gen_component_decoupled;

    #[test]
    fn manifest_and_csv_are_byte_stable() {
        let p = gen_component_decoupled(1.0, 0.25, 400, 3).unwrap();
        let grid = GridSpec {
            eta_grid: vec![0.05, 0.2],
            gamma_grid: vec![0.0],
            repeats: 3,
        };
        let report = compare_optimizers(&p, 1, 1e-4, &grid, 20_000, 5, Jobs::Default).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_compare_csv(&a, &report).unwrap();
        let report2 = compare_optimizers(&p, 1, 1e-4, &grid, 20_000, 5, Jobs::Serial).unwrap();
        write_compare_csv(&b, &report2).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

        let kv = dir.path().join("m.txt");
        write_kv_manifest(&kv, &[("a".into(), "1".into()), ("b".into(), "x y".into())]).unwrap();
        assert_eq!(std::fs::read_to_string(&kv).unwrap(), "a = 1\nb = x y\n");
    }
}
