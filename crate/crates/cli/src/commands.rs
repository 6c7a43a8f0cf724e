//! Subcommand implementations. Each command reads its config section,
//! emits a results CSV plus a flat-text reproducibility manifest into the
//! output directory, and prints a one-line summary per artifact written.

use crate::config::*;
use crate::plot::{LinePlot, Series};
use anyhow::{bail, Context};
use masslab::experiments::{self, GridSpec};
use masslab::optim::{self, BatchScheme, OptimizerSpec, RunSettings};
use masslab::par::Jobs;
use masslab::problem::{self, BatchSize};
use masslab::report;
use std::path::{Path, PathBuf};

fn ensure_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn profile_kv(profile: &masslab::SpectralProfile, prefix: &str) -> Vec<(String, String)> {
    vec![
        (format!("{prefix}L"), format!("{:.17e}", profile.l)),
        (format!("{prefix}mu"), format!("{:.17e}", profile.mu)),
        (format!("{prefix}L1"), format!("{:.17e}", profile.l1)),
        (
            format!("{prefix}kappa_tilde"),
            format!("{:.17e}", profile.kappa_tilde),
        ),
        (
            format!("{prefix}kappa"),
            format!("{:.17e}", profile.kappa()),
        ),
        (
            format!("{prefix}kappa1"),
            format!("{:.17e}", profile.kappa1()),
        ),
        (format!("{prefix}rank"), profile.rank.to_string()),
    ]
}

pub fn cmd_generate(config: &Config, out: &Path) -> anyhow::Result<()> {
    let ds = require_dataset(config)?;
    ensure_out(out)?;
    let problem = ds.build()?;
    let csv_path = out.join("dataset.csv");
    problem::export_csv(&problem, &csv_path, true)?;

    let profile = problem::spectral_profile(&problem)?;
    let mut kv = vec![
        ("n".to_string(), problem.n().to_string()),
        ("d".to_string(), problem.d().to_string()),
    ];
    kv.extend(profile_kv(&profile, "empirical_"));
    if let Some(pop) = ds.population_profile() {
        kv.extend(profile_kv(&pop, "population_"));
    }
    let profile_path = out.join("profile.txt");
    report::write_kv_manifest(&profile_path, &kv)?;

    let mut manifest = ds.describe();
    manifest.push(("output.dataset".into(), "dataset.csv".into()));
    manifest.push(("output.profile".into(), "profile.txt".into()));
    report::write_kv_manifest(&out.join("generate_manifest.txt"), &manifest)?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", profile_path.display());
    Ok(())
}

fn build_spec(run: &RunConfig, problem: &masslab::LinearProblem) -> anyhow::Result<OptimizerSpec> {
    let optimal = run.params == "optimal";
    if !optimal && run.params != "explicit" {
        bail!("[run] params must be \"optimal\" or \"explicit\"");
    }
    let batch = if run.full_batch {
        BatchSize::Full
    } else {
        BatchSize::Finite(run.m)
    };
    let need = |v: Option<f64>, name: &str| {
        v.with_context(|| format!("[run] params = \"explicit\" requires {name}"))
    };
    Ok(match run.method.as_str() {
        "sgd" => {
            if optimal {
                let profile = problem::spectral_profile(problem)?;
                let c = problem::batch_constants(&profile, batch)?;
                OptimizerSpec::Sgd { eta: 1.0 / c.l_m }
            } else {
                OptimizerSpec::Sgd {
                    eta: need(run.eta, "eta")?,
                }
            }
        }
        "nesterov" => OptimizerSpec::Nesterov {
            eta: need(run.eta, "eta")?,
            gamma: need(run.gamma, "gamma")?,
        },
        "heavyball" => OptimizerSpec::HeavyBall {
            eta: need(run.eta, "eta")?,
            gamma: need(run.gamma, "gamma")?,
        },
        "mass" | "mass-analytic" => {
            if optimal {
                let profile = problem::spectral_profile(problem)?;
                let (analytic, practical) = optim::optimal_hyperparams(&profile, batch)?;
                if run.method == "mass" {
                    OptimizerSpec::MassPractical(practical)
                } else {
                    OptimizerSpec::MassAnalytic(analytic)
                }
            } else {
                OptimizerSpec::MassPractical(optim::HyperParamsPractical {
                    eta1: need(run.eta, "eta")?,
                    eta2: run.eta2.unwrap_or(0.0),
                    gamma: need(run.gamma, "gamma")?,
                })
            }
        }
        other => {
            bail!("unknown method {other:?} (sgd | nesterov | heavyball | mass | mass-analytic)")
        }
    })
}

pub fn cmd_run(config: &Config, out: &Path, seed_override: Option<u64>) -> anyhow::Result<()> {
    let ds = require_dataset(config)?;
    let run_cfg = config.run.clone().unwrap_or_default();
    ensure_out(out)?;
    let problem = ds.build()?;
    let spec = build_spec(&run_cfg, &problem)?;
    let settings = RunSettings {
        batch: if run_cfg.full_batch {
            BatchScheme::Full
        } else if run_cfg.without_replacement {
            BatchScheme::WithoutReplacement { m: run_cfg.m }
        } else {
            BatchScheme::Iid { m: run_cfg.m }
        },
        max_iters: run_cfg.max_iters,
        eval_every: run_cfg.eval_every,
        target_loss: run_cfg.target_loss,
        seed: seed_override.unwrap_or(run_cfg.seed),
    };
    let trajectory = optim::run(&problem, &spec, &settings)?;

    let csv_path = out.join("trajectory.csv");
    trajectory.write_csv(&csv_path)?;
    let mut manifest = ds.describe();
    manifest.extend(trajectory.manifest());
    report::write_kv_manifest(&out.join("run_manifest.txt"), &manifest)?;
    println!(
        "wrote {} ({} records, diverged={}, reached={:?})",
        csv_path.display(),
        trajectory.records.len(),
        trajectory.diverged,
        trajectory.reached_target
    );
    Ok(())
}

pub fn cmd_compare(config: &Config, out: &Path, seed_override: Option<u64>) -> anyhow::Result<()> {
    let ds = require_dataset(config)?;
    let cfg = config.compare.clone().unwrap_or_default();
    ensure_out(out)?;
    let problem = ds.build()?;
    let grid = GridSpec {
        eta_grid: experiments::log_spaced(cfg.eta_min, cfg.eta_max, cfg.eta_points),
        gamma_grid: cfg.gammas.clone(),
        repeats: cfg.repeats,
    };
    let seed = seed_override.unwrap_or(cfg.seed);
    let report_data = experiments::compare_optimizers(
        &problem,
        cfg.m,
        cfg.target_loss,
        &grid,
        cfg.max_iters,
        seed,
        Jobs::Default,
    )?;
    let csv_path = out.join("compare.csv");
    report::write_compare_csv(&csv_path, &report_data)?;
    report::write_compare_cells_csv(&out.join("compare_cells.csv"), &report_data)?;

    let mut manifest = ds.describe();
    manifest.push(("compare.m".into(), cfg.m.to_string()));
    manifest.push((
        "compare.target_loss".into(),
        format!("{:.17e}", cfg.target_loss),
    ));
    manifest.push(("compare.max_iters".into(), cfg.max_iters.to_string()));
    manifest.push(("compare.repeats".into(), cfg.repeats.to_string()));
    manifest.push(("compare.eta_min".into(), format!("{:.17e}", cfg.eta_min)));
    manifest.push(("compare.eta_max".into(), format!("{:.17e}", cfg.eta_max)));
    manifest.push(("compare.eta_points".into(), cfg.eta_points.to_string()));
    manifest.push((
        "compare.gammas".into(),
        cfg.gammas
            .iter()
            .map(|g| format!("{g:.17e}"))
            .collect::<Vec<_>>()
            .join(" "),
    ));
    manifest.push(("compare.seed".into(), seed.to_string()));
    let profile = problem::spectral_profile(&problem)?;
    manifest.extend(profile_kv(&profile, "empirical_"));
    report::write_kv_manifest(&out.join("compare_manifest.txt"), &manifest)?;
    println!("wrote {}", csv_path.display());
    for s in &report_data.summaries {
        println!(
            "  {:>9}: {}",
            s.method.to_string(),
            match s.outcome {
                experiments::CellOutcome::Reached(t) => format!("{t} iterations"),
                experiments::CellOutcome::Diverged => "diverged".into(),
            }
        );
    }
    Ok(())
}

pub fn cmd_regimes(config: &Config, out: &Path, seed_override: Option<u64>) -> anyhow::Result<()> {
    let ds = require_dataset(config)?;
    let cfg = config.regimes.clone().unwrap_or_default();
    ensure_out(out)?;
    let problem = ds.build()?;
    let geometry = optim::Geometry::new(&problem)?;
    let (initial_loss, _) = geometry.eval(&vec![0.0; problem.d()]);
    let target = cfg.target_loss_ratio * initial_loss;
    let seed = seed_override.unwrap_or(cfg.seed);
    let population = ds.population_profile();
    let report_data = experiments::regime_sweep(
        &problem,
        &cfg.m_list,
        target,
        cfg.repeats,
        cfg.max_iters,
        seed,
        population.as_ref(),
        Jobs::Default,
    )?;
    let csv_path = out.join("regimes.csv");
    report::write_regime_csv(&csv_path, &report_data)?;

    let mut manifest = ds.describe();
    manifest.push((
        "regimes.m_list".into(),
        cfg.m_list
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    ));
    manifest.push((
        "regimes.target_loss_ratio".into(),
        format!("{:.17e}", cfg.target_loss_ratio),
    ));
    manifest.push(("regimes.target_loss".into(), format!("{target:.17e}")));
    manifest.push(("regimes.repeats".into(), cfg.repeats.to_string()));
    manifest.push(("regimes.max_iters".into(), cfg.max_iters.to_string()));
    manifest.push(("regimes.seed".into(), seed.to_string()));
    manifest.push(("m1_star".into(), format!("{:.17e}", report_data.m1_star)));
    manifest.push(("m2_star".into(), format!("{:.17e}", report_data.m2_star)));
    let profile = problem::spectral_profile(&problem)?;
    manifest.extend(profile_kv(&profile, "empirical_"));
    if let Some(pop) = population.as_ref() {
        manifest.extend(profile_kv(pop, "population_"));
    }
    report::write_kv_manifest(&out.join("regimes_manifest.txt"), &manifest)?;
    println!(
        "wrote {} (m1* = {:.2}, m2* = {:.2})",
        csv_path.display(),
        report_data.m1_star,
        report_data.m2_star
    );
    Ok(())
}

pub fn cmd_nesterov_phase(config: &Config, out: &Path) -> anyhow::Result<()> {
    let cfg = config.phase.clone().unwrap_or_default();
    ensure_out(out)?;
    let etas = experiments::log_spaced(cfg.eta_min, cfg.eta_max, cfg.eta_points);
    let rows = masslab::nesterov::phase_sweep(
        cfg.sigma1_sq,
        cfg.sigma2_sq,
        &cfg.u_values,
        &etas,
        Jobs::Default,
    )?;
    let csv_path = out.join("phase.csv");
    report::write_phase_csv(&csv_path, &rows)?;
    let manifest = vec![
        (
            "phase.sigma1_sq".to_string(),
            format!("{:.17e}", cfg.sigma1_sq),
        ),
        (
            "phase.sigma2_sq".to_string(),
            format!("{:.17e}", cfg.sigma2_sq),
        ),
        (
            "phase.u_values".to_string(),
            cfg.u_values
                .iter()
                .map(|u| format!("{u:.17e}"))
                .collect::<Vec<_>>()
                .join(" "),
        ),
        ("phase.eta_min".to_string(), format!("{:.17e}", cfg.eta_min)),
        ("phase.eta_max".to_string(), format!("{:.17e}", cfg.eta_max)),
        ("phase.eta_points".to_string(), cfg.eta_points.to_string()),
    ];
    report::write_kv_manifest(&out.join("phase_manifest.txt"), &manifest)?;
    println!("wrote {} ({} cells)", csv_path.display(), rows.len());
    Ok(())
}

pub fn cmd_verify(config: &Config, out: &Path, seed_override: Option<u64>) -> anyhow::Result<bool> {
    let ds = require_dataset(config)?;
    let cfg = config.verify.clone().unwrap_or_default();
    ensure_out(out)?;
    let problem = ds.build()?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let profile = problem::spectral_profile(&problem)?;
    let mut checks: Vec<(String, bool, String)> = Vec::new();

    // Hyper-parameter bijection at profile-derived optima.
    {
        let mut worst = 0.0f64;
        for m in [1u64, 4, 64, 1024] {
            let (a, _) = optim::optimal_hyperparams(&profile, BatchSize::Finite(m))?;
            let back = optim::to_analytic(&optim::to_practical(&a)?)?;
            worst = worst
                .max((back.eta - a.eta).abs() / a.eta)
                .max((back.alpha - a.alpha).abs() / a.alpha)
                .max((back.delta - a.delta).abs() / a.delta);
        }
        checks.push((
            "bijection round-trip".into(),
            worst <= 1e-14,
            format!("worst relative deviation {worst:.2e} (tolerance 1e-14)"),
        ));
    }

    // Optimal hyper-parameters satisfy the convergence conditions.
    {
        let (a, _) = optim::optimal_hyperparams(&profile, BatchSize::Finite(1))?;
        let r = optim::check_convergence_conditions(&a, &profile, BatchSize::Finite(1))?;
        checks.push((
            "convergence conditions at optimum".into(),
            r.satisfied,
            format!(
                "contraction slack {:.2e}, step slack {:.2e}",
                r.contraction_slack, r.step_slack
            ),
        ));
    }

    // Practical/analytic equivalence over 1000 steps.
    {
        let (a, p) = optim::optimal_hyperparams(&profile, BatchSize::Finite(1))?;
        let settings = RunSettings {
            batch: BatchScheme::Iid { m: 1 },
            max_iters: 1000,
            eval_every: 1,
            target_loss: None,
            seed,
        };
        let ta = optim::run(&problem, &OptimizerSpec::MassAnalytic(a), &settings)?;
        let tp = optim::run(&problem, &OptimizerSpec::MassPractical(p), &settings)?;
        let worst = ta
            .records
            .iter()
            .zip(&tp.records)
            .map(|(x, y)| (x.loss - y.loss).abs() / (1.0 + x.loss.abs()))
            .fold(0.0, f64::max);
        checks.push((
            "practical/analytic equivalence".into(),
            worst <= 1e-10,
            format!("worst relative loss deviation {worst:.2e} over 1000 steps"),
        ));
    }

    // Lyapunov contraction at the optimal parameters.
    {
        let (a, _) = optim::optimal_hyperparams(&profile, BatchSize::Finite(1))?;
        let rep = experiments::lyapunov_suite(
            &problem,
            &a,
            1,
            cfg.lyapunov_t_max,
            cfg.lyapunov_seeds,
            seed,
            Jobs::Default,
        )?;
        checks.push((
            "Lyapunov contraction".into(),
            rep.passes(3.0),
            format!(
                "worst excess {:.2} SE over {} steps x {} seeds",
                rep.worst_excess_se(),
                cfg.lyapunov_t_max,
                cfg.lyapunov_seeds
            ),
        ));
    }

    // Automatic variance reduction bound and quadratic scaling.
    {
        let rows = experiments::avr_suite(&problem, &[0.05, 0.1, 0.2], cfg.avr_samples, seed)?;
        let bound_ok = rows
            .iter()
            .all(|r| r.measured_trace <= r.bound + 5.0 * r.measured_se);
        let ratio = rows[1].measured_trace / rows[0].measured_trace;
        let scale_ok = (ratio - 4.0).abs() <= 0.8;
        checks.push((
            "variance bound".into(),
            bound_ok,
            rows.iter()
                .map(|r| {
                    format!(
                        "r={}: {:.3e} <= {:.3e}",
                        r.radius, r.measured_trace, r.bound
                    )
                })
                .collect::<Vec<_>>()
                .join("; "),
        ));
        checks.push((
            "variance quadratic scaling".into(),
            scale_ok,
            format!("doubling ratio {ratio:.3} (expect 4 +/- 0.8)"),
        ));
    }

    // Second-moment operator versus simulation.
    {
        let est =
            masslab::nesterov::monte_carlo_second_moment(1.0, 0.15, 0.85, 1.0, 20, 4000, seed)?;
        let ok = est
            .residual_mean
            .iter()
            .zip(&est.residual_se)
            .all(|(m, se)| (0..4).all(|c| m[c].abs() <= 5.0 * se[c] + 1e-12));
        checks.push((
            "second-moment operator bridge".into(),
            ok,
            "one-step residuals within 5 SE for t <= 20".into(),
        ));
    }

    let all_pass = checks.iter().all(|(_, ok, _)| *ok);
    let mut lines = Vec::new();
    for (name, ok, detail) in &checks {
        let line = format!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        println!("{line}");
        lines.push(line);
    }
    lines.push(format!(
        "result = {}",
        if all_pass {
            "all checks passed"
        } else {
            "FAILURES PRESENT"
        }
    ));
    std::fs::write(out.join("verify_report.txt"), lines.join("\n") + "\n")
        .context("writing verify report")?;
    Ok(all_pass)
}

pub fn cmd_plot(kind: Option<&str>, csvs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    if csvs.is_empty() {
        bail!("plot requires at least one CSV path");
    }
    ensure_out(out)?;
    let header = {
        let first = std::fs::read_to_string(&csvs[0])
            .with_context(|| format!("cannot read {}", csvs[0].display()))?;
        first.lines().next().unwrap_or_default().to_string()
    };
    let kind = match kind {
        Some(k) => k.to_string(),
        None if header.starts_with("iteration,") => "loss".to_string(),
        None if header.starts_with("m,") => "regimes".to_string(),
        None => bail!("cannot infer plot kind from header {header:?}; pass --kind"),
    };
    let svg_path = out.join(format!("plot_{kind}.svg"));
    match kind.as_str() {
        "loss" => {
            let mut series = Vec::new();
            for path in csvs {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                let mut points = Vec::new();
                for line in text.lines().skip(1) {
                    let mut cells = line.split(',');
                    let (Some(it), Some(loss)) = (cells.next(), cells.next()) else {
                        continue;
                    };
                    if let (Ok(it), Ok(loss)) = (it.parse::<f64>(), loss.parse::<f64>()) {
                        if loss > 0.0 {
                            points.push((it, loss.log10()));
                        }
                    }
                }
                series.push(Series {
                    label: path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| path.display().to_string()),
                    points,
                });
            }
            let plot = LinePlot {
                title: "training loss".into(),
                x_label: "iteration".into(),
                y_label: "log10 loss".into(),
                log_x: false,
                series,
            };
            std::fs::write(&svg_path, plot.render())?;
        }
        "regimes" => {
            let text = std::fs::read_to_string(&csvs[0])
                .with_context(|| format!("cannot read {}", csvs[0].display()))?;
            let mut measured = Vec::new();
            let mut theory = Vec::new();
            let mut scale: Option<f64> = None;
            for line in text.lines().skip(1) {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() < 4 {
                    continue;
                }
                let m: f64 = cells[0].parse().unwrap_or(f64::NAN);
                let speed: f64 = cells[2].parse().unwrap_or(f64::NAN);
                let theory_speed: f64 = cells[3].parse().unwrap_or(f64::NAN);
                if m.is_finite() && speed.is_finite() && speed > 0.0 {
                    if scale.is_none() && theory_speed > 0.0 {
                        scale = Some(speed / theory_speed);
                    }
                    measured.push((m, speed.log10()));
                    if let Some(s) = scale {
                        theory.push((m, (theory_speed * s).log10()));
                    }
                }
            }
            let plot = LinePlot {
                title: "convergence speed vs batch size".into(),
                x_label: "batch size m".into(),
                y_label: "log10 speed".into(),
                log_x: true,
                series: vec![
                    Series {
                        label: "measured".into(),
                        points: measured,
                    },
                    Series {
                        label: "theory (scaled)".into(),
                        points: theory,
                    },
                ],
            };
            std::fs::write(&svg_path, plot.render())?;
        }
        other => bail!("unknown plot kind {other:?} (loss | regimes)"),
    }
    println!("wrote {}", svg_path.display());
    Ok(())
}
