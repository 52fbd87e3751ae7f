use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gfmsf_core::plant::GridKind;
use gfmsf_core::runner::{
    compare_clf, emit_trace, load_config, run_scenario, ClcKind, GfmKind, Metrics, ScenarioConfig,
};
use gfmsf_core::sfilter::CertificateSet;
use gfmsf_core::verifier::{check_abc_bound, OperationalRegion, VerificationReport, Verifier};

#[derive(Parser)]
#[command(name = "gfmsf", about = "Grid-forming converter current-limiting simulation and certificate verification", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario from a config file and print its metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the trace as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full scenario matrix (2 grids x 2 GFM schemes x 6 limiters).
    Matrix {
        /// Directory for the per-scenario CSV traces.
        #[arg(long)]
        out_dir: PathBuf,
        /// Base configuration applied to every combination.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Verify the polynomial certificates by sampling.
    Verify {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        band: f64,
        /// Write violations as line-delimited text.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Apply the region inequalities with the printed (flipped) sign,
        /// for comparison.
        #[arg(long, default_value_t = false)]
        paper_sign: bool,
        /// Certificate coefficient table (defaults to the built-in one).
        #[arg(long)]
        certificates: Option<PathBuf>,
        /// Optional scenario config supplying parameter overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the safety filter with and without the convergence row and
    /// report both recovery times.
    CompareClf {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_metrics(label: &str, m: &Metrics) {
    let recovery = m
        .recovery_time
        .map_or("not-recovered".to_string(), |t| format!("{t:.4} s"));
    println!(
        "{label}: max_overshoot = {:.4} p.u., max_dv = {:.4} p.u., int_dv = {:.5} p.u.s, recovery = {recovery}, stable = {}",
        m.max_overshoot, m.max_dv, m.int_dv, m.stable
    );
}

fn run_cmd(config: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&config)?;
    let (trace, metrics) = run_scenario(&cfg)?;
    if let Some(path) = out {
        emit_trace(&trace, &path)?;
        println!("trace written to {} ({} records)", path.display(), trace.records.len());
    }
    print_metrics("metrics", &metrics);
    Ok(())
}

fn matrix_cmd(out_dir: PathBuf, config: Option<PathBuf>) -> Result<()> {
    let base = match config {
        Some(path) => load_config(&path)?,
        None => ScenarioConfig::default(),
    };
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let grids = [GridKind::HighInertia, GridKind::LowInertia];
    let gfms = [GfmKind::Vsm, GfmKind::Edpc];
    let clcs = [
        ClcKind::None,
        ClcKind::Scc,
        ClcKind::Rlcc,
        ClcKind::Avi,
        ClcKind::Sf,
        ClcKind::SfNoClf,
    ];
    let mut failures = 0;
    for grid in grids {
        for gfm in gfms {
            for clc in clcs {
                let mut cfg = base;
                cfg.grid = grid;
                cfg.gfm = gfm;
                cfg.clc = clc;
                let grid_label = match grid {
                    GridKind::HighInertia => "high_inertia",
                    GridKind::LowInertia => "low_inertia",
                };
                let gfm_label = match gfm {
                    GfmKind::Vsm => "vsm",
                    GfmKind::Edpc => "edpc",
                };
                let name = format!("{grid_label}_{gfm_label}_{}", clc.label());
                match run_scenario(&cfg) {
                    Ok((trace, metrics)) => {
                        let path = out_dir.join(format!("{name}.csv"));
                        emit_trace(&trace, &path)?;
                        print_metrics(&name, &metrics);
                    }
                    Err(e) => {
                        failures += 1;
                        eprintln!("{name}: FAILED: {e}");
                    }
                }
            }
        }
    }
    if failures > 0 {
        bail!("{failures} scenario(s) failed");
    }
    Ok(())
}

fn verify_cmd(
    samples: usize,
    seed: u64,
    band: f64,
    report: Option<PathBuf>,
    paper_sign: bool,
    certificates: Option<PathBuf>,
    config: Option<PathBuf>,
) -> Result<()> {
    let cfg = match config {
        Some(path) => load_config(&path)?,
        None => ScenarioConfig::default(),
    };
    let certs = match certificates {
        Some(path) => CertificateSet::load(&path)?,
        None => CertificateSet::builtin(),
    };
    let region = OperationalRegion {
        paper_sign,
        ..cfg.region()
    };
    let verifier = Verifier::new(certs, cfg.filter_params(), cfg.certificate_model(), region);

    let reports: Vec<VerificationReport> = vec![
        verifier.check_cbf_boundary(samples, seed, band),
        verifier.check_clf_region(samples, seed, band),
        verifier.check_nominal_invariance(samples, seed, band),
        verifier.check_containment(samples, seed),
    ];
    let mut all_pass = true;
    let mut lines = Vec::new();
    for r in &reports {
        println!("{}", r.summary());
        lines.push(format!("# {}", r.summary()));
        for v in &r.violations {
            lines.push(format!(
                "{} point={:?} residual={:.6e}",
                v.condition, v.point, v.residual
            ));
        }
        all_pass &= r.pass();
    }

    // worst-case phase-current bound on the reference grid
    for (i_hat, i_0) in [(1.0, 0.0), (1.0, 0.3), (0.7, 0.6)] {
        let max_amp = check_abc_bound(720, 720, i_hat, i_0);
        let ok = (max_amp - (i_hat + i_0)).abs() <= 1e-4;
        println!(
            "abc_bound i_hat={i_hat} i_0={i_0} max={max_amp:.6} {}",
            if ok { "PASS" } else { "FAIL" }
        );
        lines.push(format!("# abc_bound i_hat={i_hat} i_0={i_0} max={max_amp:.6}"));
        all_pass &= ok;
    }

    if let Some(path) = report {
        std::fs::write(&path, lines.join("\n") + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        println!("report written to {}", path.display());
    }
    if !all_pass {
        bail!("verification reported violations");
    }
    Ok(())
}

fn compare_clf_cmd(config: PathBuf) -> Result<()> {
    let cfg = load_config(&config)?;
    let cmp = compare_clf(&cfg)?;
    print_metrics("sf      ", &cmp.with_clf.1);
    print_metrics("sf_noclf", &cmp.without_clf.1);
    match (cmp.with_clf.1.recovery_time, cmp.without_clf.1.recovery_time) {
        (Some(a), Some(b)) => println!(
            "recovery ordering: sf {} sf_noclf ({a:.4} s vs {b:.4} s)",
            if a <= b { "<=" } else { ">" }
        ),
        _ => println!("recovery ordering: undetermined (a run did not recover)"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => run_cmd(config, out),
        Command::Matrix { out_dir, config } => matrix_cmd(out_dir, config),
        Command::Verify {
            samples,
            seed,
            band,
            report,
            paper_sign,
            certificates,
            config,
        } => verify_cmd(samples, seed, band, report, paper_sign, certificates, config),
        Command::CompareClf { config } => compare_clf_cmd(config),
    }
}
