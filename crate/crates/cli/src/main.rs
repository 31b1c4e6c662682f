//! `salr` — seed-point detection for clumped convex objects and scatter
//! clusters via SALR particle dynamics.
//!
//! Exit codes: 0 success, 2 input error, 3 when every simulated replicate
//! failed to converge (results are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use salr_core::cluster::SeedPoint;
use salr_core::io;
use salr_core::pipeline::{
    benchmark, detect_image, detect_scatter, run_baseline_dt_maxima, DetectionResult, EvalReport,
    PipelineConfig, ThresholdMode,
};
use salr_core::potential::{solve_interaction_params, InteractionSpec};
use salr_core::{fixtures, plot};

#[derive(Parser)]
#[command(
    name = "salr",
    version,
    about = "Seed-point detection by SALR particle clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate seed points of clumped objects in a grayscale image (PGM/PNG).
    DetectImage {
        image: PathBuf,
        /// Flat key-value config file; defaults follow the parameter table.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds CSV output (object_id, x0, x1, support).
        #[arg(long, default_value = "seeds.csv")]
        out: PathBuf,
        /// SVG overlay (outlines, particles, seeds, truth).
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Full result (seeds + diagnostics + config echo) as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Truth CSV, drawn on the overlay plot.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Override the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Locate cluster centers in n-D scatter points (headered CSV).
    ClusterPoints {
        points: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "seeds.csv")]
        out: PathBuf,
        /// SVG projection onto the first two axes.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score detected seeds against truth: F1(δr) curve and FD histogram.
    Benchmark {
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Matching radii: "lo:hi", "lo:step:hi" or "a,b,c".
        #[arg(long, default_value = "1:10")]
        delta_r: String,
        /// Baseline method to evaluate alongside: "dt" (distance-transform
        /// maxima; needs --image).
        #[arg(long)]
        baseline: Option<String>,
        /// Image used to rebuild the mask for the dt baseline.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Config for the mask rebuild (threshold mode etc.).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report tables: writes <stem>_f1.csv and <stem>_fd.csv.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit the interaction parameters for (d0, r0, ra) and print JSON.
    SolvePotential {
        #[arg(long, allow_hyphen_values = true)]
        d0: f64,
        #[arg(long)]
        r0: f64,
        #[arg(long)]
        ra: f64,
    },
    /// Write a synthetic corpus: disks | dumbbell | blobs3d | arm2d.
    GenFixtures { kind: String, out_dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig<f64>> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(PipelineConfig::from_kv_text(&text)?)
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn run() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::DetectImage {
            image,
            config,
            out,
            plot: plot_path,
            json,
            truth,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            let field = io::read_image::<f64>(&image)?;
            let result = detect_image(&field, &cfg)?;
            let seeds = result.all_seeds();
            io::write_seeds_csv(&out, &seeds)?;
            println!(
                "{} objects, {} seeds -> {}",
                result.objects.len(),
                seeds.len(),
                out.display()
            );
            if let Some(p) = json {
                write_json(&p, &result)?;
            }
            if let Some(p) = plot_path {
                let truth_set = truth
                    .as_deref()
                    .map(io::read_truth_csv::<f64>)
                    .transpose()?;
                plot::svg_image_overlay(&p, field.dims(), &result, truth_set.as_ref())?;
            }
            Ok(exit_for(&result))
        }
        Command::ClusterPoints {
            points,
            config,
            out,
            plot: plot_path,
            json,
            truth,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            let pts = io::read_points_csv::<f64>(&points)?;
            let det = detect_scatter(&pts, &cfg)?;
            let seeds = det.result.all_seeds();
            io::write_seeds_csv(&out, &seeds)?;
            println!("{} seeds -> {}", seeds.len(), out.display());
            if let Some(p) = json {
                write_json(&p, &det.result)?;
            }
            if let Some(p) = plot_path {
                let truth_set = truth
                    .as_deref()
                    .map(io::read_truth_csv::<f64>)
                    .transpose()?;
                plot::svg_scatter_overlay(&p, &pts, &det.result, truth_set.as_ref())?;
            }
            Ok(exit_for(&det.result))
        }
        Command::Benchmark {
            seeds,
            truth,
            delta_r,
            baseline,
            image,
            config,
            out,
            csv,
        } => {
            let seed_list = io::read_seeds_csv::<f64>(&seeds)?;
            let truth_set = io::read_truth_csv::<f64>(&truth)?;
            let deltas = parse_delta_list(&delta_r)?;
            let baseline_seeds = match baseline.as_deref() {
                None => None,
                Some("dt") => {
                    let image = image.ok_or_else(|| {
                        anyhow::anyhow!("--baseline dt needs --image to rebuild the mask")
                    })?;
                    let cfg = load_config(config.as_deref())?;
                    Some(dt_baseline_seeds(&image, &cfg)?)
                }
                Some(other) => anyhow::bail!("unknown baseline {other:?} (expected \"dt\")"),
            };
            let report = benchmark(
                &seed_list,
                &truth_set,
                &deltas,
                baseline_seeds.as_deref(),
                None,
            )?;
            print_report(&report);
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            if let Some(p) = csv {
                write_report_csv(&p, &report)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SolvePotential { d0, r0, ra } => {
            let spec = InteractionSpec::new(d0, r0, ra)?;
            let params = solve_interaction_params(&spec)?;
            let json = serde_json::json!({
                "d0": d0,
                "r0": r0,
                "ra": ra,
                "A": params.a,
                "mu": params.mu,
                "sigma": params.sigma,
                "epsilon": params.epsilon,
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::GenFixtures { kind, out_dir } => {
            gen_fixtures(&kind, &out_dir)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_for(result: &DetectionResult<f64>) -> ExitCode {
    if result.all_replicates_unconverged() {
        eprintln!("warning: no replicate converged; seeds are best-effort");
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// "lo:hi" (unit step), "lo:step:hi", or comma-separated values.
fn parse_delta_list(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [single] => single
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()?,
        [lo, hi] => step_range(lo.parse()?, 1.0, hi.parse()?),
        [lo, step, hi] => step_range(lo.parse()?, step.parse()?, hi.parse()?),
        _ => anyhow::bail!("bad --delta-r {text:?}"),
    };
    if values.is_empty() || values.iter().any(|&v| v <= 0.0) {
        anyhow::bail!("--delta-r values must be positive");
    }
    Ok(values)
}

fn step_range(lo: f64, step: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut v = lo;
    while v <= hi + 1e-9 {
        out.push(v);
        v += step;
    }
    out
}

/// Rebuild the image mask exactly as detect-image does, then take the
/// distance-transform maxima per object.
fn dt_baseline_seeds(
    image: &Path,
    cfg: &PipelineConfig<f64>,
) -> anyhow::Result<Vec<SeedPoint<f64>>> {
    use salr_core::field::{
        connected_components, gaussian_smooth, log_otsu_threshold, multiscale_log_filter,
        BinaryMask,
    };
    let field = io::read_image::<f64>(image)?;
    let blurred = gaussian_smooth(&field, cfg.blur_sigma)?;
    let mut mask = match cfg.threshold_mode {
        ThresholdMode::LogOtsu => log_otsu_threshold(&blurred)?,
        ThresholdMode::MLogFixed => {
            let response = multiscale_log_filter(&blurred, &cfg.mlog_sigmas)?;
            BinaryMask::from_field(&response, |v| v > cfg.mlog_threshold)
        }
    };
    if cfg.fill_holes {
        mask = mask.fill_holes();
    }
    if cfg.min_object_cells > 1 {
        let regions = connected_components(&mask);
        for label in 1..=regions.count() as u32 {
            let cells = regions.region_cells(label);
            if cells.len() < cfg.min_object_cells {
                for lin in cells {
                    mask.bits_mut()[lin] = false;
                }
            }
        }
    }
    Ok(run_baseline_dt_maxima(&mask)?)
}

fn print_report(report: &EvalReport<f64>) {
    println!("F1 by matching radius:");
    for (dr, f1) in &report.method.f1_curve {
        print!("  dr {dr:5.2}: {f1:.4}");
        if let Some(base) = &report.baseline {
            if let Some((_, bf1)) = base
                .f1_curve
                .iter()
                .find(|(bdr, _)| (bdr - dr).abs() < 1e-9)
            {
                print!("   (dt baseline {bf1:.4})");
            }
        }
        println!();
    }
    println!("FD at dr = {}:", report.fd_delta_r);
    for (dn, frac) in &report.method.fd {
        print!("  dN {dn:+}: {frac:.4}");
        if let Some(base) = &report.baseline {
            if let Some(bfrac) = base.fd.get(dn) {
                print!("   (dt baseline {bfrac:.4})");
            }
        }
        println!();
    }
}

fn write_report_csv(path: &Path, report: &EvalReport<f64>) -> anyhow::Result<()> {
    let stem = path.with_extension("");
    let stem = stem.to_string_lossy();
    let mut f1 = String::from("delta_r,f1_salr");
    if report.baseline.is_some() {
        f1.push_str(",f1_dt");
    }
    f1.push('\n');
    for (i, (dr, v)) in report.method.f1_curve.iter().enumerate() {
        f1.push_str(&format!("{dr},{v}"));
        if let Some(base) = &report.baseline {
            f1.push_str(&format!(",{}", base.f1_curve[i].1));
        }
        f1.push('\n');
    }
    std::fs::write(format!("{stem}_f1.csv"), f1)?;

    let mut fd = String::from("delta_n,fd_salr");
    if report.baseline.is_some() {
        fd.push_str(",fd_dt");
    }
    fd.push('\n');
    for (dn, v) in &report.method.fd {
        fd.push_str(&format!("{dn},{v}"));
        if let Some(base) = &report.baseline {
            fd.push_str(&format!(",{}", base.fd.get(dn).copied().unwrap_or(0.0)));
        }
        fd.push('\n');
    }
    std::fs::write(format!("{stem}_fd.csv"), fd)?;
    Ok(())
}

fn gen_fixtures(kind: &str, out_dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    match kind {
        "disks" => {
            let fixture = fixtures::two_disks::<f64>();
            io::write_pgm(&out_dir.join("image.pgm"), &fixture.image)?;
            io::write_truth_csv(&out_dir.join("truth.csv"), &fixture.truth)?;
            std::fs::write(out_dir.join("config.cfg"), fixture.config.to_kv_text())?;
        }
        "dumbbell" => {
            let fixture = fixtures::dumbbell::<f64>();
            io::write_pgm(&out_dir.join("image.pgm"), &fixture.image)?;
            io::write_truth_csv(&out_dir.join("truth.csv"), &fixture.truth)?;
            std::fs::write(out_dir.join("config.cfg"), fixture.config.to_kv_text())?;
        }
        "blobs3d" => {
            let fixture = fixtures::seven_blobs_3d::<f64>(7);
            io::write_points_csv(&out_dir.join("points.csv"), &fixture.points)?;
            io::write_truth_csv(&out_dir.join("truth.csv"), &fixture.truth)?;
            std::fs::write(out_dir.join("config.cfg"), fixture.config.to_kv_text())?;
        }
        "arm2d" => {
            let fixture = fixtures::core_with_arm_2d::<f64>(42);
            io::write_points_csv(&out_dir.join("points.csv"), &fixture.points)?;
            io::write_truth_csv(&out_dir.join("truth.csv"), &fixture.truth)?;
            std::fs::write(out_dir.join("config.cfg"), fixture.config.to_kv_text())?;
        }
        other => anyhow::bail!("unknown fixture kind {other:?} (disks|dumbbell|blobs3d|arm2d)"),
    }
    println!("wrote {kind} fixture to {}", out_dir.display());
    Ok(())
}
