//! Command-line driver: synthesize captures, run the recovery pipeline in
//! stages, and inspect the resulting maps.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use polarfield::io::preview::{false_color, map_stats};
use polarfield::io::{
    read_manifest, read_pfm, run_pipeline, RunOptions, Stage, StageSet,
};
use polarfield::optimize::{Backend, ProblemKind};

#[derive(Parser)]
#[command(
    name = "polarfield",
    version,
    about = "Spatially-varying reflectance recovery from polarized OLAT captures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Capture manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for dumps and the material bundle.
    #[arg(long)]
    out: PathBuf,
    /// Solver override, repeatable: <kind>=<backend>, e.g. sigma=gauss-newton.
    #[arg(long = "solver", value_name = "KIND=BACKEND")]
    solvers: Vec<String>,
    /// Overexposure gap threshold override.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Overexposure removal iterations override.
    #[arg(long)]
    iterations: Option<usize>,
    /// Worker thread count (results are identical for any value).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write shadow-compensated albedos rho / max(tau, FLOOR).
    #[arg(long, value_name = "FLOOR")]
    shadow_floor: Option<f64>,
    /// Dump the overexposure removed-sample masks.
    #[arg(long)]
    dump_masks: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic capture described by the manifest's [synthetic] block.
    Synth {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed override (defaults to the manifest's seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full pipeline (or a contiguous stage range).
    Run {
        #[command(flatten)]
        common: PipelineArgs,
        /// Comma list from separate,preprocess,estimate,optimize.
        #[arg(long)]
        stages: Option<String>,
    },
    /// Separate and clean only (stages separate,preprocess).
    Preprocess {
        #[command(flatten)]
        common: PipelineArgs,
    },
    /// Fit from intermediate dumps (stages estimate,optimize).
    Fit {
        #[command(flatten)]
        common: PipelineArgs,
    },
    /// Print statistics for a map; optionally write a false-color PNG preview.
    Inspect {
        /// A .pfm map produced by the pipeline.
        #[arg(long)]
        map: PathBuf,
        /// Write an 8-bit false-color preview here.
        #[arg(long)]
        png: Option<PathBuf>,
    },
}

fn parse_solver_overrides(specs: &[String]) -> Result<Vec<(ProblemKind, Backend)>> {
    let mut out = Vec::new();
    for spec in specs {
        let Some((kind_s, backend_s)) = spec.split_once('=') else {
            bail!("solver override {spec:?} is not of the form <kind>=<backend>");
        };
        let kind = match kind_s.trim() {
            "diffuse-normal" => ProblemKind::DiffuseNormal,
            "specular-normal" => ProblemKind::SpecularNormal,
            "sigma" => ProblemKind::Sigma,
            "diffuse-albedo" => ProblemKind::DiffuseAlbedo,
            "specular-albedo" => ProblemKind::SpecularAlbedo,
            other => bail!(
                "unknown problem kind {other:?}; expected diffuse-normal, specular-normal, sigma, diffuse-albedo or specular-albedo"
            ),
        };
        let backend = Backend::parse(backend_s.trim())
            .with_context(|| format!("unknown backend {backend_s:?}"))?;
        out.push((kind, backend));
    }
    Ok(out)
}

fn run_stages(common: &PipelineArgs, stages: StageSet) -> Result<()> {
    let mut manifest = read_manifest(&common.manifest)
        .with_context(|| format!("reading manifest {}", common.manifest.display()))?;
    for (kind, backend) in parse_solver_overrides(&common.solvers)? {
        manifest.solvers.set_backend(kind, backend);
    }
    if let Some(eps) = common.epsilon {
        if eps <= 0.0 {
            bail!("--epsilon must be positive");
        }
        manifest.epsilon = eps;
    }
    if let Some(m) = common.iterations {
        if m == 0 {
            bail!("--iterations must be at least 1");
        }
        manifest.iterations = m;
    }
    let options = RunOptions {
        threads: common.threads,
        dump_removed_masks: common.dump_masks,
        shadow_floor: common.shadow_floor,
    };
    let output = run_pipeline(&manifest, &stages, &common.out, &options)?;
    for report in &output.reports {
        let kind = report
            .records
            .first()
            .map(|r| r.kind.name())
            .unwrap_or("batch");
        let solved = report.records.iter().filter(|r| r.output.is_some()).count();
        eprintln!(
            "{kind}: {solved}/{} solved, mean gradient norm {:.3e}, wall {:?}",
            report.records.len(),
            report.mean_gradient_norm(),
            report.wall
        );
    }
    println!("wrote {}", common.out.display());
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { manifest, out, seed } => {
            let m = read_manifest(&manifest)
                .with_context(|| format!("reading manifest {}", manifest.display()))?;
            polarfield::io::pipeline::synthesize_capture(&m, &out, seed)?;
            println!("wrote {}", out.join("manifest.toml").display());
            Ok(())
        }
        Command::Run { common, stages } => {
            let stages = match stages {
                Some(spec) => StageSet::parse(&spec)?,
                None => StageSet::all(),
            };
            run_stages(&common, stages)
        }
        Command::Preprocess { common } => {
            run_stages(&common, StageSet::new(vec![Stage::Separate, Stage::Preprocess])?)
        }
        Command::Fit { common } => {
            run_stages(&common, StageSet::new(vec![Stage::Estimate, Stage::Optimize])?)
        }
        Command::Inspect { map, png } => {
            let img = read_pfm(&map)?;
            let stats = map_stats(&img);
            println!(
                "{}: {}x{} [{} channel{}]",
                map.display(),
                stats.width,
                stats.height,
                stats.channels,
                if stats.channels == 1 { "" } else { "s" }
            );
            for c in 0..stats.channels {
                println!(
                    "  channel {c}: min {:.6} max {:.6} mean {:.6}",
                    stats.min[c], stats.max[c], stats.mean[c]
                );
            }
            if stats.channels == 3 {
                println!("  unit-norm violations: {}", stats.unit_norm_violations);
            }
            if stats.non_finite > 0 {
                println!("  non-finite samples: {}", stats.non_finite);
            }
            if let Some(png_path) = png {
                let rgb = false_color(&img);
                image::save_buffer(
                    &png_path,
                    &rgb,
                    stats.width as u32,
                    stats.height as u32,
                    image::ColorType::Rgb8,
                )
                .with_context(|| format!("writing {}", png_path.display()))?;
                println!("  preview: {}", png_path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
