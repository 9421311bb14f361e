use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bevsplat::fit::{fit_preset, synth_scene, FitProblem, Preset};
use bevsplat::io::{self, FormatError};
use bevsplat::{gradcheck, preview_pca, render, render_naive, RenderConfig};
use clap::{Parser, Subcommand};

/// Differentiable orthographic gaussian splatting into BeV feature grids.
#[derive(Parser)]
#[command(name = "bevsplat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene file into a PFM feature grid.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// RenderConfig JSON; missing fields take their defaults.
        #[arg(long)]
        cfg: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a PCA false-color PPM.
        #[arg(long)]
        preview: Option<PathBuf>,
        /// Use the reference renderer instead of the tiled one.
        #[arg(long)]
        naive: bool,
    },
    /// Fit a synthetic preset by gradient descent.
    Fit {
        #[arg(long)]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long = "lambda-depth", default_value_t = 0.05)]
        lambda_depth: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run every finite-difference suite; exits 0 iff all pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Write a preset's target mask and camera calibration.
    Synth {
        #[arg(long)]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "out-mask")]
        out_mask: PathBuf,
        #[arg(long = "out-calib")]
        out_calib: PathBuf,
    },
    /// Check a scene file against every gaussian invariant.
    Validate {
        #[arg(long)]
        scene: PathBuf,
    },
}

fn load_cfg(path: Option<&Path>) -> Result<RenderConfig, Box<dyn Error>> {
    let cfg = match path {
        Some(p) => serde_json::from_slice(&io::read_file(p)?).map_err(|e| format!("{}: {e}", p.display()))?,
        None => RenderConfig::default(),
    };
    cfg.check()?;
    Ok(cfg)
}

fn run(command: Command) -> Result<bool, Box<dyn Error>> {
    match command {
        Command::Render {
            scene,
            cfg,
            out,
            preview,
            naive,
        } => {
            let loaded = io::load_scene(&scene).map_err(|e| with_path(&scene, e))?;
            let cfg = load_cfg(cfg.as_deref())?;
            let grid = if naive {
                render_naive(&loaded, &cfg)
            } else {
                render(&loaded, &cfg)
            };
            io::save_grid_pfm(&out, &grid)?;
            if let Some(p) = preview {
                io::write_atomic(&p, &preview_pca(&grid))?;
            }
            let (h, w, c) = grid.shape();
            println!("rendered {} gaussians into {h}x{w}x{c}", loaded.len());
        }
        Command::Fit {
            preset,
            seed,
            steps,
            lr,
            lambda_depth,
            out,
            report,
        } => {
            let mut problem = FitProblem::from_preset(preset, seed);
            problem.optimizer.steps = steps;
            problem.optimizer.learning_rate = lr;
            problem.weights.depth = lambda_depth;
            let outcome = fit_preset(&problem, Some(preset))?;
            io::save_scene(&out, &outcome.scene)?;
            let mut text = serde_json::to_string_pretty(&outcome.report)?;
            text.push('\n');
            io::write_atomic(&report, text.as_bytes())?;
            let r = &outcome.report;
            println!("final loss {:.6} iou {:.6}", r.final_loss, r.final_iou);
            eprintln!("fit took {:.2} s", r.wall_time_s);
        }
        Command::Gradcheck { seed, tol } => {
            if !(tol > 0.0) {
                return Err("--tol must be positive".into());
            }
            let mut ok = true;
            for suite in gradcheck::run_all(seed, tol) {
                for c in &suite.checks {
                    let status = if c.max_rel_err <= suite.tolerance { "ok" } else { "FAIL" };
                    println!(
                        "{status:4} {:10} {} ({} entries): max rel err {:.3e} (tol {:.0e})",
                        suite.suite, c.name, c.entries, c.max_rel_err, suite.tolerance
                    );
                    if status != "ok" {
                        println!("     worst at {}", c.worst);
                    }
                }
                ok &= suite.passed();
            }
            return Ok(ok);
        }
        Command::Synth {
            preset,
            seed,
            out_mask,
            out_calib,
        } => {
            let s = synth_scene(preset, seed);
            io::save_mask_pgm(&out_mask, &s.target_mask)?;
            io::save_calib(&out_calib, &s.calibs)?;
        }
        Command::Validate { scene } => match io::load_scene(&scene) {
            Ok(s) => println!("{}: {} gaussians, C = {}, valid", scene.display(), s.len(), s.feature_dim),
            Err(FormatError::ValidationFailed(violations)) => {
                for v in &violations {
                    println!("{}: {v}", scene.display());
                }
                return Ok(false);
            }
            Err(e) => return Err(with_path(&scene, e)),
        },
    }
    Ok(true)
}

/// Prefixes format errors that do not already carry the path.
fn with_path(path: &Path, e: FormatError) -> Box<dyn Error> {
    match e {
        FormatError::Io { .. } => e.into(),
        other => format!("{}: {other}", path.display()).into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
