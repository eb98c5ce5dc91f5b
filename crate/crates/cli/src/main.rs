use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dgnet::diagnostics::CountingAllocator;
use dgnet::experiment::{assemble_for, build_space, run_experiment, run_single, ExperimentConfig};
use dgnet::heatmap::emit_heatmap;
use dgnet::oracle::{manufactured_problem, solve_fe_minimizer};
use dgnet::resnet::{forward, ResNetParams};

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(name = "dgnet", version, about = "DG finite-element energy training of residual networks for Poisson problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a mesh as text: "V T E", vertices, triangles, edges.
    Mesh {
        #[arg(long, default_value = "sine")]
        problem: String,
        /// Subdivisions per side (unit square) or refinement level (L-shape).
        #[arg(long, default_value_t = 4)]
        mesh: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Assemble the quadratic energy and dump A (coordinate text), b and c.
    Assemble {
        #[arg(long, default_value = "sine")]
        problem: String,
        #[arg(long, default_value_t = 4)]
        mesh: usize,
        #[arg(long, default_value_t = 2)]
        precision: usize,
        #[arg(long, default_value_t = 60.0)]
        alpha: f64,
        /// Drop the consistency and interior penalty terms.
        #[arg(long)]
        no_jumps: bool,
        /// Directory for a.coo, b.txt and c.txt; a summary is printed otherwise.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also solve for the minimiser and report its energy.
        #[arg(long)]
        solve: bool,
    },
    /// Train one network (first mesh, precision, mode and seed of the config).
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the final parameters here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run a full experiment config.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the built-in property checks.
    Verify {
        /// Larger samples and meshes.
        #[arg(long)]
        thorough: bool,
    },
    /// Write an SVG of |u_θ − u| for a checkpoint, or |U − u| for the FE minimiser.
    Heatmap {
        #[arg(long, default_value = "sine")]
        problem: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Mesh and precision of the FE minimiser when no checkpoint is given.
        #[arg(long, default_value_t = 8)]
        mesh: usize,
        #[arg(long, default_value_t = 2)]
        precision: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Config file plus per-key overrides; flag names are the config keys.
#[derive(Args)]
struct ConfigArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    meshes: Option<String>,
    #[arg(long)]
    precisions: Option<String>,
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    precision_bits: Option<String>,
    #[arg(long)]
    component_every: Option<String>,
    #[arg(long)]
    timing_window: Option<String>,
    #[arg(long)]
    heatmap: Option<String>,
    #[arg(long)]
    oracle_check: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("name", &self.name),
            ("problem", &self.problem),
            ("meshes", &self.meshes),
            ("precisions", &self.precisions),
            ("modes", &self.modes),
            ("seeds", &self.seeds),
            ("blocks", &self.blocks),
            ("width", &self.width),
            ("epochs", &self.epochs),
            ("learning_rate", &self.learning_rate),
            ("alpha", &self.alpha),
            ("precision_bits", &self.precision_bits),
            ("component_every", &self.component_every),
            ("timing_window", &self.timing_window),
            ("heatmap", &self.heatmap),
            ("oracle_check", &self.oracle_check),
            ("output", &self.output),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for s in &self.sets {
            let (k, v) = s.split_once('=').with_context(|| format!("--set expects key=value, got {s:?}"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_assemble(
    problem: &str,
    mesh: usize,
    precision: usize,
    alpha: f64,
    no_jumps: bool,
    output: Option<&Path>,
    solve: bool,
) -> Result<()> {
    let problem = manufactured_problem(problem)?;
    let space = build_space(&problem, mesh)?;
    let form = assemble_for(&problem, &space, precision, alpha, !no_jumps)?;
    if let Some(dir) = output {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("a.coo"), form.a.to_coordinate_text())?;
        let mut b = String::new();
        for v in &form.b {
            writeln!(b, "{v:?}")?;
        }
        std::fs::write(dir.join("b.txt"), b)?;
        std::fs::write(dir.join("c.txt"), format!("{:?}\n", form.c))?;
    }
    println!(
        "dofs {} cells {} nnz {} c {:e} norm_inf {:e}",
        form.num_dofs(),
        form.num_elements,
        form.a.nnz(),
        form.c,
        form.a.norm_inf()
    );
    if solve {
        let sol = solve_fe_minimizer(&form)?;
        println!("minimum {:e} residual {:e} iterations {}", sol.energy, sol.residual, sol.iterations);
    }
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<()> {
    let problem = manufactured_problem(&cfg.problem)?;
    let mode = cfg.modes[0];
    if !mode.is_trained() {
        bail!("train needs a trained mode (fe, fe_nojumps or collocation)");
    }
    let space = build_space(&problem, cfg.meshes[0])?;
    let report = run_single(&problem, &space, cfg.precisions[0], mode, cfg.seeds[0], cfg)?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out)?;
    let csv = out.join("run.csv");
    std::fs::write(&csv, report.to_csv())?;
    if let Some(p) = checkpoint {
        std::fs::write(p, report.final_params.to_checkpoint())?;
    }
    if cfg.heatmap {
        let exact = problem.exact_u.clone().context("problem has no exact solution")?;
        let params = &report.final_params;
        let sampler = |p: &[[f64; 2]]| -> dgnet::Result<Vec<f64>> {
            Ok(forward(params, p)?.iter().zip(p).map(|(v, q)| (v - exact(*q)).abs()).collect())
        };
        emit_heatmap(&sampler, problem.domain, &out.join("heatmap.svg"), &format!("|u_θ − u|, {}", mode.name()))?;
    }
    println!(
        "mode {} epochs {} final_loss {:e} l2_error {:e} mean_epoch_ms {:.3}",
        mode.name(),
        report.epochs(),
        report.final_loss,
        report.l2_error.unwrap_or(f64::NAN),
        report.mean_epoch_ms(cfg.timing_window.0, cfg.timing_window.1)
    );
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let summary = run_experiment(cfg)?;
    print!("{}", summary.summary_csv());
    for r in &summary.runs {
        if let Err(e) = &r.outcome {
            eprintln!("run {} mesh {} precision {} seed {:?} failed: {e}", r.mode.name(), r.mesh, r.precision, r.seed);
        }
    }
    if summary.all_failed() {
        eprintln!("every run failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(thorough: bool) -> Result<ExitCode> {
    let mut failed = 0;
    for c in dgnet::verify::run_all(thorough)? {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_heatmap(problem: &str, checkpoint: Option<&Path>, mesh: usize, precision: usize, output: &Path) -> Result<()> {
    let problem = manufactured_problem(problem)?;
    let exact = problem.exact_u.clone().context("problem has no exact solution")?;
    let map = match checkpoint {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let params = ResNetParams::<f64>::from_checkpoint(&text)?;
            let sampler = |p: &[[f64; 2]]| -> dgnet::Result<Vec<f64>> {
                Ok(forward(&params, p)?.iter().zip(p).map(|(v, q)| (v - exact(*q)).abs()).collect())
            };
            emit_heatmap(&sampler, problem.domain, output, "|u_θ − u|")?
        }
        None => {
            let space = build_space(&problem, mesh)?;
            let sol = solve_fe_minimizer(&assemble_for(&problem, &space, precision, 60.0, true)?)?;
            let sampler = |p: &[[f64; 2]]| -> dgnet::Result<Vec<f64>> {
                p.iter().map(|q| Ok((space.evaluate(&sol.u, *q)? - exact(*q)).abs())).collect()
            };
            emit_heatmap(&sampler, problem.domain, output, "|U − u|")?
        }
    };
    let peak = map.argmax().unwrap_or([f64::NAN; 2]);
    println!("min {:e} max {:e} at ({:.4}, {:.4})", map.min, map.max, peak[0], peak[1]);
    Ok(())
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Mesh { problem, mesh, output } => {
            let problem = manufactured_problem(&problem)?;
            let space = build_space(&problem, mesh)?;
            write_or_print(output.as_deref(), &space.mesh().to_text())?;
        }
        Command::Assemble { problem, mesh, precision, alpha, no_jumps, output, solve } => {
            cmd_assemble(&problem, mesh, precision, alpha, no_jumps, output.as_deref(), solve)?
        }
        Command::Train { cfg, checkpoint } => cmd_train(&cfg.build()?, checkpoint.as_deref())?,
        Command::Sweep { cfg } => return cmd_sweep(&cfg.build()?),
        Command::Verify { thorough } => return cmd_verify(thorough),
        Command::Heatmap { problem, checkpoint, mesh, precision, output } => {
            cmd_heatmap(&problem, checkpoint.as_deref(), mesh, precision, &output)?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
