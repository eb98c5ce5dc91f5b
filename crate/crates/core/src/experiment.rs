//! Config-driven experiment sweeps.
//!
//! A config is flat `key = value` text; `#` starts a comment. Keys:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `name` | `experiment` | label used in file names |
//! | `problem` | `sine` | `sine`, `lshape` or `quadratic` |
//! | `meshes` | `24` | subdivisions per side (unit square) or refinement levels (L-shape) |
//! | `precisions` | `2` | volume quadrature precisions |
//! | `modes` | `fe` | any of `fe`, `fe_nojumps`, `collocation`, `oracle` |
//! | `seeds` | `0, 1, 2` | network initialisation seeds |
//! | `blocks`, `width` | `2`, `64` | network shape |
//! | `epochs` | `20000` | training epochs |
//! | `learning_rate`, `beta1`, `beta2`, `eps` | `5e-3`, `0.9`, `0.999`, `1e-8` | Adam |
//! | `alpha` | `60` | penalty parameter |
//! | `precision_bits` | `64` | `32` or `64` |
//! | `component_every` | `100` | epochs between loss-component records |
//! | `timing_window` | `100, 1100` | epochs averaged for the epoch time |
//! | `heatmap` | `false` | write `|u_θ − u|` heatmaps for the first seed |
//! | `oracle_check` | `true` | solve the FE minimiser of every trained form |
//! | `output` | `results/<name>` | output directory |
//!
//! Lists are comma-separated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dg_energy::{assemble_energy_form, ProblemSpec, QuadraticEnergyForm};
use crate::diagnostics::ResourceUsage;
use crate::fe_space::{build_p2_space, FESpace};
use crate::heatmap::emit_heatmap;
use crate::mesh::{build_lshape_mesh, build_unit_square_mesh, DomainTag};
use crate::oracle::{l2_error, manufactured_problem, solve_fe_minimizer, FeFunction};
use crate::quadrature::triangle_rule;
use crate::resnet::{forward, init_params, NetDims};
use crate::training::{train_collocation, train_fe, RunReport, TrainConfig, TrainMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunMode {
    Fe,
    FeNoJumps,
    Collocation,
    Oracle,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Fe => "fe",
            RunMode::FeNoJumps => "fe_nojumps",
            RunMode::Collocation => "collocation",
            RunMode::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fe" => Ok(RunMode::Fe),
            "fe_nojumps" => Ok(RunMode::FeNoJumps),
            "collocation" => Ok(RunMode::Collocation),
            "oracle" => Ok(RunMode::Oracle),
            _ => Err(Error::UnknownName(format!(
                "mode {s:?} (expected fe, fe_nojumps, collocation or oracle)"
            ))),
        }
    }

    pub fn is_trained(self) -> bool {
        self != RunMode::Oracle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: String,
    pub meshes: Vec<usize>,
    pub precisions: Vec<usize>,
    pub modes: Vec<RunMode>,
    pub seeds: Vec<u64>,
    pub blocks: usize,
    pub width: usize,
    pub train: TrainConfig,
    pub timing_window: (usize, usize),
    pub heatmap: bool,
    pub oracle_check: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            problem: "sine".into(),
            meshes: vec![24],
            precisions: vec![2],
            modes: vec![RunMode::Fe],
            seeds: vec![0, 1, 2],
            blocks: 2,
            width: 64,
            train: TrainConfig::default(),
            timing_window: (100, 1100),
            heatmap: false,
            oracle_check: true,
            output: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse(format!("bad value {v:?} for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_num(key, t))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Parse(format!("{key} needs at least one value")));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse(format!("bad value {v:?} for {key} (expected true or false)"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value, got {raw:?}", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Set one key; the same names are used by the config file and the CLI.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "name" => self.name = value.to_string(),
            "problem" => self.problem = value.to_string(),
            "meshes" | "mesh" => self.meshes = parse_list(key, value)?,
            "precisions" | "precision" => self.precisions = parse_list(key, value)?,
            "modes" | "mode" => {
                self.modes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(RunMode::parse)
                    .collect::<Result<_>>()?
            }
            "seeds" | "seed" => self.seeds = parse_list(key, value)?,
            "blocks" => self.blocks = parse_num(key, value)?,
            "width" => self.width = parse_num(key, value)?,
            "epochs" => self.train.epochs = parse_num(key, value)?,
            "learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "beta1" => self.train.beta1 = parse_num(key, value)?,
            "beta2" => self.train.beta2 = parse_num(key, value)?,
            "eps" => self.train.eps = parse_num(key, value)?,
            "alpha" => self.train.alpha = parse_num(key, value)?,
            "precision_bits" => self.train.precision_bits = parse_num(key, value)?,
            "component_every" => self.train.component_every = parse_num(key, value)?,
            "timing_window" => {
                let w: Vec<usize> = parse_list(key, value)?;
                if w.len() != 2 || w[0] >= w[1] {
                    return Err(Error::Parse(format!("timing_window needs two increasing epochs, got {value:?}")));
                }
                self.timing_window = (w[0], w[1]);
            }
            "heatmap" => self.heatmap = parse_bool(key, value)?,
            "oracle_check" => self.oracle_check = parse_bool(key, value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::Parse(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        manufactured_problem(&self.problem)?;
        if self.modes.is_empty() {
            return Err(Error::InvalidArgument("no modes selected".into()));
        }
        if self.modes.iter().any(|m| m.is_trained()) {
            NetDims::new(2, self.width, self.blocks)?;
            if self.train.epochs == 0 {
                return Err(Error::InvalidArgument("epochs must be at least 1".into()));
            }
            if self.seeds.is_empty() {
                return Err(Error::InvalidArgument("no seeds given".into()));
            }
        }
        for &p in &self.precisions {
            triangle_rule(p)?;
        }
        if self.meshes.iter().any(|&m| m == 0) && self.problem != "lshape" {
            return Err(Error::InvalidArgument("unit-square meshes need at least 1 subdivision".into()));
        }
        self.train.validate()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("results").join(&self.name))
    }
}

/// Mesh and space for one mesh parameter of a problem.
pub fn build_space(problem: &ProblemSpec, mesh_param: usize) -> Result<FESpace> {
    let mesh = match problem.domain {
        DomainTag::UnitSquare => build_unit_square_mesh(mesh_param)?,
        DomainTag::LShape => build_lshape_mesh(mesh_param as u32)?,
    };
    Ok(build_p2_space(mesh))
}

pub fn assemble_for(
    problem: &ProblemSpec,
    space: &FESpace,
    precision: usize,
    alpha: f64,
    include_jump_terms: bool,
) -> Result<QuadraticEnergyForm> {
    let rule = triangle_rule(precision)?;
    let f = problem.source_nodal(space)?;
    let g = problem.trace_nodal(space)?;
    assemble_energy_form(space, &rule, alpha, include_jump_terms, &f, &g)
}

/// Result of one (mode, mesh, precision, seed) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub l2_error: f64,
    pub final_loss: f64,
    /// Minimum of the same quadratic form, when computed.
    pub oracle_energy: Option<f64>,
    pub mean_epoch_ms: Option<f64>,
    pub resources: ResourceUsage,
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub mode: RunMode,
    pub mesh: usize,
    pub precision: usize,
    pub seed: Option<u64>,
    pub outcome: std::result::Result<RunOutcome, String>,
}

/// One summary row: a (mode, mesh, precision) group aggregated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mode: RunMode,
    pub mesh: usize,
    pub cells: usize,
    pub dofs: usize,
    pub quad_points: usize,
    pub precision: usize,
    pub blocks: usize,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub median_l2_error: Option<f64>,
    pub median_final_loss: Option<f64>,
    pub median_epoch_ms: Option<f64>,
    pub median_allocations: Option<f64>,
    pub max_peak_live_bytes: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentSummary {
    pub fn all_failed(&self) -> bool {
        !self.runs.is_empty() && self.runs.iter().all(|r| r.outcome.is_err())
    }

    /// Deterministic columns only, so identical configs give identical bytes.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "mode,mesh,cells,dofs,quad_points,precision,blocks,runs_ok,runs_failed,median_l2_error,median_final_loss\n",
        );
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.mode.name(),
                r.mesh,
                r.cells,
                r.dofs,
                r.quad_points,
                r.precision,
                r.blocks,
                r.runs_ok,
                r.runs_failed,
                opt(r.median_l2_error),
                opt(r.median_final_loss)
            );
        }
        s
    }

    /// Wall-clock and memory columns, which vary between runs.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("mode,mesh,precision,median_epoch_ms,median_allocations,max_peak_live_bytes\n");
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.mode.name(),
                r.mesh,
                r.precision,
                opt(r.median_epoch_ms),
                opt(r.median_allocations),
                r.max_peak_live_bytes.map(|v| v.to_string()).unwrap_or_default()
            );
        }
        s
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Run one trained configuration and measure its error.
pub fn run_single(
    problem: &ProblemSpec,
    space: &FESpace,
    precision: usize,
    mode: RunMode,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<RunReport> {
    let dims = NetDims::new(2, cfg.width, cfg.blocks)?;
    let params = init_params(dims, seed);
    let mut train = TrainConfig { seed, volume_precision: precision, ..cfg.train.clone() };
    let mut report = match mode {
        RunMode::Fe | RunMode::FeNoJumps => {
            train.include_jump_terms = mode == RunMode::Fe;
            train.mode = TrainMode::FEInterp;
            let form = assemble_for(problem, space, precision, train.alpha, train.include_jump_terms)?;
            train_fe(&params, &form, space, &train)?
        }
        RunMode::Collocation => {
            train.mode = TrainMode::Collocation;
            train_collocation(&params, space, &triangle_rule(precision)?, problem, &train)?
        }
        RunMode::Oracle => return Err(Error::InvalidArgument("the oracle mode is not trained".into())),
    };
    report.l2_error = Some(l2_error(&report.final_params, problem, space.mesh(), 6)?);
    Ok(report)
}

/// Run every (mode, mesh, precision, seed) combination, writing per-run
/// CSVs, `summary.csv`, `timing.csv` and optional heatmaps under the output
/// directory. Sub-run failures are recorded in their rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let problem = manufactured_problem(&cfg.problem)?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(out.join("runs"))?;
    if cfg.heatmap {
        std::fs::create_dir_all(out.join("heatmaps"))?;
    }
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &mesh_param in &cfg.meshes {
        let space = build_space(&problem, mesh_param)?;
        for &precision in &cfg.precisions {
            let rule = triangle_rule(precision)?;
            let mut oracle_cache: Vec<(bool, Option<f64>)> = Vec::new();
            let mut oracle_energy = |jumps: bool| -> Option<f64> {
                if let Some((_, e)) = oracle_cache.iter().find(|(j, _)| *j == jumps) {
                    return *e;
                }
                let e = assemble_for(&problem, &space, precision, cfg.train.alpha, jumps)
                    .and_then(|f| solve_fe_minimizer(&f))
                    .map(|s| s.energy)
                    .ok();
                oracle_cache.push((jumps, e));
                e
            };
            for &mode in &cfg.modes {
                let tag = format!("{}_m{}_p{}", mode.name(), mesh_param, precision);
                let mut group = Vec::new();
                if mode == RunMode::Oracle {
                    let outcome = run_oracle(&problem, &space, precision, cfg, &out, &tag);
                    group.push(RunRecord { mode, mesh: mesh_param, precision, seed: None, outcome });
                } else {
                    for (i, &seed) in cfg.seeds.iter().enumerate() {
                        let outcome = run_single(&problem, &space, precision, mode, seed, cfg)
                            .and_then(|report| {
                                std::fs::write(out.join("runs").join(format!("{tag}_s{seed}.csv")), report.to_csv())?;
                                if cfg.heatmap && i == 0 {
                                    let exact = problem.exact_u.clone().expect("manufactured problems are exact");
                                    let params = &report.final_params;
                                    let sampler = |p: &[[f64; 2]]| -> Result<Vec<f64>> {
                                        Ok(forward(params, p)?.iter().zip(p).map(|(v, q)| (v - exact(*q)).abs()).collect())
                                    };
                                    let path = out.join("heatmaps").join(format!("{tag}.svg"));
                                    emit_heatmap(&sampler, problem.domain, &path, &format!("|u_θ − u|, {tag}"))?;
                                }
                                let oracle = match mode {
                                    RunMode::Collocation => None,
                                    _ if cfg.oracle_check => oracle_energy(mode == RunMode::Fe),
                                    _ => None,
                                };
                                Ok(RunOutcome {
                                    l2_error: report.l2_error.unwrap_or(f64::NAN),
                                    final_loss: report.final_loss,
                                    oracle_energy: oracle,
                                    mean_epoch_ms: Some(report.mean_epoch_ms(cfg.timing_window.0, cfg.timing_window.1)),
                                    resources: report.resources,
                                    report: Some(report),
                                })
                            })
                            .map_err(|e| e.to_string());
                        group.push(RunRecord { mode, mesh: mesh_param, precision, seed: Some(seed), outcome });
                    }
                }
                rows.push(summarise(mode, mesh_param, precision, &space, rule.len(), cfg.blocks, &group));
                runs.extend(group);
            }
        }
    }
    let summary = ExperimentSummary { rows, runs };
    std::fs::write(out.join("summary.csv"), summary.summary_csv())?;
    std::fs::write(out.join("timing.csv"), summary.timing_csv())?;
    Ok(summary)
}

fn run_oracle(
    problem: &ProblemSpec,
    space: &FESpace,
    precision: usize,
    cfg: &ExperimentConfig,
    out: &Path,
    tag: &str,
) -> std::result::Result<RunOutcome, String> {
    let go = || -> Result<RunOutcome> {
        let form = assemble_for(problem, space, precision, cfg.train.alpha, true)?;
        let sol = solve_fe_minimizer(&form)?;
        let l2 = l2_error(&FeFunction { space, u: &sol.u }, problem, space.mesh(), 6)?;
        if cfg.heatmap {
            let exact = problem.exact_u.clone().expect("manufactured problems are exact");
            let sampler = |p: &[[f64; 2]]| -> Result<Vec<f64>> {
                p.iter().map(|q| Ok((space.evaluate(&sol.u, *q)? - exact(*q)).abs())).collect()
            };
            emit_heatmap(&sampler, problem.domain, &out.join("heatmaps").join(format!("{tag}.svg")), &format!("|U − u|, {tag}"))?;
        }
        Ok(RunOutcome {
            l2_error: l2,
            final_loss: sol.energy,
            oracle_energy: Some(sol.energy),
            mean_epoch_ms: None,
            resources: ResourceUsage::default(),
            report: None,
        })
    };
    go().map_err(|e| e.to_string())
}

fn summarise(
    mode: RunMode,
    mesh: usize,
    precision: usize,
    space: &FESpace,
    rule_len: usize,
    blocks: usize,
    group: &[RunRecord],
) -> SummaryRow {
    let ok: Vec<&RunOutcome> = group.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let collect = |f: &dyn Fn(&RunOutcome) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|o| f(o)).collect() };
    SummaryRow {
        mode,
        mesh,
        cells: space.num_elements(),
        dofs: space.num_dofs(),
        quad_points: space.num_elements() * rule_len,
        precision,
        blocks: if mode.is_trained() { blocks } else { 0 },
        runs_ok: ok.len(),
        runs_failed: group.len() - ok.len(),
        median_l2_error: median(&collect(&|o| Some(o.l2_error))),
        median_final_loss: median(&collect(&|o| Some(o.final_loss))),
        median_epoch_ms: median(&collect(&|o| o.mean_epoch_ms)),
        median_allocations: median(&collect(&|o| o.resources.allocations.map(|a| a as f64))),
        max_peak_live_bytes: ok.iter().filter_map(|o| o.resources.peak_live_bytes).max(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_config() {
        let cfg = ExperimentConfig::parse(
            "# demo\nname = demo\nproblem = lshape\nmeshes = 1, 2\nprecisions=2,3\nmodes = fe, oracle  # both\n\
             seeds = 4\nblocks = 3\nepochs = 10\nalpha = 30\nheatmap = true\noutput = /tmp/x\ntiming_window = 2, 5\n",
        )
        .unwrap();
        assert_eq!(cfg.name, "demo");
        assert_eq!(cfg.meshes, vec![1, 2]);
        assert_eq!(cfg.precisions, vec![2, 3]);
        assert_eq!(cfg.modes, vec![RunMode::Fe, RunMode::Oracle]);
        assert_eq!(cfg.seeds, vec![4]);
        assert_eq!(cfg.blocks, 3);
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.train.alpha, 30.0);
        assert!(cfg.heatmap);
        assert_eq!(cfg.timing_window, (2, 5));
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/x"));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(ExperimentConfig::parse("colour = red"), Err(Error::Parse(_))));
        assert!(matches!(ExperimentConfig::parse("epochs"), Err(Error::Parse(_))));
        assert!(matches!(ExperimentConfig::parse("epochs = many"), Err(Error::Parse(_))));
        assert!(ExperimentConfig::parse("problem = wave").is_err());
        assert!(ExperimentConfig::parse("modes = fe, magic").is_err());
        assert!(ExperimentConfig::parse("epochs = 0").is_err());
        assert!(ExperimentConfig::parse("precisions = 9").is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn tiny_sweep_writes_artifacts() {
        let dir = std::env::temp_dir().join(format!("dgnet-exp-{}", std::process::id()));
        let mut cfg = ExperimentConfig::parse(
            "name = tiny\nproblem = quadratic\nmeshes = 2\nprecisions = 2\nmodes = fe, fe_nojumps, collocation, oracle\n\
             seeds = 0, 1\nblocks = 1\nwidth = 4\nepochs = 3\ncomponent_every = 1\nheatmap = true\n",
        )
        .unwrap();
        cfg.output = Some(dir.clone());
        let s = run_experiment(&cfg).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.runs.len(), 2 + 2 + 2 + 1);
        assert!(!s.all_failed());
        for r in &s.runs {
            let o = r.outcome.as_ref().unwrap();
            if let Some(e) = o.oracle_energy {
                assert!(o.final_loss >= e - 1e-8);
            }
        }
        let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 5);
        assert!(summary.lines().nth(1).unwrap().starts_with("fe,2,8,25,24,2,1,2,0,"));
        assert!(dir.join("runs/fe_m2_p2_s1.csv").exists());
        assert!(dir.join("heatmaps/collocation_m2_p2.svg").exists());
        assert!(dir.join("heatmaps/oracle_m2_p2.svg").exists());
        let again = crate::par::single_worker(|| run_experiment(&cfg).unwrap());
        let first = crate::par::single_worker(|| run_experiment(&cfg).unwrap());
        assert_eq!(again.summary_csv(), first.summary_csv());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
