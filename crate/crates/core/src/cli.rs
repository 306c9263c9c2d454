//! Command-line interface and the experiment drivers behind it.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::allocator::optimize_allocation;
use crate::antenna::{beam_pattern_csv, build_beambook};
use crate::baselines::StrategyKind;
use crate::engine::{run_batch, Deployment, TrialReport};
use crate::metrics::{detection_pct_table, pmd_table, CountGroup, CycleAccumulator, DetectionCounts, MetricsTable};
use crate::scenario::{load_config_with, parse_config, AllocationPolicy, ConfigError, ScenarioConfig, Strategy};
use crate::verify::{off_by_one_allocator, run_suites, Suite};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "beamsweep", version, about = "mmWave initial-access beam sweeping simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One batch of the configured strategy; writes detection % per cycle.
    Run(RunArgs),
    /// PMD and detection % against ring distance for each strategy.
    SweepDistance(SweepDistanceArgs),
    /// Mean detection % per sweep cycle for each allocation policy.
    SweepCycle(SweepCycleArgs),
    /// Gain of every beam over azimuth.
    DumpBeams(DumpBeamsArgs),
    /// Runs the built-in verification suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON scenario file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = "BEAMSWEEP_SEED")]
    pub seed: Option<u64>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to the available cores).
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Also write one gnuplot .dat file per curve into this directory.
    #[arg(long)]
    pub dat: Option<PathBuf>,
    /// Config overrides as dotted `key=value` pairs.
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// proposed, exhaustive, iterative or constant:c
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Place every UE at this distance instead of across the cell.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Line-delimited JSON trial events.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepDistanceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "snr-th")]
    pub snr_th: Option<f64>,
    /// Single distance instead of the full grid.
    #[arg(long = "d")]
    pub distance: Option<f64>,
    /// Grid spacing in metres.
    #[arg(long, default_value_t = 5.0)]
    pub step: f64,
    #[arg(long, value_delimiter = ',', default_value = "proposed,exhaustive,iterative")]
    pub strategies: Vec<StrategyKind>,
}

#[derive(Debug, Args)]
pub struct SweepCycleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "snr-th", default_value_t = 5.0)]
    pub snr_th: f64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "optimized-exact,optimized-proportional,constant:1,constant:2,constant:3,constant:4"
    )]
    pub policies: Vec<AllocationPolicy>,
}

#[derive(Debug, Args)]
pub struct DumpBeamsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// allocator, rayleigh or plans; all when omitted.
    #[arg(long)]
    pub suite: Option<Suite>,
    /// Swap in a deliberately broken allocator to confirm the suite catches it.
    #[arg(long, hide = true)]
    pub inject_off_by_one: bool,
}

pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    match config {
        Some(p) => load_config_with(p, overrides),
        None => parse_config("", overrides),
    }
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Resolved {
    cfg: ScenarioConfig,
    trials: usize,
    seed: u64,
    parallelism: usize,
}

fn resolve(common: &CommonArgs, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<Resolved, Error> {
    let mut cfg = load(common.config.as_deref(), &common.overrides)?;
    edit(&mut cfg);
    cfg.validate()?;
    let trials = common.trials.unwrap_or(cfg.trials);
    if trials == 0 {
        return Err(ConfigError::Validation("trials must be at least 1".into()).into());
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    let parallelism = common.parallelism.unwrap_or_else(default_parallelism).max(1);
    Ok(Resolved { cfg, trials, seed, parallelism })
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(p.display().to_string(), e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io("stdout".into(), e)),
    }
}

fn emit_table(table: &MetricsTable, common: &CommonArgs) -> Result<(), Error> {
    emit(&table.to_csv(), common.out.as_deref())?;
    if let Some(dir) = &common.dat {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(dir.display().to_string(), e))?;
        for (label, body) in table.to_dat() {
            let path = dir.join(format!("{}.dat", label.replace([':', '/'], "_")));
            std::fs::write(&path, body).map_err(|e| Error::Io(path.display().to_string(), e))?;
        }
    }
    Ok(())
}

/// Distance grid `start, start+step, …` up to and including `end`.
pub fn distance_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// PMD and detection-% tables over ring deployments; one row per (distance, strategy).
pub fn sweep_distance(
    cfg: &ScenarioConfig,
    distances: &[f64],
    strategies: &[StrategyKind],
    trials: usize,
    seed: u64,
    parallelism: usize,
) -> Result<(MetricsTable, MetricsTable), Error> {
    let mut groups = Vec::new();
    for &s in strategies {
        let mut c = cfg.clone();
        s.apply(&mut c);
        for &d in distances {
            let reports = run_batch(&c, Deployment::Ring(d), trials, seed, parallelism)?;
            let counts = DetectionCounts::from_reports(&reports, c.pmd_threshold_only);
            groups.push(CountGroup { x: d, label: s.to_string(), counts });
        }
    }
    Ok((pmd_table(&groups)?, detection_pct_table(&groups)?))
}

/// Mean detection % per cycle over random deployments for each policy.
pub fn sweep_cycle(
    cfg: &ScenarioConfig,
    policies: &[AllocationPolicy],
    trials: usize,
    seed: u64,
    parallelism: usize,
    mut inspect: impl FnMut(AllocationPolicy, &[TrialReport]),
) -> Result<MetricsTable, Error> {
    let mut table = MetricsTable::default();
    for &p in policies {
        let c = ScenarioConfig { strategy: Strategy::Proposed, allocation_policy: p, ..cfg.clone() };
        let reports = run_batch(&c, Deployment::Random, trials, seed, parallelism)?;
        inspect(p, &reports);
        let mut acc = CycleAccumulator::new(c.max_sweep_cycles);
        for r in &reports {
            acc.add(r)?;
        }
        table.extend(acc.table(&p.to_string()));
    }
    Ok(table.sorted())
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let r = resolve(&args.common, |cfg| {
        if let Some(s) = args.strategy {
            s.apply(cfg);
        }
    })?;
    let deployment = args.distance.map_or(Deployment::Random, Deployment::Ring);
    let reports = run_batch(&r.cfg, deployment, r.trials, r.seed, r.parallelism)?;
    if let Some(path) = &args.trace {
        let mut body = String::new();
        for line in reports.iter().flat_map(|rep| rep.trace_lines()) {
            body.push_str(&line);
            body.push('\n');
        }
        emit(&body, Some(path))?;
    }
    let label = args.strategy.map_or_else(
        || match r.cfg.strategy {
            Strategy::Proposed => r.cfg.allocation_policy.to_string(),
            other => other.to_string(),
        },
        |s| s.to_string(),
    );
    let mut acc = CycleAccumulator::new(r.cfg.max_sweep_cycles);
    for rep in &reports {
        acc.add(rep)?;
    }
    emit_table(&acc.table(&label), &args.common)
}

fn cmd_sweep_distance(args: &SweepDistanceArgs) -> Result<(), Error> {
    let r = resolve(&args.common, |cfg| {
        if let Some(th) = args.snr_th {
            cfg.snr_th_db = th;
        }
    })?;
    if !(args.step > 0.0) {
        return Err(ConfigError::Validation("--step must be positive".into()).into());
    }
    let distances = match args.distance {
        Some(d) => vec![d],
        None => distance_grid(r.cfg.min_ue_radius_m, r.cfg.cell_radius_m, args.step),
    };
    let (pmd, pct) = sweep_distance(&r.cfg, &distances, &args.strategies, r.trials, r.seed, r.parallelism)?;
    let mut table = MetricsTable::default();
    for row in pmd.rows {
        table.push(row.x, format!("pmd_{}", row.label), row.value, row.ci);
    }
    for row in pct.rows {
        table.push(row.x, format!("detection_pct_{}", row.label), row.value, row.ci);
    }
    emit_table(&table.sorted(), &args.common)
}

fn cmd_sweep_cycle(args: &SweepCycleArgs) -> Result<(), Error> {
    let r = resolve(&args.common, |cfg| cfg.snr_th_db = args.snr_th)?;
    let table = sweep_cycle(&r.cfg, &args.policies, r.trials, r.seed, r.parallelism, |_, _| {})?;
    emit_table(&table, &args.common)
}

fn cmd_dump_beams(args: &DumpBeamsArgs) -> Result<(), Error> {
    let cfg = load(args.config.as_deref(), &args.overrides)?;
    if !(args.step > 0.0) {
        return Err(ConfigError::Validation("--step must be positive".into()).into());
    }
    let book = build_beambook(&cfg)?;
    emit(&beam_pattern_csv(&book, args.step), args.out.as_deref())
}

/// Runs a parsed command and maps the outcome to a process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::SweepDistance(a) => cmd_sweep_distance(a),
        Command::SweepCycle(a) => cmd_sweep_cycle(a),
        Command::DumpBeams(a) => cmd_dump_beams(a),
        Command::Verify(a) => {
            let allocator = if a.inject_off_by_one { off_by_one_allocator } else { optimize_allocation };
            let reports = run_suites(a.suite, allocator);
            for r in &reports {
                println!("{r}");
            }
            return if reports.iter().all(|r| r.passed()) { 0 } else { 3 };
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_thirty_points() {
        let g = distance_grid(5.0, 150.0, 5.0);
        assert_eq!(g.len(), 30);
        assert_eq!((g[0], g[29]), (5.0, 150.0));
        assert_eq!(distance_grid(100.0, 100.0, 5.0), vec![100.0]);
    }

    #[test]
    fn parses_strategy_and_policies() {
        let cli = Cli::try_parse_from(["beamsweep", "run", "--strategy", "constant:3", "--trials", "5", "n_ues=4"]).unwrap();
        let Command::Run(a) = cli.command else { panic!() };
        assert_eq!(a.strategy, Some(StrategyKind::Constant(3)));
        assert_eq!(a.common.overrides, vec!["n_ues=4"]);

        let cli = Cli::try_parse_from(["beamsweep", "sweep-cycle", "--policies", "constant:4,optimized-exact"]).unwrap();
        let Command::SweepCycle(a) = cli.command else { panic!() };
        assert_eq!(a.policies, vec![AllocationPolicy::Constant(4), AllocationPolicy::OptimizedExact]);
        assert_eq!(a.snr_th, 5.0);

        assert!(Cli::try_parse_from(["beamsweep", "run", "--strategy", "greedy"]).is_err());
    }

    #[test]
    fn sweep_distance_shape() {
        let cfg = ScenarioConfig { n_ues: 4, ..Default::default() };
        let all = [StrategyKind::Proposed, StrategyKind::Exhaustive, StrategyKind::Iterative];
        let (pmd, pct) = sweep_distance(&cfg, &[50.0, 100.0], &all, 3, 1, 1).unwrap();
        assert_eq!(pmd.rows.len(), 6);
        assert_eq!(pct.rows.len(), 6);
        for (a, b) in pmd.rows.iter().zip(&pct.rows) {
            assert_eq!(b.value, 100.0 * (1.0 - a.value));
        }
    }
}
