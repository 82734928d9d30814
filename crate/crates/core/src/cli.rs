//! Command-line front end.
//!
//! Every subcommand writes one CSV table to `--out` (stdout when absent) and
//! prints its effective configuration to stderr. Without `--timing` the CSV
//! contains no wall-clock columns, so identical invocations produce identical
//! bytes. Exit codes: 0 success, 1 a run did not converge, 2 usage or I/O
//! error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::chunkstore::MAX_CHUNK_SIZE;
use crate::netsim::{
    measure_proof_cost, run, simulate_false_consistency, simulate_false_positive, MetricsReport, Protocol, Scenario,
    ScenarioConfig, MIB,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_SIZE_MB: f64 = 10.0;
const DEFAULT_FC_TRIALS: u64 = 100_000;
const DEFAULT_FP_TRIALS: u64 = 100;
const DEFAULT_BENCH_REPS: u64 = 3;
const DEFAULT_BASELINE_PEERS: usize = 8;
const LARGE_PEERS: usize = 26;
const LARGE_SIZE_MB: f64 = 1000.0;

#[derive(Parser, Debug)]
#[command(name = "snips", version, about = "Proof-of-storage chunk synchronization experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Root seed of every random choice.
    #[arg(long, global = true, env = "SNIPS_SEED", default_value_t = 1)]
    pub seed: u64,
    /// CSV output path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo trials (fc-sim, fp-sim) or timing repetitions (bench, overhead).
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Neighborhood size.
    #[arg(long, global = true)]
    pub peers: Option<usize>,
    /// Initial storage per peer in MiB.
    #[arg(long, global = true)]
    pub size_mb: Option<f64>,
    #[arg(long, global = true, default_value_t = MAX_CHUNK_SIZE)]
    pub chunk_size: usize,
    /// Append wall-clock columns; output is then no longer reproducible.
    #[arg(long, global = true)]
    pub timing: bool,
    /// Add the long-running grid points.
    #[arg(long, global = true)]
    pub large: bool,
    /// Also write a gnuplot script plotting the CSV; requires --out.
    #[arg(long, global = true)]
    pub gnuplot: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Snips,
    Baseline,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Snips => Protocol::Snips,
            ProtocolArg::Baseline => Protocol::Baseline,
        }
    }
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Run one scenario and report its metrics.
    Sync {
        /// cl:<fraction>, ca:<bytes>|ca:<n>mb or sim:<s>.
        #[arg(long, default_value = "cl:0.1", value_parser = Scenario::parse)]
        scenario: Scenario,
        #[arg(long, value_enum, default_value_t = ProtocolArg::Snips)]
        protocol: ProtocolArg,
        #[arg(long, default_value_t = 10)]
        max_rounds: u32,
        /// Skip checksum verification of completed uploads.
        #[arg(long)]
        no_checksum: bool,
        /// Write the message trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// One sync run per similarity s in {0, 1/steps, ..., 1}.
    SweepSimilarity {
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        steps: u32,
        #[arg(long, default_value_t = 10)]
        max_rounds: u32,
    },
    /// Probability that some non-member query returns a nonzero index.
    FpSim {
        #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 10_000, 100_000])]
        n: Vec<usize>,
        /// Non-member queries per trial; defaults to n.
        #[arg(long)]
        probe_count: Option<usize>,
    },
    /// Probability that one differing chunk goes unnoticed, against 1/n.
    FcSim {
        #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 500, 1000])]
        n: Vec<usize>,
    },
    /// Proof size per chunk over a grid of storage sizes.
    Overhead {
        /// Storage sizes in MiB; --large appends 1000.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0f64, 10.0, 100.0])]
        grid_mb: Vec<f64>,
    },
    /// Proof creation and verification cost over a grid of chunk counts.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [2_560usize, 25_600])]
        chunks: Vec<usize>,
    },
    /// Paired runs of both protocols with the metadata savings.
    CompareBaseline {
        /// Defaults to cl:0.1, cl:0.5, cl:0.9 and ca:<size>mb.
        #[arg(long, value_delimiter = ',', value_parser = Scenario::parse)]
        scenarios: Vec<Scenario>,
        /// Storage sizes in MiB; defaults to --size-mb, or 10, 100, 1000 with --large.
        #[arg(long, value_delimiter = ',')]
        grid_mb: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        max_rounds: u32,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sync { .. } => "sync",
            Command::SweepSimilarity { .. } => "sweep-similarity",
            Command::FpSim { .. } => "fp-sim",
            Command::FcSim { .. } => "fc-sim",
            Command::Overhead { .. } => "overhead",
            Command::Bench { .. } => "bench",
            Command::CompareBaseline { .. } => "compare-baseline",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// A finished table plus whether every run in it converged.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub converged: bool,
    /// `(x column, y columns, log x)` for the gnuplot script.
    plot: (String, Vec<String>, bool),
}

impl Table {
    fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Self { header, rows, converged: true, plot: (String::new(), Vec::new(), false) }
    }

    fn plot(mut self, x: &str, ys: &[&str], log_x: bool) -> Self {
        self.plot = (x.into(), ys.iter().map(|s| s.to_string()).collect(), log_x);
        self
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Column values by header name.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    fn gnuplot_script(&self, csv_path: &Path) -> String {
        let (x, ys, log_x) = &self.plot;
        let csv = csv_path.display().to_string().replace('\'', "''");
        let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\n");
        if *log_x {
            s.push_str("set logscale x\n");
        }
        s.push_str(&format!("set xlabel '{x}'\nset terminal pngcairo size 900,600\nset output '{csv}.png'\nplot "));
        let series: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let file = if i == 0 { format!("'{csv}'") } else { "''".into() };
                let xs = if x.is_empty() { "0".to_string() } else { format!("\"{x}\"") };
                format!("{file} using {xs}:\"{y}\" with linespoints title '{y}'")
            })
            .collect();
        s.push_str(&series.join(", \\\n     "));
        s.push('\n');
        s
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn mib_label(mb: f64) -> String {
    format!("{mb}")
}

fn storage_bytes(mb: f64) -> Result<u64, CliError> {
    if mb.is_finite() && mb > 0.0 {
        Ok((mb * MIB as f64) as u64)
    } else {
        Err(CliError::Usage(format!("storage size {mb} MiB must be positive")))
    }
}

impl Cli {
    /// One line from which the run can be repeated.
    pub fn config_line(&self) -> String {
        let c = &self.common;
        format!(
            "config: command={} seed={} peers={:?} size_mb={:?} chunk_size={} trials={:?} timing={} large={} args={:?}",
            self.command.name(),
            c.seed,
            c.peers,
            c.size_mb,
            c.chunk_size,
            c.trials,
            c.timing,
            c.large,
            self.command
        )
    }

    fn scenario_config(&self, peers: usize, size_mb: f64, scenario: Scenario, max_rounds: u32) -> Result<ScenarioConfig, CliError> {
        let config = ScenarioConfig {
            peers,
            total_storage_bytes: storage_bytes(size_mb)?,
            chunk_size: self.common.chunk_size,
            scenario,
            seed: self.common.seed,
            max_rounds,
            ..Default::default()
        };
        config.validate().map_err(CliError::Usage)?;
        Ok(config)
    }

    /// Runs the command and returns its table; writes nothing.
    pub fn execute(&self) -> Result<Table, CliError> {
        let c = &self.common;
        if c.chunk_size == 0 || c.chunk_size > MAX_CHUNK_SIZE {
            return Err(CliError::Usage(format!("--chunk-size must be in 1..={MAX_CHUNK_SIZE}")));
        }
        let size_mb = c.size_mb.unwrap_or(DEFAULT_SIZE_MB);
        let timing = c.timing;
        match &self.command {
            Command::Sync { scenario, protocol, max_rounds, no_checksum, trace } => {
                let mut config = self.scenario_config(c.peers.unwrap_or(2), size_mb, *scenario, *max_rounds)?;
                config.protocol = (*protocol).into();
                config.verify_checksum = !no_checksum;
                config.trace = trace.is_some();
                let report = run(&config);
                if let Some(path) = trace {
                    let mut f = BufWriter::new(File::create(path)?);
                    for line in &report.trace {
                        writeln!(f, "{line}")?;
                    }
                    f.flush()?;
                }
                let mut t = Table::new(strings(&MetricsReport::csv_header(timing)), vec![report.csv_row(timing)])
                    .plot("", &["metadata_bytes", "chunk_payload_bytes"], false);
                t.converged = report.converged;
                Ok(t)
            }
            Command::SweepSimilarity { steps, max_rounds } => {
                let peers = c.peers.unwrap_or(2);
                let configs = (0..=*steps)
                    .map(|i| {
                        let s = i as f64 / *steps as f64;
                        self.scenario_config(peers, size_mb, Scenario::Similarity(s), *max_rounds).map(|cfg| (s, cfg))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let reports: Vec<(f64, MetricsReport)> = configs.into_par_iter().map(|(s, cfg)| (s, run(&cfg))).collect();
                let mut header = vec!["similarity".to_string()];
                header.extend(strings(&MetricsReport::csv_header(timing)));
                let converged = reports.iter().all(|(_, r)| r.converged);
                let rows = reports
                    .iter()
                    .map(|(s, r)| {
                        let mut row = vec![format!("{s}")];
                        row.extend(r.csv_row(timing));
                        row
                    })
                    .collect();
                let mut t = Table::new(header, rows).plot("similarity", &["metadata_bytes", "select_messages"], false);
                t.converged = converged;
                Ok(t)
            }
            Command::FpSim { n, probe_count } => {
                let trials = c.trials.unwrap_or(DEFAULT_FP_TRIALS);
                let rows = n
                    .iter()
                    .map(|&n| {
                        let e = simulate_false_positive(n, probe_count.unwrap_or(n), trials, c.seed);
                        vec![
                            n.to_string(),
                            e.probe_count.to_string(),
                            e.trials.to_string(),
                            e.with_false_positive.to_string(),
                            f6(e.probability),
                        ]
                    })
                    .collect();
                let header = strings(&["n", "probe_count", "trials", "with_false_positive", "probability"]);
                Ok(Table::new(header, rows).plot("n", &["probability"], true))
            }
            Command::FcSim { n } => {
                if n.contains(&0) {
                    return Err(CliError::Usage("fc-sim needs n >= 1".into()));
                }
                let trials = c.trials.unwrap_or(DEFAULT_FC_TRIALS);
                let rows = n
                    .iter()
                    .map(|&n| {
                        let e = simulate_false_consistency(n, trials, c.seed);
                        vec![
                            n.to_string(),
                            e.trials.to_string(),
                            e.false_consistent.to_string(),
                            format!("{:.8}", e.estimate),
                            format!("{:.8}", e.analytic),
                            format!("{:.8}", e.sigma),
                            format!("{:.3}", e.z_score()),
                        ]
                    })
                    .collect();
                let header = strings(&["n", "trials", "false_consistent", "estimate", "analytic", "sigma", "z_score"]);
                Ok(Table::new(header, rows).plot("n", &["estimate", "analytic"], true))
            }
            Command::Overhead { grid_mb } => {
                let mut grid = grid_mb.clone();
                if c.large {
                    grid.push(LARGE_SIZE_MB);
                }
                let reps = c.trials.unwrap_or(1).max(1) as u32;
                let mut rows = Vec::with_capacity(grid.len());
                for mb in grid {
                    let chunks = (storage_bytes(mb)? / c.chunk_size as u64) as usize;
                    if chunks == 0 {
                        return Err(CliError::Usage(format!("{mb} MiB holds no chunk")));
                    }
                    let cost = measure_proof_cost(chunks, c.chunk_size, reps, c.seed);
                    let mut row = vec![
                        mib_label(mb),
                        chunks.to_string(),
                        cost.mphf_bits.to_string(),
                        f6(cost.mphf_bits_per_chunk()),
                        cost.prove_bytes.to_string(),
                        f6(cost.prove_bits_per_chunk()),
                    ];
                    if timing {
                        row.push(f6(cost.create_us_per_chunk()));
                        row.push(f6(cost.find_missing_us_per_chunk()));
                    }
                    rows.push(row);
                }
                let mut header = strings(&["size_mb", "chunks", "mphf_bits", "bits_per_chunk", "prove_bytes", "prove_bits_per_chunk"]);
                if timing {
                    header.extend(strings(&["create_us_per_chunk", "find_missing_us_per_chunk"]));
                }
                Ok(Table::new(header, rows).plot("size_mb", &["bits_per_chunk", "prove_bits_per_chunk"], true))
            }
            Command::Bench { chunks } => {
                if chunks.contains(&0) {
                    return Err(CliError::Usage("bench needs chunk counts >= 1".into()));
                }
                let reps = c.trials.unwrap_or(DEFAULT_BENCH_REPS).max(1) as u32;
                let rows = chunks
                    .iter()
                    .map(|&n| {
                        let cost = measure_proof_cost(n, c.chunk_size, reps, c.seed);
                        let mut row = vec![
                            n.to_string(),
                            c.chunk_size.to_string(),
                            cost.levels.to_string(),
                            cost.fallback.to_string(),
                            f6(cost.mphf_bits_per_chunk()),
                        ];
                        if timing {
                            row.push(f6(cost.create_us_per_chunk()));
                            row.push(f6(cost.find_missing_us_per_chunk()));
                        }
                        row
                    })
                    .collect();
                let mut header = strings(&["chunks", "chunk_size", "levels", "fallback", "bits_per_chunk"]);
                let ys: &[&str] = if timing {
                    header.extend(strings(&["create_us_per_chunk", "find_missing_us_per_chunk"]));
                    &["create_us_per_chunk", "find_missing_us_per_chunk"]
                } else {
                    &["bits_per_chunk"]
                };
                Ok(Table::new(header, rows).plot("chunks", ys, true))
            }
            Command::CompareBaseline { scenarios, grid_mb, max_rounds } => {
                let peer_grid = match (c.peers, c.large) {
                    (Some(p), _) => vec![p],
                    (None, false) => vec![DEFAULT_BASELINE_PEERS],
                    (None, true) => vec![DEFAULT_BASELINE_PEERS, LARGE_PEERS],
                };
                let sizes = match (grid_mb.is_empty(), c.large) {
                    (false, _) => grid_mb.clone(),
                    (true, false) => vec![size_mb],
                    (true, true) => vec![10.0, 100.0, LARGE_SIZE_MB],
                };
                let mut configs = Vec::new();
                for &peers in &peer_grid {
                    for &mb in &sizes {
                        let list = if scenarios.is_empty() {
                            vec![
                                Scenario::ChunkLoss(0.1),
                                Scenario::ChunkLoss(0.5),
                                Scenario::ChunkLoss(0.9),
                                Scenario::ChunkAdd(storage_bytes(mb)?),
                            ]
                        } else {
                            scenarios.clone()
                        };
                        for sc in list {
                            configs.push((mb, self.scenario_config(peers, mb, sc, *max_rounds)?));
                        }
                    }
                }
                let results: Vec<(f64, ScenarioConfig, MetricsReport, MetricsReport)> = configs
                    .into_par_iter()
                    .map(|(mb, cfg)| {
                        let snips = run(&ScenarioConfig { protocol: Protocol::Snips, ..cfg.clone() });
                        let base = run(&ScenarioConfig { protocol: Protocol::Baseline, ..cfg.clone() });
                        (mb, cfg, snips, base)
                    })
                    .collect();
                let converged = results.iter().all(|(_, _, s, b)| s.converged && b.converged);
                let rows = results
                    .iter()
                    .map(|(mb, cfg, s, b)| {
                        let ratio = s.metadata_bytes as f64 / b.metadata_bytes as f64;
                        vec![
                            cfg.peers.to_string(),
                            mib_label(*mb),
                            cfg.scenario.label(),
                            s.converged.to_string(),
                            b.converged.to_string(),
                            s.rounds_to_sync.to_string(),
                            s.metadata_bytes.to_string(),
                            b.metadata_bytes.to_string(),
                            f6(ratio),
                            format!("{:.3}", (1.0 - ratio) * 100.0),
                        ]
                    })
                    .collect();
                let header = strings(&[
                    "peers",
                    "size_mb",
                    "scenario",
                    "snips_converged",
                    "baseline_converged",
                    "snips_rounds",
                    "snips_metadata_bytes",
                    "baseline_metadata_bytes",
                    "metadata_ratio",
                    "savings_pct",
                ]);
                let mut t = Table::new(header, rows).plot("", &["savings_pct"], false);
                t.converged = converged;
                Ok(t)
            }
        }
    }

    /// Executes, writes the CSV and optional gnuplot script, and returns the
    /// exit code.
    pub fn run(&self) -> Result<i32, CliError> {
        if self.common.gnuplot.is_some() && self.common.out.is_none() {
            return Err(CliError::Usage("--gnuplot requires --out".into()));
        }
        eprintln!("{}", self.config_line());
        let table = self.execute()?;
        match &self.common.out {
            Some(path) => table.write_csv(BufWriter::new(File::create(path)?))?,
            None => table.write_csv(io::stdout().lock())?,
        }
        if let (Some(script), Some(csv)) = (&self.common.gnuplot, &self.common.out) {
            fs::write(script, table.gnuplot_script(csv))?;
        }
        Ok(if table.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("snips").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = parse(&["sync", "--seed", "9", "--peers", "3", "--scenario", "sim:0.5"]);
        assert_eq!(cli.common.seed, 9);
        assert_eq!(cli.common.peers, Some(3));
        assert!(matches!(cli.command, Command::Sync { scenario: Scenario::Similarity(s), .. } if s == 0.5));
    }

    #[test]
    fn bad_scenario_is_usage_error() {
        assert_eq!(main_with_args(["snips", "sync", "--scenario", "zz:1"]), EXIT_USAGE);
        assert_eq!(main_with_args(["snips", "sync", "--scenario", "cl:1.5"]), EXIT_USAGE);
        assert_eq!(main_with_args(["snips", "nosuch"]), EXIT_USAGE);
    }

    #[test]
    fn invalid_config_is_usage_error() {
        assert_eq!(main_with_args(["snips", "sync", "--peers", "1", "--size-mb", "0.1"]), EXIT_USAGE);
        assert_eq!(main_with_args(["snips", "sync", "--chunk-size", "5000"]), EXIT_USAGE);
        assert_eq!(main_with_args(["snips", "sync", "--gnuplot", "x.gp"]), EXIT_USAGE);
    }

    #[test]
    fn sync_table_has_one_converged_row() {
        let t = parse(&["sync", "--size-mb", "0.25", "--scenario", "cl:0.1"]).execute().unwrap();
        assert!(t.converged);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.column("converged").unwrap(), ["true"]);
        assert!(t.column("create_seconds").is_none());
    }

    #[test]
    fn timing_adds_columns() {
        let t = parse(&["bench", "--chunks", "64", "--trials", "1", "--timing"]).execute().unwrap();
        assert!(t.column("create_us_per_chunk").is_some());
        let t = parse(&["bench", "--chunks", "64", "--trials", "1"]).execute().unwrap();
        assert!(t.column("create_us_per_chunk").is_none());
    }

    #[test]
    fn sweep_rows_follow_config_order() {
        let t = parse(&["sweep-similarity", "--steps", "4", "--size-mb", "0.125"]).execute().unwrap();
        assert_eq!(t.column("similarity").unwrap(), ["0", "0.25", "0.5", "0.75", "1"]);
    }

    #[test]
    fn gnuplot_script_names_columns() {
        let t = parse(&["fc-sim", "--n", "5", "--trials", "10"]).execute().unwrap();
        let s = t.gnuplot_script(Path::new("fc.csv"));
        assert!(s.contains("using \"n\":\"estimate\""));
        assert!(s.contains("set logscale x"));
    }
}
