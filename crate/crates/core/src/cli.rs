//! Command-line front end. [`run`] parses arguments and returns the
//! process exit code: 0 on success, 1 on a runtime error, 2 on a usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::harness::{self, RunConfig};
use crate::mesosim::{generate_trips, TripSpec};
use crate::netgraph::{adjacency_matrix, degree_centrality, generate_grid, GridSpec, PhaseScheme, RoadNetwork};

#[derive(Debug, Parser)]
#[command(name = "tsclab", version, about = "Traffic-signal control lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a grid network JSON.
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200.0)]
        edge_length: f64,
        #[arg(long, value_parser = parse_scheme, default_value = "two_phase")]
        phase_scheme: PhaseScheme,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate flows for every entry lane of a network.
    Trips {
        #[arg(long)]
        net: PathBuf,
        /// Vehicles per hour per entry lane.
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        out: PathBuf,
        /// Rate override for entry lanes with an id prefix, e.g. `W=700`.
        #[arg(long = "prefix-rate", value_parser = parse_prefix_rate)]
        prefix_rate: Vec<(String, f64)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print network structure and graph analytics.
    Inspect {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the configured rule-based controller.
    RunBaseline(RunArgs),
    /// Train the configured algorithm.
    Train(RunArgs),
    /// Evaluate a checkpoint greedily.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Serve the configured scenario over TCP.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
    },
    /// Plot CSV columns as an SVG line chart.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "episode")]
        x: String,
        #[arg(long, num_args = 1.., default_values_t = ["mean_queue".to_string()])]
        y: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// `--config` plus flags named after top-level run config keys.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub total_env_steps: Option<u64>,
    #[arg(long)]
    pub eval_interval: Option<u64>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long)]
    pub parallel_envs: Option<usize>,
}

fn parse_scheme(s: &str) -> Result<PhaseScheme, String> {
    match s {
        "two_phase" => Ok(PhaseScheme::TwoPhase),
        "four_phase" => Ok(PhaseScheme::FourPhase),
        _ => Err(format!("expected two_phase or four_phase, got {s:?}")),
    }
}

fn parse_prefix_rate(s: &str) -> Result<(String, f64), String> {
    let (p, r) = s.split_once('=').ok_or("expected PREFIX=RATE")?;
    let rate = r.parse::<f64>().map_err(|e| format!("bad rate {r:?}: {e}"))?;
    Ok((p.to_string(), rate))
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, Value)> {
        let mut v = Vec::new();
        if let Some(s) = self.seed {
            v.push(("seed", Value::from(s)));
        }
        if let Some(p) = &self.output_dir {
            v.push(("output_dir", Value::from(p.to_string_lossy().into_owned())));
        }
        if let Some(s) = self.total_env_steps {
            v.push(("total_env_steps", Value::from(s)));
        }
        if let Some(s) = self.eval_interval {
            v.push(("eval_interval", Value::from(s)));
        }
        if let Some(s) = self.eval_episodes {
            v.push(("eval_episodes", Value::from(s)));
        }
        if let Some(s) = self.parallel_envs {
            v.push(("parallel_envs", Value::from(s)));
        }
        v
    }

    /// Loads the config and applies flags for keys the file leaves unset.
    /// Returns the config and one warning per flag the file overrides.
    pub fn load(&self) -> anyhow::Result<(RunConfig, Vec<String>)> {
        let text = std::fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        let mut value: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", self.config.display()))?;
        let Some(obj) = value.as_object_mut() else {
            bail!("{}: expected a JSON object", self.config.display());
        };
        let mut warnings = Vec::new();
        for (key, v) in self.overrides() {
            if obj.contains_key(key) {
                warnings.push(format!(
                    "warning: --{} ignored, {} sets \"{key}\"",
                    key.replace('_', "-"),
                    self.config.display()
                ));
            } else {
                obj.insert(key.to_string(), v);
            }
        }
        let tmp = serde_json::to_string(&value)?;
        let mut cfg = RunConfig::from_json(&tmp)?;
        cfg.resolve_relative_to(self.config.parent().unwrap_or(Path::new(".")));
        Ok((cfg, warnings))
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_network(path: &Path) -> anyhow::Result<RoadNetwork> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RoadNetwork::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn inspect(net: &RoadNetwork) -> anyhow::Result<String> {
    use std::fmt::Write;
    let mut s = String::new();
    writeln!(s, "signals: {}", net.num_signals())?;
    writeln!(s, "lanes: {}", net.num_lanes())?;
    writeln!(s, "movements: {}", net.movements().len())?;
    writeln!(s, "entry_lanes: {}", net.entry_lanes().len())?;
    writeln!(s, "exit_lanes: {}", net.exit_lanes().len())?;
    for (i, sig) in net.signals().iter().enumerate() {
        writeln!(
            s,
            "signal {} incoming={} phases={}",
            sig.id,
            net.incoming(i).len(),
            net.num_phases(i)
        )?;
    }
    writeln!(s, "adjacency:")?;
    for row in adjacency_matrix(net) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(s, "  {}", cells.join(" "))?;
    }
    match degree_centrality(net) {
        Ok(c) => {
            let cells: Vec<String> = net
                .signals()
                .iter()
                .zip(c)
                .map(|(sig, v)| format!("{}={v:.4}", sig.id))
                .collect();
            writeln!(s, "degree_centrality: {}", cells.join(" "))?;
        }
        Err(e) => writeln!(s, "degree_centrality: undefined ({e})")?,
    }
    Ok(s)
}

fn execute(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Grid {
            rows,
            cols,
            out,
            edge_length,
            phase_scheme,
            seed: _,
        } => {
            let spec = GridSpec {
                edge_length,
                phase_scheme,
                ..GridSpec::new(rows, cols)
            };
            let net = generate_grid(&spec)?;
            std::fs::write(&out, net.to_json()).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} ({} signals, {} lanes)", out.display(), net.num_signals(), net.num_lanes());
        }
        Command::Trips {
            net,
            rate,
            out,
            prefix_rate,
            seed: _,
        } => {
            let network = read_network(&net)?;
            let spec = TripSpec {
                rate,
                rate_by_prefix: prefix_rate.into_iter().collect::<BTreeMap<_, _>>(),
                ..TripSpec::default()
            };
            let flows = generate_trips(&network, &spec);
            write_json(&out, &flows)?;
            println!("wrote {} ({} flows)", out.display(), flows.len());
        }
        Command::Inspect { net, seed: _ } => {
            print!("{}", inspect(&read_network(&net)?)?);
        }
        Command::RunBaseline(args) => {
            let cfg = loaded(&args)?;
            let r = harness::run_baseline(&cfg)?;
            let s = r.summary;
            println!(
                "episodes {} mean_queue {:.3} mean_delay {:.4} mean_return {:.2} -> {}",
                s.episodes,
                s.mean_queue,
                s.mean_delay,
                s.mean_return,
                cfg.output_dir.display()
            );
        }
        Command::Train(args) => {
            let cfg = loaded(&args)?;
            let summary = harness::train(&cfg)?;
            if let Some((ep, r)) = summary.evaluations.last() {
                println!("last evaluation at episode {ep}: mean_queue {:.3}", r.summary.mean_queue);
            }
            println!(
                "trained {} episodes ({} steps); final checkpoint {}",
                summary.episodes,
                summary.env_steps,
                summary.final_checkpoint.display()
            );
        }
        Command::Eval { run, checkpoint } => {
            let cfg = loaded(&run)?;
            let r = harness::evaluate_checkpoint(&cfg, &checkpoint)?;
            let s = r.summary;
            println!(
                "episodes {} mean_queue {:.3} mean_delay {:.4} mean_return {:.2}",
                s.episodes, s.mean_queue, s.mean_delay, s.mean_return
            );
        }
        Command::Serve { run, bind } => {
            let cfg = loaded(&run)?;
            let env_config = cfg.scenario.env_config(cfg.seed)?;
            let handle = crate::envserver::serve(env_config, &bind)
                .with_context(|| format!("binding {bind}"))?;
            println!("listening on {}", handle.local_addr());
            let (tx, rx) = std::sync::mpsc::channel();
            ctrlc::set_handler(move || {
                let _ = tx.send(());
            })
            .context("installing interrupt handler")?;
            let _ = rx.recv();
            eprintln!("shutting down");
            handle.shutdown();
        }
        Command::Plot { csv, out, x, y, seed: _ } => {
            let svg = harness::plot_csv(&csv, &x, &y)?;
            std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn loaded(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let (cfg, warnings) = args.load()?;
    for w in warnings {
        eprintln!("{w}");
    }
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            1
        }
    }
}
