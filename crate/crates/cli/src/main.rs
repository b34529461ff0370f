use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nashflow::config::Config;
use nashflow::Error;

mod commands;

#[derive(Parser)]
#[command(name = "nashflow", version, about = "Distributed Nash-equilibrium seeking feedback control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scenario, simulate the closed loop, write trajectory CSV and summary.
    Run(Common),
    /// Compare the flow against the exact equilibrium and report pass/fail.
    Verify(Common),
    /// Solve the scenario's game exactly and print the equilibrium.
    Oracle(Common),
    /// Write the fully resolved configuration (with game data) as TOML.
    ExportScenario(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// opf | thermal | custom
    #[arg(long)]
    scenario: Option<String>,
    /// 1 (linear plant) or 2 (strict-feedback plant)
    #[arg(long)]
    algorithm: Option<u8>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// euler | extragradient
    #[arg(long)]
    integrator: Option<String>,
    /// z_domain | x_domain
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    pole: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k_i2: Option<f64>,
    /// path | star | complete | random | file
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    graph_file: Option<PathBuf>,
    /// key=value, applied after the file and the flags above (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (run) or file (export-scenario).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<Config, Error> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let mut ov = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                ov.push(format!("{k}={v}"));
            }
        };
        let quoted = |s: &Option<String>| s.as_ref().map(|s| format!("'{s}'"));
        push("run.scenario", quoted(&self.scenario));
        push("run.algorithm", self.algorithm.map(|v| v.to_string()));
        push("run.h", self.h.map(|v| format!("{v:?}")));
        push("run.horizon", self.horizon.map(|v| format!("{v:?}")));
        push("run.record_every", self.record_every.map(|v| v.to_string()));
        push("run.integrator", quoted(&self.integrator));
        push("run.seed", self.seed.map(|v| v.to_string()));
        push("thermal.mode", quoted(&self.mode));
        push("opf.margin", self.margin.map(|v| format!("{v:?}")));
        push("opf.pole", self.pole.map(|v| format!("{v:?}")));
        push("thermal.k1", self.k1.map(|v| format!("{v:?}")));
        push("thermal.k_i2", self.k_i2.map(|v| format!("{v:?}")));
        push("graph.kind", quoted(&self.graph));
        push("graph.nodes", self.nodes.map(|v| v.to_string()));
        push("graph.file", self.graph_file.as_ref().map(|p| format!("'{}'", p.display())));
        if self.graph_file.is_some() && self.graph.is_none() {
            ov.push("graph.kind='file'".into());
        }
        ov.extend(self.overrides.iter().cloned());
        cfg.apply_overrides(&ov)?;
        if self.graph_file.is_some() {
            // flag paths are relative to the working directory
            cfg.base_dir = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("NASHFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("NASHFLOW_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Run(c) => c.resolve().and_then(|cfg| commands::run(&cfg, c.out.as_deref())),
        Command::Verify(c) => c.resolve().and_then(|cfg| commands::verify(&cfg)),
        Command::Oracle(c) => c.resolve().and_then(|cfg| commands::oracle(&cfg)),
        Command::ExportScenario(c) => c.resolve().and_then(|cfg| commands::export(&cfg, c.out.as_deref())),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::BlowUp(b) = &e {
                eprintln!("last {} samples before abort:", b.last_samples.len());
                for s in &b.last_samples {
                    eprintln!("  t={} kkt={:e} V={:?} err_phys={:?} tracking={:e}", s.t, s.kkt, s.lyapunov, s.err_phys, s.tracking);
                }
                eprintln!("hint: reduce h or increase the epsilon margin");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
