//! Subcommands. Exit statuses: 0 success, 1 a verification criterion
//! failed, 2 bad configuration or arguments, 3 an I/O failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use channelwave_core::engine::SimConfig;
use channelwave_core::run;
use clap::{Args, Parser, Subcommand};

use crate::config::{self, ExperimentSpec};
use crate::output::{self, RunSummary};
use crate::suites::{self, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "CHANNELWAVE_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "channelwave",
    version,
    about = "Contention resolution simulator for a slotted channel without collision detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one configuration; write the step trace CSV and a metrics JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run every sweep point of a configuration; write one summary row each.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        exec: Exec,
    },
    /// Run a statistical suite and print its verdict.
    Verify {
        /// Suite name, or `all`.
        #[arg(long)]
        suite: String,
        #[command(flatten)]
        exec: Exec,
    },
    /// Throughput, attempts and sojourn per protocol, n and seed.
    Compare {
        /// Comma-separated: main, pure_backoff, exp_backoff, poly_backoff[:gamma].
        #[arg(long, value_delimiter = ',')]
        protocols: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        /// Base configuration; defaults to a burst of n at step 0.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        exec: Exec,
    },
}

#[derive(Args, Debug, Clone, Copy)]
pub struct Exec {
    /// Seeds per point.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

/// Runs a parsed command. `seed_env` is the value of [`SEED_ENV`].
pub fn execute(cli: Cli, seed_env: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Run { config, out: dir } => cmd_run(&config, &dir, seed_env, out, err),
        Command::Sweep { config, out: dir, exec } => cmd_sweep(&config, &dir, exec, seed_env, out, err),
        Command::Verify { suite, exec } => cmd_verify(&suite, exec, out, err),
        Command::Compare {
            protocols,
            n,
            config,
            out: dir,
            exec,
        } => cmd_compare(&protocols, &n, config.as_deref(), &dir, exec, seed_env, out, err),
    }
}

fn load(path: &Path, seed_env: Option<&str>, err: &mut dyn Write) -> Result<ExperimentSpec, i32> {
    let text = fs::read_to_string(path).map_err(|e| {
        let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
        EXIT_IO
    })?;
    let mut spec = config::parse(&text).map_err(|e| {
        let _ = writeln!(err, "error: {}: {e}", path.display());
        EXIT_CONFIG
    })?;
    config::apply_seed_override(&mut spec, seed_env).map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_CONFIG
    })?;
    Ok(spec)
}

fn write_outputs(dir: &Path, files: &[(&str, &[u8])], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match output::write_all(dir, files) {
        Ok(()) => {
            for (name, _) in files {
                let _ = writeln!(out, "wrote {}", dir.join(name).display());
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: writing to {}: {e}", dir.display());
            EXIT_IO
        }
    }
}

pub fn cmd_run(path: &Path, dir: &Path, seed_env: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let spec = match load(path, seed_env, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let trace = match run(&spec.base) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let csv = output::trace_csv(&trace);
    let json = output::metrics_json(&spec.name, &spec.base, &trace);
    write_outputs(dir, &[(&spec.trace_file, &csv), (&spec.metrics_file, &json)], out, err)
}

fn summarize(points: &[(Option<u64>, SimConfig)], parallel: usize) -> Result<Vec<RunSummary>, String> {
    suites::par_map(points, parallel, |(n, cfg)| {
        run(cfg)
            .map(|t| RunSummary::of(cfg, *n, &t))
            .map_err(|e| format!("n = {}, seed {}: {e}", n.unwrap_or(0), cfg.seed))
    })
    .into_iter()
    .collect()
}

pub fn cmd_sweep(
    path: &Path,
    dir: &Path,
    exec: Exec,
    seed_env: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let spec = match load(path, seed_env, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let points = match spec.points(exec.seeds) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let points: Vec<_> = points.into_iter().map(|p| (p.n, p.config)).collect();
    match summarize(&points, exec.parallel) {
        Ok(rows) => write_outputs(dir, &[("sweep.csv", &output::sweep_csv(&rows))], out, err),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}

pub fn cmd_verify(name: &str, exec: Exec, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let chosen: Vec<Suite> = if name == "all" {
        Suite::ALL.to_vec()
    } else if let Some(s) = Suite::from_name(name) {
        vec![s]
    } else {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        let _ = writeln!(err, "error: unknown suite `{name}` (known: {}, all)", names.join(", "));
        return EXIT_CONFIG;
    };
    let mut all_pass = true;
    for suite in chosen {
        let seeds = exec.seeds.map(|s| s as usize);
        if let Some(w) = seeds.and_then(|s| suite.underpowered(s)) {
            let _ = writeln!(err, "{w}");
        }
        let c = suite.run(seeds, exec.parallel);
        all_pass &= c.pass;
        let _ = writeln!(out, "{} [{}]", c, suite.name());
    }
    if all_pass {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_compare(
    protocols: &[String],
    ns: &[u64],
    base: Option<&Path>,
    dir: &Path,
    exec: Exec,
    seed_env: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let names: Vec<&str> = protocols.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        let _ = writeln!(err, "error: --protocols is empty");
        return EXIT_CONFIG;
    }
    let mut parsed = Vec::new();
    for name in names {
        match output::parse_protocol_name(name) {
            Some(p) => parsed.push(p),
            None => {
                let _ = writeln!(err, "error: unknown protocol `{name}`");
                return EXIT_CONFIG;
            }
        }
    }
    if ns.is_empty() || ns.contains(&0) {
        let _ = writeln!(err, "error: --n needs at least one positive value");
        return EXIT_CONFIG;
    }
    let (template, horizon_per_n) = match base {
        Some(path) => match load(path, seed_env, err) {
            Ok(spec) if config::policy_n(&spec.base.adversary).is_some() => {
                (spec.base, spec.horizon_per_n.unwrap_or(64))
            }
            Ok(_) => {
                let _ = writeln!(
                    err,
                    "error: {}: the poisson adversary has no n to compare over",
                    path.display()
                );
                return EXIT_CONFIG;
            }
            Err(code) => return code,
        },
        None => {
            let mut cfg = SimConfig::main_protocol(output::compare_policy(1), 64, 0);
            if let Err(e) = config::apply_seed_override_config(&mut cfg, seed_env) {
                let _ = writeln!(err, "error: {e}");
                return EXIT_CONFIG;
            }
            (cfg, 64)
        }
    };
    let seeds = exec.seeds.unwrap_or(1);
    let mut points = Vec::new();
    for &protocol in &parsed {
        for &n in ns {
            let mut cfg = template.clone();
            cfg.protocol = protocol;
            cfg.adversary = config::with_n(&template.adversary, n).expect("checked above");
            cfg.horizon = horizon_per_n.saturating_mul(n);
            cfg.checkpoints.clear();
            if let Err(e) = cfg.validate() {
                let _ = writeln!(err, "error: {} at n = {n}: {e}", output::protocol_name(protocol));
                return EXIT_CONFIG;
            }
            for s in 0..seeds {
                points.push((Some(n), cfg.with_seed(template.seed.wrapping_add(s))));
            }
        }
    }
    match summarize(&points, exec.parallel) {
        Ok(rows) => write_outputs(dir, &[("compare.csv", &output::compare_csv(&rows))], out, err),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}
