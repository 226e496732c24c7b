//! File formats.
//!
//! CSV files start with one `# schema: ...` comment line naming the format
//! and its columns; the column set and order never change within a schema
//! version. Floats are written in the shortest form that parses back to the
//! same `f64` (Rust's `Display`), `inf` marks a ratio with a zero
//! denominator. JSON uses the same float rule and `null` for those ratios.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use channelwave_core::adversary::AdversaryPolicy;
use channelwave_core::engine::{Protocol, SimConfig};
use channelwave_core::metrics::{self, ThroughputReport};
use channelwave_core::{ChannelId, SimTrace};
use serde::Serialize;

pub const TRACE_SCHEMA: &str = "channelwave-trace/1";
pub const TRACE_COLUMNS: [&str; 7] = [
    "step",
    "channel",
    "outcome",
    "arrivals",
    "population",
    "attempts_cum",
    "successes_cum",
];
pub const SWEEP_SCHEMA: &str = "channelwave-sweep/1";
pub const SWEEP_COLUMNS: [&str; 10] = [
    "n",
    "seed",
    "arrivals",
    "active",
    "throughput",
    "successes",
    "attempts",
    "attempts_per_player",
    "max_sojourn",
    "violations",
];
pub const COMPARE_SCHEMA: &str = "channelwave-compare/1";
pub const COMPARE_COLUMNS: [&str; 6] = [
    "protocol",
    "n",
    "seed",
    "throughput",
    "attempts_per_player",
    "max_sojourn",
];
pub const METRICS_SCHEMA: &str = "channelwave-metrics/1";

pub fn protocol_name(p: Protocol) -> String {
    match p {
        Protocol::Main => "main".to_string(),
        Protocol::PureBackoff => "pure_backoff".to_string(),
        Protocol::ExpBackoff => "exp_backoff".to_string(),
        Protocol::PolyBackoff { gamma } => format!("poly_backoff:{gamma}"),
    }
}

/// Inverse of [`protocol_name`]; `poly_backoff` alone means `gamma = 1`.
pub fn parse_protocol_name(s: &str) -> Option<Protocol> {
    match s {
        "main" => Some(Protocol::Main),
        "pure_backoff" => Some(Protocol::PureBackoff),
        "exp_backoff" => Some(Protocol::ExpBackoff),
        "poly_backoff" => Some(Protocol::PolyBackoff { gamma: 1.0 }),
        _ => {
            let gamma: f64 = s.strip_prefix("poly_backoff:")?.parse().ok()?;
            (gamma.is_finite() && gamma > 0.0).then_some(Protocol::PolyBackoff { gamma })
        }
    }
}

fn schema_line(schema: &str, columns: &[&str]) -> String {
    format!("# schema: {schema} columns={}\n", columns.join(","))
}

fn channel_label(c: ChannelId) -> &'static str {
    match c {
        ChannelId::A => "A",
        ChannelId::B => "B",
    }
}

fn float(x: f64) -> String {
    x.to_string()
}

fn csv_bytes(schema: &str, columns: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = schema_line(schema, columns).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns).expect("writing to memory");
        for row in rows {
            w.write_record(&row).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
    }
    out
}

/// One row per step. `population` counts players after the step.
pub fn trace_csv(trace: &SimTrace) -> Vec<u8> {
    let mut attempts = 0u64;
    let mut successes = 0u64;
    let rows = trace.rows.iter().enumerate().map(move |(s, r)| {
        attempts += r.broadcasters;
        let won = r.kind.is_success() as u64;
        successes += won;
        vec![
            s.to_string(),
            channel_label(ChannelId::of_step(s as u64)).to_string(),
            r.kind.label().to_string(),
            r.arrivals.to_string(),
            (r.population_before + r.arrivals - won).to_string(),
            attempts.to_string(),
            successes.to_string(),
        ]
    });
    csv_bytes(TRACE_SCHEMA, &TRACE_COLUMNS, rows)
}

#[derive(Serialize)]
struct ThroughputJson {
    t: u64,
    arrivals: u64,
    active: u64,
    ratio: Option<f64>,
}

impl From<&ThroughputReport> for ThroughputJson {
    fn from(r: &ThroughputReport) -> Self {
        ThroughputJson {
            t: r.t,
            arrivals: r.arrivals,
            active: r.active,
            ratio: (!r.is_sentinel()).then_some(r.ratio),
        }
    }
}

#[derive(Serialize)]
struct AttemptsJson {
    t: u64,
    total_attempts: u64,
    attempts_per_arrival: Option<f64>,
    max_attempts_per_player: u64,
}

#[derive(Serialize)]
struct MetricsJson<'a> {
    schema: &'a str,
    name: &'a str,
    protocol: String,
    adversary: &'a str,
    seed: u64,
    horizon: u64,
    throughput: Vec<ThroughputJson>,
    attempts: AttemptsJson,
    arrivals: u64,
    successes: u64,
    final_population: u64,
    max_sojourn: u64,
    batch_episodes: usize,
    property_violations: u64,
}

/// Checkpoints from the config plus the last step.
pub fn checkpoints(config: &SimConfig) -> Vec<u64> {
    let mut cps = config.checkpoints.clone();
    let last = config.horizon.saturating_sub(1);
    if cps.last() != Some(&last) {
        cps.push(last);
    }
    cps
}

pub fn metrics_json(name: &str, config: &SimConfig, trace: &SimTrace) -> Vec<u8> {
    let cps = checkpoints(config);
    let last = *cps.last().unwrap();
    let att = metrics::attempts_summary(trace, last);
    let doc = MetricsJson {
        schema: METRICS_SCHEMA,
        name,
        protocol: protocol_name(config.protocol),
        adversary: config.adversary.label(),
        seed: trace.seed,
        horizon: trace.horizon,
        throughput: metrics::throughput_series(trace, &cps)
            .iter()
            .map(ThroughputJson::from)
            .collect(),
        attempts: AttemptsJson {
            t: last,
            total_attempts: att.total_attempts,
            attempts_per_arrival: att.attempts_per_arrival.is_finite().then_some(att.attempts_per_arrival),
            max_attempts_per_player: trace.players.iter().map(|p| p.attempts).max().unwrap_or(0),
        },
        arrivals: trace.total_arrivals(),
        successes: trace.total_successes(),
        final_population: trace.final_population(),
        max_sojourn: metrics::max_sojourn(trace),
        batch_episodes: trace.episodes.len(),
        property_violations: trace.violations.total(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("plain data serializes");
    out.push(b'\n');
    out
}

/// Per-run numbers for sweep and compare tables.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub protocol: Protocol,
    pub n: Option<u64>,
    pub seed: u64,
    pub arrivals: u64,
    pub active: u64,
    pub throughput: f64,
    pub successes: u64,
    pub attempts: u64,
    pub attempts_per_player: f64,
    pub max_sojourn: u64,
    pub violations: u64,
}

impl RunSummary {
    pub fn of(config: &SimConfig, n: Option<u64>, trace: &SimTrace) -> Self {
        let last = config.horizon.saturating_sub(1);
        let thr = metrics::implicit_throughput(trace, last);
        let att = metrics::attempts_summary(trace, last);
        RunSummary {
            protocol: config.protocol,
            n,
            seed: config.seed,
            arrivals: thr.arrivals,
            active: thr.active,
            throughput: thr.ratio,
            successes: trace.total_successes(),
            attempts: att.total_attempts,
            attempts_per_player: att.attempts_per_arrival,
            max_sojourn: metrics::max_sojourn(trace),
            violations: trace.violations.total(),
        }
    }
}

fn opt(n: Option<u64>) -> String {
    n.map(|n| n.to_string()).unwrap_or_default()
}

pub fn sweep_csv(rows: &[RunSummary]) -> Vec<u8> {
    csv_bytes(
        SWEEP_SCHEMA,
        &SWEEP_COLUMNS,
        rows.iter().map(|r| {
            vec![
                opt(r.n),
                r.seed.to_string(),
                r.arrivals.to_string(),
                r.active.to_string(),
                float(r.throughput),
                r.successes.to_string(),
                r.attempts.to_string(),
                float(r.attempts_per_player),
                r.max_sojourn.to_string(),
                r.violations.to_string(),
            ]
        }),
    )
}

pub fn compare_csv(rows: &[RunSummary]) -> Vec<u8> {
    csv_bytes(
        COMPARE_SCHEMA,
        &COMPARE_COLUMNS,
        rows.iter().map(|r| {
            vec![
                protocol_name(r.protocol),
                opt(r.n),
                r.seed.to_string(),
                float(r.throughput),
                float(r.attempts_per_player),
                r.max_sojourn.to_string(),
            ]
        }),
    )
}

/// The default workload for `compare`: a burst of `n` at step 0.
pub fn compare_policy(n: u64) -> AdversaryPolicy {
    AdversaryPolicy::burst(n, 0)
}

/// Writes every file or none: each goes to a temporary sibling first and is
/// renamed into place once all temporaries exist.
pub fn write_all(dir: &Path, files: &[(&str, &[u8])]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::new();
    let result = (|| {
        for (name, bytes) in files {
            let tmp = dir.join(format!(".{name}.partial"));
            let mut f = fs::File::create(&tmp)?;
            staged.push(tmp.clone());
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        for (tmp, (name, _)) in staged.iter().zip(files) {
            fs::rename(tmp, dir.join(name))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for tmp in &staged {
            let _ = fs::remove_file(tmp);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use channelwave_core::run;

    #[test]
    fn trace_csv_shape() {
        let cfg = SimConfig::main_protocol(AdversaryPolicy::burst(4, 0), 300, 1);
        let t = run(&cfg).unwrap();
        let text = String::from_utf8(trace_csv(&t)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "# schema: channelwave-trace/1 columns=step,channel,outcome,arrivals,population,attempts_cum,successes_cum"
        );
        assert_eq!(lines[1], TRACE_COLUMNS.join(","));
        assert_eq!(lines.len(), 302);
        assert!(lines[2].starts_with("0,B,"));
        let last: Vec<&str> = lines[301].split(',').collect();
        assert_eq!(last[0], "299");
        assert_eq!(last[5], t.total_attempts().to_string());
        assert_eq!(last[6], t.total_successes().to_string());
        assert_eq!(last[4], t.final_population().to_string());
    }

    #[test]
    fn metrics_json_roundtrips_floats() {
        let mut cfg = SimConfig::main_protocol(AdversaryPolicy::spread(30, 90), 1000, 2);
        cfg.checkpoints = vec![0, 10, 500];
        let t = run(&cfg).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&metrics_json("x", &cfg, &t)).unwrap();
        let series = v["throughput"].as_array().unwrap();
        assert_eq!(series.len(), 4);
        let r = metrics::implicit_throughput(&t, 500);
        assert_eq!(series[2]["ratio"].as_f64().unwrap(), r.ratio);
        assert_eq!(v["attempts"]["total_attempts"].as_u64().unwrap(), t.total_attempts());
    }

    #[test]
    fn sentinel_ratio_is_null() {
        let mut cfg = SimConfig::main_protocol(AdversaryPolicy::burst(3, 50), 100, 2);
        cfg.checkpoints = vec![10];
        let t = run(&cfg).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&metrics_json("x", &cfg, &t)).unwrap();
        assert!(v["throughput"][0]["ratio"].is_null());
    }

    #[test]
    fn protocol_names_roundtrip() {
        for p in [
            Protocol::Main,
            Protocol::PureBackoff,
            Protocol::ExpBackoff,
            Protocol::PolyBackoff { gamma: 0.75 },
        ] {
            assert_eq!(parse_protocol_name(&protocol_name(p)), Some(p));
        }
        assert_eq!(parse_protocol_name("poly_backoff:-1"), None);
        assert_eq!(parse_protocol_name("aloha"), None);
    }

    #[test]
    fn write_all_places_every_file() {
        let dir = tempfile::tempdir().unwrap();
        write_all(dir.path(), &[("a.csv", b"1"), ("b.json", b"2")]).unwrap();
        assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), b"1");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
