//! The run configuration file.
//!
//! One `key = value` pair per line. Keys are dotted (`adversary.n`). `#`
//! starts a comment, blank lines are ignored, every key may appear once and
//! unknown keys are errors. Integers are unsigned decimal, lists are
//! comma-separated.
//!
//! ```text
//! # keys and defaults
//! name            = run                 # free text, used in reports
//! protocol        = main                # main | pure_backoff | exp_backoff | poly_backoff
//! gamma           = <float>             # required for poly_backoff only
//! c               = 4
//! c1              = 16
//! c2              = 4
//! horizon         = <int>               # required
//! seed            = 0
//! checkpoints     = <int>, <int>, ...   # ascending, each below horizon
//! channel_choice  = coin                # coin | always_a
//! mode            = event_driven        # event_driven | per_slot
//! jamming.n       = <int>               # both or neither
//! jamming.c       = <int>
//! adversary.kind  = <kind>              # required, see below
//! output.trace    = trace.csv
//! output.metrics  = metrics.json
//! sweep.n         = <int>, ...          # replaces adversary.n per sweep point
//! sweep.seeds     = 1                   # seeds per sweep point
//! sweep.horizon_per_n = <int>           # horizon = value * n at each point
//! ```
//!
//! Adversary kinds and their keys (defaults in parentheses):
//!
//! * `burst`: `n`, `at_step` (0)
//! * `spread`: `n`, `over_steps`
//! * `adaptive`: `n`, `initial_fraction` (0.5), `clump` (2)
//! * `poisson`: `rate`, `until`
//! * `jamming`: `n`, `c` (the top-level `c`)
//! * `batch_start`: `n`, `injected` (n / c1), `over_steps` (2 c1 n)

use std::collections::BTreeMap;
use std::fmt;

use channelwave_core::adversary::AdversaryPolicy;
use channelwave_core::engine::{ChannelChoice, EngineMode, JammingSpec, Protocol, SimConfig};

/// Where and why a configuration was rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    /// 1-based line, when the problem sits on one line.
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ParseError {
    fn at(line: usize, field: &str, message: impl Into<String>) -> Self {
        ParseError {
            line: Some(line),
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        ParseError {
            line: None,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ParseError {}

/// A parsed configuration file: one base run plus optional sweep axes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: SimConfig,
    /// Values of `n` to sweep over; empty means the base `n` only.
    pub sweep_n: Vec<u64>,
    pub seeds_per_point: u64,
    pub horizon_per_n: Option<u64>,
    pub trace_file: String,
    pub metrics_file: String,
}

/// One expanded sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub n: Option<u64>,
    pub config: SimConfig,
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Fields {
    map: BTreeMap<String, Entry>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.line)
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>, ParseError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_u64(&v)
                .map(Some)
                .ok_or_else(|| ParseError::at(line, key, format!("expected an unsigned integer, got `{v}`"))),
        }
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ParseError> {
        Ok(self.u64(key)?.unwrap_or(default))
    }

    fn required_u64(&mut self, key: &str) -> Result<u64, ParseError> {
        self.u64(key)?.ok_or_else(|| ParseError::field(key, "missing"))
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, ParseError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(ParseError::at(
                    line,
                    key,
                    format!("expected a finite number, got `{v}`"),
                )),
            },
        }
    }

    fn u64_list(&mut self, key: &str) -> Result<Option<Vec<u64>>, ParseError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|item| {
                    let item = item.trim();
                    parse_u64(item).ok_or_else(|| {
                        ParseError::at(line, key, format!("expected a list of unsigned integers, got `{item}`"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn word(&mut self, key: &str) -> Option<(usize, String)> {
        self.take(key)
    }
}

fn parse_u64(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn split_lines(text: &str) -> Result<Fields, ParseError> {
    let mut map: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ParseError {
                line: Some(line),
                field: None,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty()
            || !key
                .chars()
                .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '.')
        {
            return Err(ParseError {
                line: Some(line),
                field: None,
                message: format!("malformed key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(ParseError::at(line, key, "empty value"));
        }
        if let Some(prev) = map.get(key) {
            return Err(ParseError::at(
                line,
                key,
                format!("duplicate key (first set on line {})", prev.line),
            ));
        }
        map.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
                used: false,
            },
        );
    }
    Ok(Fields { map })
}

fn parse_protocol(f: &mut Fields) -> Result<Protocol, ParseError> {
    let Some((line, word)) = f.word("protocol") else {
        if let Some(line) = f.line_of("gamma") {
            return Err(ParseError::at(line, "gamma", "only used with protocol = poly_backoff"));
        }
        return Ok(Protocol::Main);
    };
    let protocol = match word.as_str() {
        "main" => Protocol::Main,
        "pure_backoff" => Protocol::PureBackoff,
        "exp_backoff" => Protocol::ExpBackoff,
        "poly_backoff" => {
            let gamma = f
                .f64("gamma")?
                .ok_or_else(|| ParseError::field("gamma", "missing (needed by poly_backoff)"))?;
            Protocol::PolyBackoff { gamma }
        }
        other => {
            return Err(ParseError::at(
                line,
                "protocol",
                format!("unknown protocol `{other}` (expected main, pure_backoff, exp_backoff or poly_backoff)"),
            ))
        }
    };
    if !matches!(protocol, Protocol::PolyBackoff { .. }) {
        if let Some(l) = f.line_of("gamma") {
            return Err(ParseError::at(l, "gamma", "only used with protocol = poly_backoff"));
        }
    }
    Ok(protocol)
}

const ADVERSARY_KEYS: [&str; 9] = [
    "n",
    "at_step",
    "over_steps",
    "initial_fraction",
    "clump",
    "rate",
    "until",
    "c",
    "injected",
];

fn parse_adversary(f: &mut Fields, c: u64, c1: u64) -> Result<AdversaryPolicy, ParseError> {
    let (line, kind) = f
        .word("adversary.kind")
        .ok_or_else(|| ParseError::field("adversary.kind", "missing"))?;
    let allowed: &[&str] = match kind.as_str() {
        "burst" => &["n", "at_step"],
        "spread" => &["n", "over_steps"],
        "adaptive" => &["n", "initial_fraction", "clump"],
        "poisson" => &["rate", "until"],
        "jamming" => &["n", "c"],
        "batch_start" => &["n", "injected", "over_steps"],
        other => {
            return Err(ParseError::at(
                line,
                "adversary.kind",
                format!("unknown kind `{other}` (expected burst, spread, adaptive, poisson, jamming or batch_start)"),
            ))
        }
    };
    for key in ADVERSARY_KEYS {
        let full = format!("adversary.{key}");
        if !allowed.contains(&key) {
            if let Some(l) = f.line_of(&full) {
                return Err(ParseError::at(l, &full, format!("not used by adversary.kind = {kind}")));
            }
        }
    }
    let policy = match kind.as_str() {
        "burst" => AdversaryPolicy::Burst {
            n: f.required_u64("adversary.n")?,
            at_step: f.u64_or("adversary.at_step", 0)?,
        },
        "spread" => AdversaryPolicy::Spread {
            n: f.required_u64("adversary.n")?,
            over_steps: f.required_u64("adversary.over_steps")?,
        },
        "adaptive" => AdversaryPolicy::AdaptiveReactive {
            n: f.required_u64("adversary.n")?,
            initial_fraction: f.f64("adversary.initial_fraction")?.unwrap_or(0.5),
            clump: f.u64_or("adversary.clump", 2)?,
        },
        "poisson" => AdversaryPolicy::PoissonLike {
            rate: f
                .f64("adversary.rate")?
                .ok_or_else(|| ParseError::field("adversary.rate", "missing"))?,
            until: f.required_u64("adversary.until")?,
        },
        "jamming" => AdversaryPolicy::JammingLowerBound {
            n: f.required_u64("adversary.n")?,
            c: f.u64_or("adversary.c", c)?,
        },
        _ => {
            let n = f.required_u64("adversary.n")?;
            AdversaryPolicy::BatchStart {
                n,
                injected: f.u64_or("adversary.injected", n / c1.max(1))?,
                over_steps: f.u64_or("adversary.over_steps", 2 * c1 * n)?,
            }
        }
    };
    Ok(policy)
}

fn output_name(f: &mut Fields, key: &str, default: &str) -> Result<String, ParseError> {
    match f.word(key) {
        None => Ok(default.to_string()),
        Some((line, v)) => {
            if v.contains(['/', '\\']) || v == "." || v == ".." {
                Err(ParseError::at(
                    line,
                    key,
                    "must be a plain file name (files go to --out)",
                ))
            } else {
                Ok(v)
            }
        }
    }
}

/// Parses a configuration file's contents. Nothing is read from the
/// environment here; see [`apply_seed_override`].
pub fn parse(text: &str) -> Result<ExperimentSpec, ParseError> {
    let mut f = split_lines(text)?;
    let name = f.word("name").map(|(_, v)| v).unwrap_or_else(|| "run".to_string());
    let protocol = parse_protocol(&mut f)?;
    let c = f.u64_or("c", 4)?;
    let c1 = f.u64_or("c1", 16)?;
    let c2 = f.u64_or("c2", 4)?;
    let adversary = parse_adversary(&mut f, c, c1)?;
    let horizon = f.required_u64("horizon")?;
    let seed = f.u64_or("seed", 0)?;
    let mut base = SimConfig::new(protocol, adversary, horizon, seed);
    base.c = c;
    base.c1 = c1;
    base.c2 = c2;
    base.checkpoints = f.u64_list("checkpoints")?.unwrap_or_default();
    if let Some((line, v)) = f.word("channel_choice") {
        base.channel_choice = match v.as_str() {
            "coin" => ChannelChoice::Coin,
            "always_a" => ChannelChoice::AlwaysA,
            _ => {
                return Err(ParseError::at(
                    line,
                    "channel_choice",
                    format!("expected coin or always_a, got `{v}`"),
                ))
            }
        };
    }
    if let Some((line, v)) = f.word("mode") {
        base.mode = match v.as_str() {
            "event_driven" => EngineMode::EventDriven,
            "per_slot" => EngineMode::PerSlotReference,
            _ => {
                return Err(ParseError::at(
                    line,
                    "mode",
                    format!("expected event_driven or per_slot, got `{v}`"),
                ))
            }
        };
    }
    base.jamming = match (f.u64("jamming.n")?, f.u64("jamming.c")?) {
        (Some(n), Some(c)) => Some(JammingSpec { n, c }),
        (None, None) => None,
        (Some(_), None) => return Err(ParseError::field("jamming.c", "missing (jamming.n is set)")),
        (None, Some(_)) => return Err(ParseError::field("jamming.n", "missing (jamming.c is set)")),
    };
    let trace_file = output_name(&mut f, "output.trace", "trace.csv")?;
    let metrics_file = output_name(&mut f, "output.metrics", "metrics.json")?;
    let sweep_n = f.u64_list("sweep.n")?.unwrap_or_default();
    let seeds_per_point = f.u64_or("sweep.seeds", 1)?;
    let horizon_per_n = f.u64("sweep.horizon_per_n")?;

    if let Some((key, e)) = f.map.iter().find(|(_, e)| !e.used) {
        return Err(ParseError::at(e.line, key, "unknown key"));
    }
    if horizon == 0 {
        return Err(ParseError::at(
            f.line_of("horizon").unwrap_or(0),
            "horizon",
            "must be at least 1",
        ));
    }
    if seeds_per_point == 0 {
        return Err(ParseError::at(
            f.line_of("sweep.seeds").unwrap_or(0),
            "sweep.seeds",
            "must be at least 1",
        ));
    }
    if !sweep_n.is_empty() && policy_n(&base.adversary).is_none() {
        return Err(ParseError::at(
            f.line_of("sweep.n").unwrap_or(0),
            "sweep.n",
            "the poisson adversary has no n to sweep",
        ));
    }
    if trace_file == metrics_file {
        return Err(ParseError::field("output.metrics", "same file name as output.trace"));
    }
    base.validate().map_err(|e| ParseError {
        line: None,
        field: None,
        message: format!("invalid configuration: {e}"),
    })?;
    Ok(ExperimentSpec {
        name,
        base,
        sweep_n,
        seeds_per_point,
        horizon_per_n,
        trace_file,
        metrics_file,
    })
}

/// Replaces the base seed with the value of `CHANNELWAVE_SEED`, if given.
pub fn apply_seed_override(spec: &mut ExperimentSpec, value: Option<&str>) -> Result<(), ParseError> {
    apply_seed_override_config(&mut spec.base, value)
}

pub fn apply_seed_override_config(config: &mut SimConfig, value: Option<&str>) -> Result<(), ParseError> {
    if let Some(v) = value {
        config.seed = parse_u64(v.trim())
            .ok_or_else(|| ParseError::field("CHANNELWAVE_SEED", format!("expected an unsigned integer, got `{v}`")))?;
    }
    Ok(())
}

/// The player count of a policy, if it has one.
pub fn policy_n(policy: &AdversaryPolicy) -> Option<u64> {
    match *policy {
        AdversaryPolicy::Burst { n, .. }
        | AdversaryPolicy::Spread { n, .. }
        | AdversaryPolicy::AdaptiveReactive { n, .. }
        | AdversaryPolicy::JammingLowerBound { n, .. }
        | AdversaryPolicy::BatchStart { n, .. } => Some(n),
        AdversaryPolicy::PoissonLike { .. } => None,
    }
}

/// The same policy with `n` players. Spread and batch-start windows scale
/// with `n`, injected batch-start arrivals too.
pub fn with_n(policy: &AdversaryPolicy, n: u64) -> Option<AdversaryPolicy> {
    let old = policy_n(policy)?;
    let scale = |x: u64| {
        if old == 0 {
            x
        } else {
            (x as u128 * n as u128 / old as u128) as u64
        }
    };
    Some(match *policy {
        AdversaryPolicy::Burst { at_step, .. } => AdversaryPolicy::Burst { n, at_step },
        AdversaryPolicy::Spread { over_steps, .. } => AdversaryPolicy::Spread {
            n,
            over_steps: scale(over_steps).max(1),
        },
        AdversaryPolicy::AdaptiveReactive {
            initial_fraction,
            clump,
            ..
        } => AdversaryPolicy::AdaptiveReactive {
            n,
            initial_fraction,
            clump,
        },
        AdversaryPolicy::JammingLowerBound { c, .. } => AdversaryPolicy::JammingLowerBound { n, c },
        AdversaryPolicy::BatchStart {
            injected, over_steps, ..
        } => AdversaryPolicy::BatchStart {
            n,
            injected: scale(injected),
            over_steps: scale(over_steps).max(1),
        },
        AdversaryPolicy::PoissonLike { .. } => unreachable!(),
    })
}

impl ExperimentSpec {
    /// Every sweep point, `n` outermost, seeds `seed, seed + 1, ...`
    /// innermost. `seeds` overrides `sweep.seeds`.
    pub fn points(&self, seeds: Option<u64>) -> Result<Vec<SweepPoint>, ParseError> {
        let seeds = seeds.unwrap_or(self.seeds_per_point);
        let ns: Vec<Option<u64>> = if self.sweep_n.is_empty() {
            vec![policy_n(&self.base.adversary)]
        } else {
            self.sweep_n.iter().map(|&n| Some(n)).collect()
        };
        let mut out = Vec::new();
        for n in ns {
            let mut cfg = self.base.clone();
            if let Some(n) = n {
                cfg.adversary = with_n(&self.base.adversary, n).expect("checked at parse time");
                if let Some(h) = self.horizon_per_n {
                    cfg.horizon = h.saturating_mul(n);
                }
            }
            cfg.validate().map_err(|e| ParseError {
                line: None,
                field: Some("sweep.n".to_string()),
                message: format!("point n = {}: {e}", n.unwrap_or(0)),
            })?;
            for i in 0..seeds {
                out.push(SweepPoint {
                    n,
                    config: cfg.with_seed(self.base.seed.wrapping_add(i)),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "protocol = main\nadversary.kind = burst\nadversary.n = 16\nadversary.at_step = 0\nhorizon = 4096\nseed = 1\n";

    #[test]
    fn minimal_config() {
        let spec = parse(MINIMAL).unwrap();
        assert_eq!(
            spec.base,
            SimConfig::main_protocol(AdversaryPolicy::burst(16, 0), 4096, 1)
        );
        assert_eq!(spec.trace_file, "trace.csv");
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# header\n\n{MINIMAL}c2 = 6   # trailing\n");
        assert_eq!(parse(&text).unwrap().base.c2, 6);
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let err = parse("adversary.kind = burst\nadversary.n = lots\nhorizon = 10\n").unwrap_err();
        assert_eq!((err.line, err.field.as_deref()), (Some(2), Some("adversary.n")));
        let err = parse(&format!("{MINIMAL}colour = red\n")).unwrap_err();
        assert_eq!((err.line, err.field.as_deref()), (Some(7), Some("colour")));
        let err = parse(&format!("{MINIMAL}seed = 2\n")).unwrap_err();
        assert!(err.message.contains("duplicate"));
        let err = parse("adversary.kind = burst\nhorizon = 10\n").unwrap_err();
        assert_eq!(err.field.as_deref(), Some("adversary.n"));
        let err = parse(&format!("{MINIMAL}adversary.rate = 0.1\n")).unwrap_err();
        assert_eq!(err.line, Some(7));
        let err = parse("just words\n").unwrap_err();
        assert_eq!(err.line, Some(1));
        assert!(err.to_string().starts_with("line 1: "));
    }

    #[test]
    fn every_kind_parses() {
        for body in [
            "adversary.kind = spread\nadversary.n = 10\nadversary.over_steps = 100",
            "adversary.kind = adaptive\nadversary.n = 10\nadversary.clump = 3",
            "adversary.kind = poisson\nadversary.rate = 0.01\nadversary.until = 50",
            "adversary.kind = jamming\nadversary.n = 64",
            "adversary.kind = batch_start\nadversary.n = 64",
        ] {
            parse(&format!("{body}\nhorizon = 100\n")).unwrap();
        }
        let spec = parse("adversary.kind = batch_start\nadversary.n = 64\nhorizon = 100\n").unwrap();
        assert_eq!(
            spec.base.adversary,
            AdversaryPolicy::BatchStart {
                n: 64,
                injected: 4,
                over_steps: 2048
            }
        );
    }

    #[test]
    fn semantic_errors_are_reported() {
        assert!(parse("adversary.kind = burst\nadversary.n = 4\nhorizon = 100\nc = 1\n").is_err());
        assert!(parse("adversary.kind = burst\nadversary.n = 4\nhorizon = 100\ncheckpoints = 5, 200\n").is_err());
        assert!(parse("adversary.kind = burst\nadversary.n = 4\nhorizon = 0\n").is_err());
        assert!(parse("protocol = poly_backoff\nadversary.kind = burst\nadversary.n = 4\nhorizon = 9\n").is_err());
        assert!(parse("gamma = 1\nadversary.kind = burst\nadversary.n = 4\nhorizon = 9\n").is_err());
        assert!(parse("adversary.kind = burst\nadversary.n = 4\nhorizon = 9\njamming.n = 8\n").is_err());
        assert!(parse("adversary.kind = burst\nadversary.n = 4\nhorizon = 9\noutput.trace = ../x\n").is_err());
    }

    #[test]
    fn sweep_expansion() {
        let text = "adversary.kind = spread\nadversary.n = 100\nadversary.over_steps = 400\nhorizon = 10\nseed = 7\nsweep.n = 50, 200\nsweep.seeds = 3\nsweep.horizon_per_n = 8\n";
        let spec = parse(text).unwrap();
        let pts = spec.points(None).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].config.adversary, AdversaryPolicy::spread(50, 200));
        assert_eq!(pts[5].config.adversary, AdversaryPolicy::spread(200, 800));
        assert_eq!((pts[5].config.horizon, pts[5].config.seed), (1600, 9));
        assert_eq!(spec.points(Some(1)).unwrap().len(), 2);
    }

    #[test]
    fn seed_override() {
        let mut spec = parse(MINIMAL).unwrap();
        apply_seed_override(&mut spec, Some("42")).unwrap();
        assert_eq!(spec.base.seed, 42);
        assert!(apply_seed_override(&mut spec, Some("-1")).is_err());
        apply_seed_override(&mut spec, None).unwrap();
        assert_eq!(spec.base.seed, 42);
    }
}
