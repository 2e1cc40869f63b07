// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration: a TOML document with `[geometry]`, `[protocol]`,
//! optional `[sweep]` and optional `[output]` sections.
//!
//! ```toml
//! [geometry]
//! kind = "chain"
//! n = 4
//!
//! [protocol]
//! scheme = "pulse_sequence"
//! tau = 0.01
//! cycles = 3
//!
//! [sweep]
//! parameter = "tau"
//! values = [0.004, 0.01, 0.02, 0.04]
//! ```

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::protocols::{PulseModel, SchemeKind};

/// Parse or validation failure, located by line and key when known.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(line), Some(key)) => write!(f, "line {line}, key `{key}`: {}", self.message),
            (Some(line), None) => write!(f, "line {line}: {}", self.message),
            (None, Some(key)) => write!(f, "key `{key}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Chain,
    Lattice,
    Sites,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometrySpec {
    Chain { n: usize, spacing: f64 },
    Lattice { rows: usize, cols: usize, spacing: f64 },
    Sites { positions: Vec<[f64; 3]> },
}

impl GeometrySpec {
    pub fn n_sites(&self) -> usize {
        match self {
            GeometrySpec::Chain { n, .. } => *n,
            GeometrySpec::Lattice { rows, cols, .. } => rows * cols,
            GeometrySpec::Sites { positions } => positions.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryBlock {
    pub spec: GeometrySpec,
    pub gammas: Option<Vec<f64>>,
    /// Static field direction; normalized when couplings are built.
    pub field: [f64; 3],
    /// Coupling prefactor `g`.
    pub coupling: f64,
    /// Keep only couplings between consecutive sites.
    pub nearest_neighbour: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Ground,
    Excited,
    PlusX,
    RandomPure,
    RandomMixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StorageParams {
    pub scheme: SchemeKind,
    pub tau: f64,
    pub cycles: usize,
    pub pulse_model: PulseModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcedureKind {
    Storage,
    FrozenSubsystem,
    TransferAndStore,
    ImpuritySwitch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "procedure", rename_all = "snake_case")]
pub enum ProtocolSpec {
    /// One of the storage schemes on the whole system.
    Storage { storage: StorageParams, state: StateSpec },
    /// Sites `0..split` form A, the rest B; B is stored.
    FrozenSubsystem {
        storage: StorageParams,
        t0: f64,
        split: usize,
        state: StateSpec,
    },
    TransferAndStore {
        storage: StorageParams,
        sender: usize,
        line: usize,
        receiver: usize,
        lambda: f64,
        state: StateSpec,
    },
    /// `omega` is in units of the local field; `window` defaults to `π/ω_loc`.
    ImpuritySwitch {
        a: Vec<usize>,
        impurity: usize,
        b: Vec<usize>,
        omega: f64,
        window: Option<f64>,
    },
}

impl ProtocolSpec {
    pub fn procedure(&self) -> ProcedureKind {
        match self {
            ProtocolSpec::Storage { .. } => ProcedureKind::Storage,
            ProtocolSpec::FrozenSubsystem { .. } => ProcedureKind::FrozenSubsystem,
            ProtocolSpec::TransferAndStore { .. } => ProcedureKind::TransferAndStore,
            ProtocolSpec::ImpuritySwitch { .. } => ProcedureKind::ImpuritySwitch,
        }
    }

    pub fn storage(&self) -> Option<&StorageParams> {
        match self {
            ProtocolSpec::Storage { storage, .. }
            | ProtocolSpec::FrozenSubsystem { storage, .. }
            | ProtocolSpec::TransferAndStore { storage, .. } => Some(storage),
            ProtocolSpec::ImpuritySwitch { .. } => None,
        }
    }

    fn storage_mut(&mut self) -> Option<&mut StorageParams> {
        match self {
            ProtocolSpec::Storage { storage, .. }
            | ProtocolSpec::FrozenSubsystem { storage, .. }
            | ProtocolSpec::TransferAndStore { storage, .. } => Some(storage),
            ProtocolSpec::ImpuritySwitch { .. } => None,
        }
    }

    /// Whether `param` can be swept for this protocol.
    pub fn accepts(&self, param: SweepParameter) -> bool {
        use SweepParameter as P;
        match self {
            ProtocolSpec::Storage { .. } => matches!(param, P::Tau | P::Cycles),
            ProtocolSpec::FrozenSubsystem { .. } => matches!(param, P::Tau | P::Cycles | P::T0),
            ProtocolSpec::TransferAndStore { .. } => matches!(param, P::Tau | P::Cycles | P::Lambda),
            ProtocolSpec::ImpuritySwitch { .. } => matches!(param, P::Omega | P::Window),
        }
    }

    /// Copy with `param` set to `value`, validated like a parsed value.
    pub fn with_parameter(&self, param: SweepParameter, value: f64) -> Result<Self, String> {
        if !self.accepts(param) {
            return Err(format!("`{param}` is not a parameter of this protocol"));
        }
        let mut out = self.clone();
        match param {
            SweepParameter::Tau => out.storage_mut().expect("accepted").tau = positive(value)?,
            SweepParameter::Cycles => {
                let n = count(value)?;
                if n == 0 && self.procedure() == ProcedureKind::Storage {
                    return Err("must be at least 1".into());
                }
                out.storage_mut().expect("accepted").cycles = n;
            }
            SweepParameter::T0 => {
                if let ProtocolSpec::FrozenSubsystem { t0, .. } = &mut out {
                    *t0 = nonnegative(value)?;
                }
            }
            SweepParameter::Lambda => {
                if let ProtocolSpec::TransferAndStore { lambda, .. } = &mut out {
                    *lambda = positive(value)?;
                }
            }
            SweepParameter::Omega => {
                if let ProtocolSpec::ImpuritySwitch { omega, .. } = &mut out {
                    *omega = nonnegative(value)?;
                }
            }
            SweepParameter::Window => {
                if let ProtocolSpec::ImpuritySwitch { window, .. } = &mut out {
                    *window = Some(positive(value)?);
                }
            }
        }
        Ok(out)
    }
}

fn positive(v: f64) -> Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn nonnegative(v: f64) -> Result<f64, String> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be nonnegative, got {v}"))
    }
}

fn count(v: f64) -> Result<usize, String> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(format!("must be a nonnegative integer, got {v}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Tau,
    Cycles,
    T0,
    Lambda,
    Omega,
    Window,
}

impl SweepParameter {
    pub fn tag(self) -> &'static str {
        match self {
            SweepParameter::Tau => "tau",
            SweepParameter::Cycles => "cycles",
            SweepParameter::T0 => "t0",
            SweepParameter::Lambda => "lambda",
            SweepParameter::Omega => "omega",
            SweepParameter::Window => "window",
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputBlock {
    pub format: OutputFormat,
    pub dir: String,
    pub name: String,
    /// Include wall-clock timings; off by default so reports are byte-stable.
    pub timings: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            format: OutputFormat::Csv,
            dir: ".".into(),
            name: "report".into(),
            timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub geometry: GeometryBlock,
    pub protocol: ProtocolSpec,
    pub seed: u64,
    pub sweep: Option<SweepBlock>,
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn n_sites(&self) -> usize {
        self.geometry.spec.n_sites()
    }

    /// Protocol for each sweep point, or the base protocol when there is no sweep.
    pub fn sweep_points(&self) -> Vec<(Option<f64>, ProtocolSpec)> {
        match &self.sweep {
            None => vec![(None, self.protocol.clone())],
            Some(s) => s
                .values
                .iter()
                .map(|&v| {
                    let p = self
                        .protocol
                        .with_parameter(s.parameter, v)
                        .expect("sweep values are validated at parse time");
                    (Some(v), p)
                })
                .collect(),
        }
    }
}

// Raw, span-carrying form of the document.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    geometry: Option<Spanned<RawGeometry>>,
    protocol: Option<Spanned<RawProtocol>>,
    sweep: Option<Spanned<RawSweep>>,
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    kind: Spanned<GeometryKind>,
    n: Option<Spanned<i64>>,
    rows: Option<Spanned<i64>>,
    cols: Option<Spanned<i64>>,
    spacing: Option<Spanned<f64>>,
    sites: Option<Spanned<Vec<[f64; 3]>>>,
    gammas: Option<Spanned<Vec<f64>>>,
    field: Option<Spanned<[f64; 3]>>,
    coupling: Option<Spanned<f64>>,
    nearest_neighbour: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    scheme: Spanned<String>,
    storage: Option<Spanned<String>>,
    tau: Option<Spanned<f64>>,
    cycles: Option<Spanned<i64>>,
    pulse_model: Option<Spanned<String>>,
    state: Option<Spanned<StateSpec>>,
    seed: Option<Spanned<i64>>,
    t0: Option<Spanned<f64>>,
    split: Option<Spanned<i64>>,
    sender: Option<Spanned<i64>>,
    line: Option<Spanned<i64>>,
    receiver: Option<Spanned<i64>>,
    lambda: Option<Spanned<f64>>,
    a: Option<Spanned<Vec<i64>>>,
    impurity: Option<Spanned<i64>>,
    b: Option<Spanned<Vec<i64>>>,
    omega: Option<Spanned<f64>>,
    window: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: Spanned<SweepParameter>,
    values: Option<Spanned<Vec<f64>>>,
    /// `[lo, hi, count]`, geometrically spaced.
    geometric: Option<Spanned<(f64, f64, i64)>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    format: Option<OutputFormat>,
    dir: Option<String>,
    name: Option<String>,
    timings: Option<bool>,
}

struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].matches('\n').count() + 1
    }

    fn err(&self, span: Range<usize>, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: Some(self.line(span)),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn check<T: Copy>(&self, v: &Spanned<T>, key: &str, f: impl Fn(T) -> Result<T, String>) -> Result<T, ConfigError> {
        f(*v.get_ref()).map_err(|m| self.err(v.span(), key, m))
    }

    fn positive(&self, v: &Spanned<f64>, key: &str) -> Result<f64, ConfigError> {
        self.check(v, key, positive)
    }

    fn index(&self, v: &Spanned<i64>, key: &str, min: i64) -> Result<usize, ConfigError> {
        let x = *v.get_ref();
        if x < min {
            return Err(self.err(v.span(), key, format!("must be at least {min}, got {x}")));
        }
        Ok(x as usize)
    }

    fn required<'v, T>(
        &self,
        v: &'v Option<Spanned<T>>,
        key: &str,
        section: &Spanned<impl Sized>,
    ) -> Result<&'v Spanned<T>, ConfigError> {
        v.as_ref().ok_or_else(|| ConfigError {
            line: Some(self.line(section.span())),
            key: Some(key.to_string()),
            message: "required key is missing".into(),
        })
    }

    fn forbid<T>(&self, v: &Option<Spanned<T>>, key: &str, context: &str) -> Result<(), ConfigError> {
        match v {
            Some(v) => Err(self.err(v.span(), key, format!("not a parameter of {context}"))),
            None => Ok(()),
        }
    }
}

fn missing_section(name: &str) -> ConfigError {
    ConfigError {
        line: None,
        key: None,
        message: format!("missing required section [{name}]"),
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> ConfigError {
    let loc = Locator { text };
    ConfigError {
        line: e.span().map(|s| loc.line(s)),
        key: None,
        message: e.message().trim().to_string(),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let loc = Locator { text };
    let geometry = raw.geometry.ok_or_else(|| missing_section("geometry"))?;
    let protocol = raw.protocol.ok_or_else(|| missing_section("protocol"))?;
    let geometry_block = parse_geometry(&loc, &geometry)?;
    let (protocol_spec, seed) = parse_protocol(&loc, &protocol, geometry_block.spec.n_sites())?;
    let sweep = raw
        .sweep
        .as_ref()
        .map(|s| parse_sweep(&loc, s, &protocol_spec))
        .transpose()?;
    let output = raw.output.map(|o| {
        let d = OutputBlock::default();
        OutputBlock {
            format: o.format.unwrap_or(d.format),
            dir: o.dir.unwrap_or(d.dir),
            name: o.name.unwrap_or(d.name),
            timings: o.timings.unwrap_or(d.timings),
        }
    });
    Ok(ExperimentConfig {
        geometry: geometry_block,
        protocol: protocol_spec,
        seed,
        sweep,
        output: output.unwrap_or_default(),
    })
}

fn parse_geometry(loc: &Locator<'_>, g: &Spanned<RawGeometry>) -> Result<GeometryBlock, ConfigError> {
    let raw = g.get_ref();
    let kind = *raw.kind.get_ref();
    let spacing = || -> Result<f64, ConfigError> {
        raw.spacing
            .as_ref()
            .map(|s| loc.positive(s, "spacing"))
            .unwrap_or(Ok(1.0))
    };
    let spec = match kind {
        GeometryKind::Chain => {
            for (v, k) in [(&raw.rows, "rows"), (&raw.cols, "cols")] {
                loc.forbid(v, k, "a chain")?;
            }
            loc.forbid(&raw.sites, "sites", "a chain")?;
            GeometrySpec::Chain {
                n: loc.index(loc.required(&raw.n, "n", g)?, "n", 1)?,
                spacing: spacing()?,
            }
        }
        GeometryKind::Lattice => {
            loc.forbid(&raw.n, "n", "a lattice")?;
            loc.forbid(&raw.sites, "sites", "a lattice")?;
            GeometrySpec::Lattice {
                rows: loc.index(loc.required(&raw.rows, "rows", g)?, "rows", 1)?,
                cols: loc.index(loc.required(&raw.cols, "cols", g)?, "cols", 1)?,
                spacing: spacing()?,
            }
        }
        GeometryKind::Sites => {
            for (v, k) in [(&raw.n, "n"), (&raw.rows, "rows"), (&raw.cols, "cols")] {
                loc.forbid(v, k, "an explicit site list")?;
            }
            loc.forbid(&raw.spacing, "spacing", "an explicit site list")?;
            let sites = loc.required(&raw.sites, "sites", g)?;
            if sites.get_ref().is_empty() {
                return Err(loc.err(sites.span(), "sites", "at least one site is required"));
            }
            if sites.get_ref().iter().flatten().any(|x| !x.is_finite()) {
                return Err(loc.err(sites.span(), "sites", "coordinates must be finite"));
            }
            GeometrySpec::Sites {
                positions: sites.get_ref().clone(),
            }
        }
    };
    let n = spec.n_sites();
    let gammas = match &raw.gammas {
        Some(v) => {
            let list = v.get_ref();
            if list.len() != n {
                return Err(loc.err(v.span(), "gammas", format!("expected {n} values, got {}", list.len())));
            }
            if list.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(loc.err(v.span(), "gammas", "values must be positive"));
            }
            Some(list.clone())
        }
        None => None,
    };
    let field = match &raw.field {
        Some(v) => {
            let f = *v.get_ref();
            let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(loc.err(v.span(), "field", "direction must be a nonzero finite vector"));
            }
            f
        }
        None => [0.0, 0.0, 1.0],
    };
    let coupling = raw
        .coupling
        .as_ref()
        .map(|c| loc.positive(c, "coupling"))
        .unwrap_or(Ok(1.0))?;
    Ok(GeometryBlock {
        spec,
        gammas,
        field,
        coupling,
        nearest_neighbour: raw.nearest_neighbour.unwrap_or(false),
    })
}

fn parse_tag<T: FromStr>(loc: &Locator<'_>, v: &Spanned<String>, key: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.get_ref()
        .parse()
        .map_err(|e: T::Err| loc.err(v.span(), key, e.to_string()))
}

fn parse_protocol(
    loc: &Locator<'_>,
    p: &Spanned<RawProtocol>,
    n_sites: usize,
) -> Result<(ProtocolSpec, u64), ConfigError> {
    let raw = p.get_ref();
    let seed = match &raw.seed {
        Some(s) => loc.index(s, "seed", 0)? as u64,
        None => 0,
    };
    let scheme_name = raw.scheme.get_ref().as_str();
    let procedure = match scheme_name {
        "frozen_subsystem" => ProcedureKind::FrozenSubsystem,
        "transfer_and_store" => ProcedureKind::TransferAndStore,
        "impurity_switch" => ProcedureKind::ImpuritySwitch,
        _ => ProcedureKind::Storage,
    };
    let context = format!("scheme `{scheme_name}`");
    // Whole-system storage needs a cycle to run; bipartite procedures accept zero.
    let min_cycles = if procedure == ProcedureKind::Storage { 1 } else { 0 };
    let storage_params = |default_scheme: Option<SchemeKind>| -> Result<StorageParams, ConfigError> {
        let scheme = match default_scheme {
            Some(k) => {
                loc.forbid(&raw.storage, "storage", &context)?;
                k
            }
            None => match &raw.storage {
                Some(s) => parse_tag(loc, s, "storage")?,
                None => SchemeKind::ChainReversal,
            },
        };
        let pulse_model = match &raw.pulse_model {
            Some(m) if scheme != SchemeKind::PulseSequence => {
                return Err(loc.err(m.span(), "pulse_model", "only applies to the pulse_sequence scheme"))
            }
            Some(m) => parse_tag(loc, m, "pulse_model")?,
            None => PulseModel::default(),
        };
        Ok(StorageParams {
            scheme,
            tau: loc.positive(loc.required(&raw.tau, "tau", p)?, "tau")?,
            cycles: match &raw.cycles {
                Some(c) => loc.index(c, "cycles", min_cycles)?,
                None => 1,
            },
            pulse_model,
        })
    };
    let state = |default: StateSpec| raw.state.as_ref().map(|s| *s.get_ref()).unwrap_or(default);
    let transfer_keys = [
        (&raw.sender, "sender"),
        (&raw.line, "line"),
        (&raw.receiver, "receiver"),
    ];
    let impurity_lists = [(&raw.a, "a"), (&raw.b, "b")];

    let spec = match procedure {
        ProcedureKind::Storage => {
            let kind: SchemeKind = parse_tag(loc, &raw.scheme, "scheme")?;
            loc.forbid(&raw.t0, "t0", &context)?;
            loc.forbid(&raw.split, "split", &context)?;
            for (v, k) in transfer_keys {
                loc.forbid(v, k, &context)?;
            }
            loc.forbid(&raw.lambda, "lambda", &context)?;
            forbid_impurity_keys(loc, raw, &context)?;
            ProtocolSpec::Storage {
                storage: storage_params(Some(kind))?,
                state: state(StateSpec::RandomMixed),
            }
        }
        ProcedureKind::FrozenSubsystem => {
            for (v, k) in transfer_keys {
                loc.forbid(v, k, &context)?;
            }
            loc.forbid(&raw.lambda, "lambda", &context)?;
            forbid_impurity_keys(loc, raw, &context)?;
            let split_v = loc.required(&raw.split, "split", p)?;
            let split = loc.index(split_v, "split", 1)?;
            if split >= n_sites {
                return Err(loc.err(
                    split_v.span(),
                    "split",
                    format!("must leave B nonempty ({n_sites} sites)"),
                ));
            }
            ProtocolSpec::FrozenSubsystem {
                storage: storage_params(None)?,
                t0: match &raw.t0 {
                    Some(t) => loc.check(t, "t0", nonnegative)?,
                    None => 0.0,
                },
                split,
                state: state(StateSpec::RandomPure),
            }
        }
        ProcedureKind::TransferAndStore => {
            loc.forbid(&raw.t0, "t0", &context)?;
            loc.forbid(&raw.split, "split", &context)?;
            forbid_impurity_keys(loc, raw, &context)?;
            let sender = loc.index(loc.required(&raw.sender, "sender", p)?, "sender", 1)?;
            let line = loc.index(loc.required(&raw.line, "line", p)?, "line", 0)?;
            let receiver_v = loc.required(&raw.receiver, "receiver", p)?;
            let receiver = loc.index(receiver_v, "receiver", 1)?;
            if receiver != sender {
                return Err(loc.err(receiver_v.span(), "receiver", "must equal the sender size"));
            }
            if sender + line + receiver != n_sites {
                return Err(loc.err(
                    receiver_v.span(),
                    "receiver",
                    format!("sender + line + receiver must equal the {n_sites} geometry sites"),
                ));
            }
            ProtocolSpec::TransferAndStore {
                storage: storage_params(None)?,
                sender,
                line,
                receiver,
                lambda: match &raw.lambda {
                    Some(l) => loc.positive(l, "lambda")?,
                    None => 1.0,
                },
                state: state(StateSpec::PlusX),
            }
        }
        ProcedureKind::ImpuritySwitch => {
            for (v, k) in [(&raw.tau, "tau"), (&raw.t0, "t0"), (&raw.lambda, "lambda")] {
                loc.forbid(v, k, &context)?;
            }
            for (v, k) in [(&raw.split, "split"), (&raw.cycles, "cycles")] {
                loc.forbid(v, k, &context)?;
            }
            for (v, k) in transfer_keys {
                loc.forbid(v, k, &context)?;
            }
            loc.forbid(&raw.storage, "storage", &context)?;
            loc.forbid(&raw.pulse_model, "pulse_model", &context)?;
            loc.forbid(&raw.state, "state", &context)?;
            let impurity = match &raw.impurity {
                Some(i) => loc.index(i, "impurity", 0)?,
                None => return Err(loc.err(p.span(), "impurity", "no impurity designated")),
            };
            let mut lists = Vec::new();
            for (v, k) in impurity_lists {
                let v = loc.required(v, k, p)?;
                let sites = v
                    .get_ref()
                    .iter()
                    .map(|&s| {
                        if s < 0 || s as usize >= n_sites {
                            Err(loc.err(v.span(), k, format!("site {s} out of range")))
                        } else {
                            Ok(s as usize)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                lists.push(sites);
            }
            let b = lists.pop().expect("two lists");
            let a = lists.pop().expect("two lists");
            ProtocolSpec::ImpuritySwitch {
                a,
                impurity,
                b,
                omega: match &raw.omega {
                    Some(o) => loc.check(o, "omega", nonnegative)?,
                    None => 0.0,
                },
                window: raw.window.as_ref().map(|w| loc.positive(w, "window")).transpose()?,
            }
        }
    };
    Ok((spec, seed))
}

fn forbid_impurity_keys(loc: &Locator<'_>, raw: &RawProtocol, context: &str) -> Result<(), ConfigError> {
    loc.forbid(&raw.a, "a", context)?;
    loc.forbid(&raw.b, "b", context)?;
    loc.forbid(&raw.impurity, "impurity", context)?;
    loc.forbid(&raw.omega, "omega", context)?;
    loc.forbid(&raw.window, "window", context)
}

fn parse_sweep(loc: &Locator<'_>, s: &Spanned<RawSweep>, protocol: &ProtocolSpec) -> Result<SweepBlock, ConfigError> {
    let raw = s.get_ref();
    let parameter = *raw.parameter.get_ref();
    if !protocol.accepts(parameter) {
        return Err(loc.err(
            raw.parameter.span(),
            "parameter",
            format!("`{parameter}` is not a parameter of the configured protocol"),
        ));
    }
    let (values, span, key) = match (&raw.values, &raw.geometric) {
        (Some(v), None) => (v.get_ref().clone(), v.span(), "values"),
        (None, Some(g)) => {
            let (lo, hi, count) = *g.get_ref();
            if !(lo > 0.0 && hi > lo && count >= 2) {
                return Err(loc.err(
                    g.span(),
                    "geometric",
                    "expected [lo, hi, count] with 0 < lo < hi, count ≥ 2",
                ));
            }
            (
                crate::avg_hamiltonian::geometric_taus(lo, hi, count as usize),
                g.span(),
                "geometric",
            )
        }
        (Some(v), Some(_)) => return Err(loc.err(v.span(), "values", "give either `values` or `geometric`, not both")),
        (None, None) => return Err(loc.err(s.span(), "values", "required key is missing")),
    };
    for &v in &values {
        protocol
            .with_parameter(parameter, v)
            .map_err(|m| loc.err(span.clone(), key, m))?;
    }
    Ok(SweepBlock { parameter, values })
}

// Canonical rendering.

#[derive(Serialize)]
struct CanonicalConfig<'a> {
    geometry: CanonicalGeometry<'a>,
    protocol: CanonicalProtocol<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<CanonicalSweep<'a>>,
    output: &'a OutputBlock,
}

#[derive(Serialize)]
struct CanonicalGeometry<'a> {
    kind: GeometryKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sites: Option<&'a [[f64; 3]]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gammas: Option<&'a [f64]>,
    field: [f64; 3],
    coupling: f64,
    nearest_neighbour: bool,
}

#[derive(Serialize, Default)]
struct CanonicalProtocol<'a> {
    scheme: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    storage: Option<SchemeKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cycles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pulse_model: Option<PulseModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    state: Option<StateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sender: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    receiver: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    impurity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<f64>,
    seed: u64,
}

#[derive(Serialize)]
struct CanonicalSweep<'a> {
    parameter: SweepParameter,
    values: &'a [f64],
}

impl<'a> CanonicalProtocol<'a> {
    fn with_storage(mut self, s: &StorageParams, scheme_key: bool) -> Self {
        if scheme_key {
            self.scheme = s.scheme.tag().to_string();
        } else {
            self.storage = Some(s.scheme);
        }
        self.tau = Some(s.tau);
        self.cycles = Some(s.cycles);
        if s.scheme == SchemeKind::PulseSequence {
            self.pulse_model = Some(s.pulse_model);
        }
        self
    }
}

impl ExperimentConfig {
    fn canonical(&self) -> CanonicalConfig<'_> {
        let g = &self.geometry;
        let mut geometry = CanonicalGeometry {
            kind: GeometryKind::Chain,
            n: None,
            rows: None,
            cols: None,
            spacing: None,
            sites: None,
            gammas: g.gammas.as_deref(),
            field: g.field,
            coupling: g.coupling,
            nearest_neighbour: g.nearest_neighbour,
        };
        match &g.spec {
            GeometrySpec::Chain { n, spacing } => {
                geometry.n = Some(*n);
                geometry.spacing = Some(*spacing);
            }
            GeometrySpec::Lattice { rows, cols, spacing } => {
                geometry.kind = GeometryKind::Lattice;
                geometry.rows = Some(*rows);
                geometry.cols = Some(*cols);
                geometry.spacing = Some(*spacing);
            }
            GeometrySpec::Sites { positions } => {
                geometry.kind = GeometryKind::Sites;
                geometry.sites = Some(positions);
            }
        }
        let base = CanonicalProtocol {
            seed: self.seed,
            ..Default::default()
        };
        let protocol = match &self.protocol {
            ProtocolSpec::Storage { storage, state } => CanonicalProtocol {
                state: Some(*state),
                ..base.with_storage(storage, true)
            },
            ProtocolSpec::FrozenSubsystem {
                storage,
                t0,
                split,
                state,
            } => CanonicalProtocol {
                scheme: "frozen_subsystem".into(),
                t0: Some(*t0),
                split: Some(*split),
                state: Some(*state),
                ..base.with_storage(storage, false)
            },
            ProtocolSpec::TransferAndStore {
                storage,
                sender,
                line,
                receiver,
                lambda,
                state,
            } => CanonicalProtocol {
                scheme: "transfer_and_store".into(),
                sender: Some(*sender),
                line: Some(*line),
                receiver: Some(*receiver),
                lambda: Some(*lambda),
                state: Some(*state),
                ..base.with_storage(storage, false)
            },
            ProtocolSpec::ImpuritySwitch {
                a,
                impurity,
                b,
                omega,
                window,
            } => CanonicalProtocol {
                scheme: "impurity_switch".into(),
                a: Some(a),
                impurity: Some(*impurity),
                b: Some(b),
                omega: Some(*omega),
                window: *window,
                ..base
            },
        };
        CanonicalConfig {
            geometry,
            protocol,
            sweep: self.sweep.as_ref().map(|s| CanonicalSweep {
                parameter: s.parameter,
                values: &s.values,
            }),
            output: &self.output,
        }
    }
}

/// Canonical text; parsing it yields an equal configuration.
impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = toml::to_string(&self.canonical()).map_err(|_| fmt::Error)?;
        f.write_str(&text)
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        parse_config(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[geometry]
kind = "chain"
n = 4

[protocol]
scheme = "chain_reversal"
tau = 0.3
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.n_sites(), 4);
        assert_eq!(c.geometry.field, [0.0, 0.0, 1.0]);
        assert_eq!(c.geometry.coupling, 1.0);
        assert_eq!(c.seed, 0);
        assert_eq!(c.output, OutputBlock::default());
        match c.protocol {
            ProtocolSpec::Storage { storage, state } => {
                assert_eq!(storage.scheme, SchemeKind::ChainReversal);
                assert_eq!(storage.cycles, 1);
                assert_eq!(state, StateSpec::RandomMixed);
            }
            other => panic!("unexpected protocol {other:?}"),
        }
        assert_eq!(c.sweep_points().len(), 1);
    }

    #[test]
    fn negative_tau_names_key_and_line() {
        let text = MINIMAL.replace("tau = 0.3", "tau = -1");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("tau"));
        assert_eq!(e.line, Some(8));
        assert!(e.to_string().contains("tau"));
    }

    #[test]
    fn zero_spacing_rejected() {
        let text = MINIMAL.replace("n = 4", "n = 4\nspacing = 0.0");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("spacing"));
        assert_eq!(e.line, Some(5));
    }

    #[test]
    fn unknown_key_and_missing_section() {
        let e = parse_config(&MINIMAL.replace("tau = 0.3", "tau = 0.3\ntaux = 1")).unwrap_err();
        assert!(e.message.contains("taux"), "{e}");
        assert_eq!(e.line, Some(9));
        let e = parse_config("[geometry]\nkind = \"chain\"\nn = 2\n").unwrap_err();
        assert!(e.message.contains("[protocol]"));
        let e = parse_config(&MINIMAL.replace("[geometry]", "[geometri]")).unwrap_err();
        assert!(e.message.contains("geometri"), "{e}");
    }

    #[test]
    fn keys_foreign_to_the_protocol_are_rejected() {
        let e = parse_config(&format!("{MINIMAL}omega = 3.0\n")).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("omega"));
        let e = parse_config(&format!("{MINIMAL}pulse_model = \"explicit_pulses\"\n")).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("pulse_model"));
    }

    #[test]
    fn sweep_enumeration() {
        let text = format!("{MINIMAL}\n[sweep]\nparameter = \"tau\"\nvalues = [0.01, 0.02, 0.04, 0.08]\n");
        let c = parse_config(&text).unwrap();
        let pts = c.sweep_points();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[2].0, Some(0.04));
        assert_eq!(pts[2].1.storage().unwrap().tau, 0.04);

        let bad = format!("{MINIMAL}\n[sweep]\nparameter = \"omega\"\nvalues = [1.0]\n");
        assert_eq!(parse_config(&bad).unwrap_err().key.as_deref(), Some("parameter"));
        let negative = format!("{MINIMAL}\n[sweep]\nparameter = \"tau\"\nvalues = [0.1, -0.1]\n");
        assert_eq!(parse_config(&negative).unwrap_err().key.as_deref(), Some("values"));
        let geo = format!("{MINIMAL}\n[sweep]\nparameter = \"tau\"\ngeometric = [0.01, 0.1, 3]\n");
        let c = parse_config(&geo).unwrap();
        assert_eq!(c.sweep.unwrap().values.len(), 3);
        let empty = format!("{MINIMAL}\n[sweep]\nparameter = \"tau\"\nvalues = []\n");
        assert!(parse_config(&empty).unwrap().sweep_points().is_empty());
    }

    #[test]
    fn procedures_parse() {
        let frozen = r#"
[geometry]
kind = "chain"
n = 5
[protocol]
scheme = "frozen_subsystem"
storage = "chain_reversal"
tau = 0.3
cycles = 5
t0 = 0.7
split = 2
"#;
        assert_eq!(
            parse_config(frozen).unwrap().protocol.procedure(),
            ProcedureKind::FrozenSubsystem
        );
        let e = parse_config(&frozen.replace("split = 2", "split = 5")).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("split"));

        let transfer = r#"
[geometry]
kind = "chain"
n = 5
[protocol]
scheme = "transfer_and_store"
tau = 0.2
cycles = 4
sender = 1
line = 3
receiver = 1
"#;
        assert!(parse_config(transfer).is_ok());
        let e = parse_config(&transfer.replace("line = 3", "line = 2")).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("receiver"));

        let impurity = r#"
[geometry]
kind = "chain"
n = 3
gammas = [1.0, 2.0, 1.0]
nearest_neighbour = true
[protocol]
scheme = "impurity_switch"
a = [0]
impurity = 1
b = [2]
omega = 50.0
"#;
        assert!(parse_config(impurity).is_ok());
        let e = parse_config(&impurity.replace("impurity = 1\n", "")).unwrap_err();
        assert!(e.message.contains("no impurity"), "{e}");
    }

    #[test]
    fn canonical_text_round_trips() {
        let texts = [
            format!("{MINIMAL}\n[sweep]\nparameter = \"tau\"\ngeometric = [0.003, 0.07, 5]\n"),
            r#"
[geometry]
kind = "sites"
sites = [[0.0, 0.0, 0.0], [1.5, 0.0, 0.25]]
gammas = [1.0, 0.5]
field = [1.0, 1.0, 0.0]
[protocol]
scheme = "pulse_sequence"
tau = 0.01
pulse_model = "explicit_pulses"
seed = 42
[output]
format = "json"
timings = true
"#
            .to_string(),
            r#"
[geometry]
kind = "lattice"
rows = 1
cols = 3
[protocol]
scheme = "impurity_switch"
a = [0]
impurity = 1
b = [2]
window = 1.25
"#
            .to_string(),
        ];
        for text in texts {
            let c = parse_config(&text).unwrap();
            let again = parse_config(&c.to_string()).unwrap();
            assert_eq!(c, again, "canonical text:\n{c}");
        }
    }
}
