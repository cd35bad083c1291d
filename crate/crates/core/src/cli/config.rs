//! Plain-text run configuration.
//!
//! ```text
//! # comment
//! [model]
//! coupling = 0.03
//! [run]
//! n_bins = auto
//! t_final = 30 fs
//! ```
//!
//! Keys are fixed per section and unknown keys are rejected. Lists are
//! comma-separated. Times take an optional `fs` or `au` suffix (default au).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::model::{bin_count_rule, discretize_disorder, time_convert, BinSet, ModelSpec, TimeUnit};
use crate::propagator::{InitialState, PropagationOptions, DEFAULT_DT_RECORD, DEFAULT_TOLERANCE};

use super::CliError;

const SCHEMA: &[(&str, &[&str])] = &[
    ("model", &["omega0", "omega_nu", "s1", "s2", "v12", "delta2", "omega_c", "kappa", "coupling", "sigma"]),
    ("run", &["preset", "n_bins", "n_vib", "t_final", "dt_record", "tolerance", "initial_state", "snapshot_times"]),
    ("spectrum", &["omega_min", "omega_max", "omega_step"]),
    ("bins", &["weights", "frequencies"]),
    ("custom_state", &["photon", "amplitudes"]),
    ("sweep", &["sigma", "coupling", "kappa", "delta2"]),
    ("oracle", &["n_molecules", "n_vib"]),
];

/// Key-value pairs as written, keyed by `section.key`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        let mut section: Option<&str> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::Config(format!("line {}: {msg}", lineno + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                let known = SCHEMA.iter().find(|(s, _)| *s == name).ok_or_else(|| at(format!("unknown section [{name}]")))?;
                section = Some(known.0);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let section = section.ok_or_else(|| at("key outside of a section".into()))?;
            let full = format!("{section}.{}", key.trim());
            check_key(&full).map_err(|e| at(e.to_string()))?;
            if raw.entries.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(at(format!("duplicate key `{full}`")));
            }
        }
        Ok(raw)
    }

    /// Applies `key=value`, where `key` is `section.key` or a bare key name.
    /// A bare name belongs to the first section declaring it, so `sigma`
    /// means `model.sigma` and `n_vib` means `run.n_vib`.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let full = if key.contains('.') {
            key.to_string()
        } else {
            match SCHEMA.iter().find(|(_, keys)| keys.contains(&key)) {
                Some((section, _)) => format!("{section}.{key}"),
                None => return Err(CliError::Config(format!("unknown key `{key}`"))),
            }
        };
        check_key(&full)?;
        self.entries.insert(full, value.trim().to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

fn check_key(full: &str) -> Result<(), CliError> {
    let (section, key) = full.split_once('.').unwrap_or(("", full));
    match SCHEMA.iter().find(|(s, _)| *s == section) {
        Some((_, keys)) if keys.contains(&key) => Ok(()),
        Some(_) => Err(CliError::Config(format!("unknown key `{key}` in [{section}]"))),
        None => Err(CliError::Config(format!("unknown section in `{full}`"))),
    }
}

fn bad(key: &str, value: &str, expected: &str) -> CliError {
    CliError::Config(format!("`{key}`: cannot read `{value}` as {expected}"))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    value.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(key, value, "a number"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value.trim().parse::<usize>().map_err(|_| bad(key, value, "a non-negative integer"))
}

fn parse_list<T>(key: &str, value: &str, item: impl Fn(&str, &str) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| item(key, v)).collect()
}

fn parse_time(key: &str, value: &str) -> Result<f64, CliError> {
    let mut parts = value.split_whitespace();
    let number = parts.next().ok_or_else(|| bad(key, value, "a time"))?;
    let unit = match parts.next() {
        Some(u) => u.parse::<TimeUnit>().map_err(|e| CliError::Config(format!("`{key}`: {e}")))?,
        None => TimeUnit::Au,
    };
    if parts.next().is_some() {
        return Err(bad(key, value, "a time"));
    }
    time_convert(parse_f64(key, number)?, unit).map_err(|e| CliError::Config(format!("`{key}`: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinCount {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InitialSelector {
    Photonic,
    Bright,
    Upper,
    Lower,
    Custom,
}

impl InitialSelector {
    pub fn name(self) -> &'static str {
        match self {
            InitialSelector::Photonic => "photonic",
            InitialSelector::Bright => "bright",
            InitialSelector::Upper => "upper",
            InitialSelector::Lower => "lower",
            InitialSelector::Custom => "custom",
        }
    }

    fn parse(key: &str, value: &str) -> Result<Self, CliError> {
        Ok(match value.trim() {
            "photonic" => InitialSelector::Photonic,
            "bright" => InitialSelector::Bright,
            "upper" => InitialSelector::Upper,
            "lower" => InitialSelector::Lower,
            "custom" => InitialSelector::Custom,
            other => return Err(bad(key, other, "photonic, bright, upper, lower or custom")),
        })
    }
}

/// Parameter lists scanned by sweeps; an empty list keeps the model value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub sigma: Vec<f64>,
    pub coupling: Vec<f64>,
    pub kappa: Vec<f64>,
    pub delta2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    pub n_molecules: Vec<usize>,
    pub n_vib: usize,
}

/// A fully explicit run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: ModelSpec,
    pub n_bins: BinCount,
    pub n_vib: usize,
    /// Final time, au.
    pub t_final: f64,
    pub dt_record: f64,
    pub tolerance: f64,
    pub initial_states: Vec<InitialSelector>,
    /// Times (au) at which per-bin vibrational energies are reported.
    pub snapshot_times: Vec<f64>,
    /// `(min, max, step)` of the frequency grid; `None` uses the default.
    pub omega_grid: Option<(f64, f64, f64)>,
    /// Explicit bin weights and frequencies replacing the Gaussian.
    pub custom_bins: Option<(Vec<f64>, Vec<f64>)>,
    /// Photon amplitude and per-bin amplitudes of a custom initial state.
    pub custom_state: Option<(f64, Vec<f64>)>,
    pub sweep: SweepAxes,
    pub oracle: OracleSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            model: ModelSpec::reference(),
            n_bins: BinCount::Auto,
            n_vib: crate::hamiltonian::DEFAULT_N_VIB,
            t_final: 30.0 * crate::model::AU_PER_FS,
            dt_record: DEFAULT_DT_RECORD,
            tolerance: DEFAULT_TOLERANCE,
            initial_states: vec![InitialSelector::Photonic],
            snapshot_times: Vec::new(),
            omega_grid: None,
            custom_bins: None,
            custom_state: None,
            sweep: SweepAxes::default(),
            oracle: OracleSettings { n_molecules: vec![1, 2, 4], n_vib: 5 },
        }
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub index: usize,
    pub model: ModelSpec,
    pub initial: InitialSelector,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let mut c = RunConfig::default();
        let f = |key: &str| raw.get(key).map(|v| parse_f64(key, v)).transpose();
        let m = &mut c.model;
        for (key, slot) in [
            ("model.omega0", &mut m.omega0),
            ("model.omega_nu", &mut m.omega_nu),
            ("model.s1", &mut m.s1),
            ("model.s2", &mut m.s2),
            ("model.v12", &mut m.v12),
            ("model.delta2", &mut m.delta2),
            ("model.omega_c", &mut m.omega_c),
            ("model.kappa", &mut m.kappa),
            ("model.coupling", &mut m.coupling),
            ("model.sigma", &mut m.sigma),
        ] {
            if let Some(v) = f(key)? {
                *slot = v;
            }
        }
        c.model.validate().map_err(|e| CliError::Config(e.to_string()))?;

        if let Some(v) = raw.get("run.preset") {
            c.preset = Some(v.to_string());
        }
        if let Some(v) = raw.get("run.n_bins") {
            c.n_bins = match v {
                "auto" => BinCount::Auto,
                n => match parse_usize("run.n_bins", n)? {
                    0 => return Err(CliError::Config("`run.n_bins` must be >= 1".into())),
                    n => BinCount::Fixed(n),
                },
            };
        }
        if let Some(v) = raw.get("run.n_vib") {
            c.n_vib = parse_usize("run.n_vib", v)?;
        }
        if let Some(v) = raw.get("run.t_final") {
            c.t_final = parse_time("run.t_final", v)?;
        }
        if let Some(v) = raw.get("run.dt_record") {
            c.dt_record = parse_time("run.dt_record", v)?;
        }
        // Times given in fs rarely fall on the recording grid; keep the final
        // time and shrink or stretch the spacing to the nearest divisor.
        if c.t_final > 0.0 && c.dt_record > 0.0 {
            let steps = (c.t_final / c.dt_record).round().max(1.0);
            if (c.t_final / c.dt_record - steps).abs() > 1e-9 * steps {
                c.dt_record = c.t_final / steps;
            }
        }
        if let Some(v) = f("run.tolerance")? {
            c.tolerance = v;
        }
        if let Some(v) = raw.get("run.initial_state") {
            c.initial_states = parse_list("run.initial_state", v, InitialSelector::parse)?;
            if c.initial_states.is_empty() {
                return Err(CliError::Config("`run.initial_state` is empty".into()));
            }
        }
        if let Some(v) = raw.get("run.snapshot_times") {
            c.snapshot_times = parse_list("run.snapshot_times", v, parse_time)?;
        }

        let grid = ["spectrum.omega_min", "spectrum.omega_max", "spectrum.omega_step"].map(f);
        match grid {
            [Ok(None), Ok(None), Ok(None)] => {}
            [Ok(Some(lo)), Ok(Some(hi)), Ok(Some(step))] => {
                if !(hi > lo && step > 0.0) {
                    return Err(CliError::Config("[spectrum] needs omega_min < omega_max and omega_step > 0".into()));
                }
                c.omega_grid = Some((lo, hi, step));
            }
            [a, b, s] => {
                a?;
                b?;
                s?;
                return Err(CliError::Config("[spectrum] needs all of omega_min, omega_max, omega_step".into()));
            }
        }

        match (raw.get("bins.weights"), raw.get("bins.frequencies")) {
            (None, None) => {}
            (Some(w), Some(fr)) => {
                let weights = parse_list("bins.weights", w, parse_f64)?;
                let freqs = parse_list("bins.frequencies", fr, parse_f64)?;
                BinSet::from_custom(&weights, &freqs).map_err(|e| CliError::Config(e.to_string()))?;
                c.custom_bins = Some((weights, freqs));
            }
            _ => return Err(CliError::Config("[bins] needs both weights and frequencies".into())),
        }
        match (raw.get("custom_state.photon"), raw.get("custom_state.amplitudes")) {
            (None, None) => {}
            (photon, amps) => {
                let photon = photon.map(|p| parse_f64("custom_state.photon", p)).transpose()?.unwrap_or(0.0);
                let amps = amps.map(|a| parse_list("custom_state.amplitudes", a, parse_f64)).transpose()?.unwrap_or_default();
                c.custom_state = Some((photon, amps));
            }
        }
        if c.initial_states.contains(&InitialSelector::Custom) && c.custom_state.is_none() {
            return Err(CliError::Config("initial_state = custom needs a [custom_state] section".into()));
        }

        for (key, slot) in [
            ("sweep.sigma", &mut c.sweep.sigma),
            ("sweep.coupling", &mut c.sweep.coupling),
            ("sweep.kappa", &mut c.sweep.kappa),
            ("sweep.delta2", &mut c.sweep.delta2),
        ] {
            if let Some(v) = raw.get(key) {
                *slot = parse_list(key, v, parse_f64)?;
            }
        }
        if let Some(v) = raw.get("oracle.n_molecules") {
            c.oracle.n_molecules = parse_list("oracle.n_molecules", v, parse_usize)?;
        }
        if let Some(v) = raw.get("oracle.n_vib") {
            c.oracle.n_vib = parse_usize("oracle.n_vib", v)?;
        }

        c.options().steps().map_err(|e| CliError::Config(e.to_string()))?;
        for p in c.points() {
            p.model.validate().map_err(|e| CliError::Config(format!("sweep point {}: {e}", p.index)))?;
        }
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn options(&self) -> PropagationOptions {
        PropagationOptions::new(self.t_final)
            .with_dt_record(self.dt_record)
            .with_tolerance(self.tolerance)
    }

    /// The Cartesian product of the sweep axes and initial states, sigma
    /// varying slowest.
    pub fn points(&self) -> Vec<Point> {
        let axis = |values: &[f64], default: f64| if values.is_empty() { vec![default] } else { values.to_vec() };
        let mut out = Vec::new();
        for &sigma in &axis(&self.sweep.sigma, self.model.sigma) {
            for &coupling in &axis(&self.sweep.coupling, self.model.coupling) {
                for &kappa in &axis(&self.sweep.kappa, self.model.kappa) {
                    for &delta2 in &axis(&self.sweep.delta2, self.model.delta2) {
                        for &initial in &self.initial_states {
                            let model = ModelSpec { sigma, coupling, kappa, delta2, ..self.model };
                            out.push(Point { index: out.len(), model, initial });
                        }
                    }
                }
            }
        }
        out
    }

    /// Bin count for `model`: the rule when automatic, and always one bin
    /// without disorder.
    pub fn bin_count(&self, model: &ModelSpec) -> usize {
        if model.sigma == 0.0 {
            return 1;
        }
        match self.n_bins {
            BinCount::Auto => bin_count_rule(model.sigma, self.t_final),
            BinCount::Fixed(n) => n,
        }
    }

    pub fn bins_for(&self, model: &ModelSpec, n_bins: usize) -> crate::Result<BinSet> {
        match &self.custom_bins {
            Some((w, f)) => BinSet::from_custom(w, f),
            None => discretize_disorder(model, n_bins),
        }
    }

    pub fn bins(&self, model: &ModelSpec) -> crate::Result<BinSet> {
        self.bins_for(model, self.bin_count(model))
    }

    pub fn initial_state(&self, selector: InitialSelector) -> InitialState {
        match selector {
            InitialSelector::Photonic => InitialState::Photonic,
            InitialSelector::Bright => InitialState::Bright,
            InitialSelector::Upper => InitialState::UpperPolariton,
            InitialSelector::Lower => InitialState::LowerPolariton,
            InitialSelector::Custom => {
                let (photon, amps) = self.custom_state.clone().unwrap_or_default();
                InitialState::Custom {
                    photon: photon.into(),
                    bins: amps.into_iter().map(Into::into).collect(),
                }
            }
        }
    }

    /// Serializes every setting explicitly. Numbers use the shortest form
    /// that reads back to the same value.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "[model]");
        for (k, v) in [
            ("omega0", m.omega0),
            ("omega_nu", m.omega_nu),
            ("s1", m.s1),
            ("s2", m.s2),
            ("v12", m.v12),
            ("delta2", m.delta2),
            ("omega_c", m.omega_c),
            ("kappa", m.kappa),
            ("coupling", m.coupling),
            ("sigma", m.sigma),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(s, "\n[run]");
        if let Some(p) = &self.preset {
            let _ = writeln!(s, "preset = {p}");
        }
        let _ = match self.n_bins {
            BinCount::Auto => writeln!(s, "n_bins = auto"),
            BinCount::Fixed(n) => writeln!(s, "n_bins = {n}"),
        };
        let _ = writeln!(s, "n_vib = {}", self.n_vib);
        let _ = writeln!(s, "t_final = {:?} au", self.t_final);
        let _ = writeln!(s, "dt_record = {:?} au", self.dt_record);
        let _ = writeln!(s, "tolerance = {:?}", self.tolerance);
        let names: Vec<&str> = self.initial_states.iter().map(|i| i.name()).collect();
        let _ = writeln!(s, "initial_state = {}", names.join(", "));
        let times: Vec<String> = self.snapshot_times.iter().map(|t| format!("{t:?} au")).collect();
        let _ = writeln!(s, "snapshot_times = {}", times.join(", "));
        if let Some((lo, hi, step)) = self.omega_grid {
            let _ = writeln!(s, "\n[spectrum]\nomega_min = {lo:?}\nomega_max = {hi:?}\nomega_step = {step:?}");
        }
        if let Some((w, f)) = &self.custom_bins {
            let _ = writeln!(s, "\n[bins]\nweights = {}\nfrequencies = {}", list(w), list(f));
        }
        if let Some((p, a)) = &self.custom_state {
            let _ = writeln!(s, "\n[custom_state]\nphoton = {p:?}\namplitudes = {}", list(a));
        }
        let _ = writeln!(s, "\n[sweep]");
        for (k, v) in [
            ("sigma", &self.sweep.sigma),
            ("coupling", &self.sweep.coupling),
            ("kappa", &self.sweep.kappa),
            ("delta2", &self.sweep.delta2),
        ] {
            let _ = writeln!(s, "{k} = {}", list(v));
        }
        let n: Vec<String> = self.oracle.n_molecules.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "\n[oracle]\nn_molecules = {}\nn_vib = {}", n.join(", "), self.oracle.n_vib);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_units() {
        let c = RunConfig::parse("[run]\nt_final = 30 fs\n").unwrap();
        assert_eq!(c.t_final, 30.0 * 41.341373335);
        assert_eq!(c.options().steps().unwrap(), 1240);
        assert!((c.dt_record - 1.0).abs() < 2e-4);
        assert_eq!(c.model, ModelSpec::reference());
        assert_eq!(c.n_bins, BinCount::Auto);
        let c = RunConfig::parse("[run]\nt_final = 100\ndt_record = 0.5 au\n").unwrap();
        assert_eq!((c.t_final, c.dt_record), (100.0, 0.5));
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        assert!(RunConfig::parse("[model]\ncouplng = 0.1\n").is_err());
        assert!(RunConfig::parse("[modle]\n").is_err());
        assert!(RunConfig::parse("coupling = 0.1\n").is_err());
        assert!(RunConfig::parse("[model]\ncoupling = 0.1\ncoupling = 0.2\n").is_err());
        assert!(RunConfig::parse("[run]\nt_final = 3 ps\n").is_err());
        assert!(RunConfig::parse("[run]\ntolerance = 1e-3\n").is_err());
        assert!(RunConfig::parse("[model]\nkappa = -1\n").is_err());
        assert!(RunConfig::parse("[run]\ninitial_state = custom\n").is_err());
        assert!(RunConfig::parse("[spectrum]\nomega_min = 0.1\n").is_err());
    }

    #[test]
    fn overrides() {
        let mut raw = RawConfig::parse("[model]\ncoupling = 0.01\n").unwrap();
        raw.set_override("coupling=0.02").unwrap();
        raw.set_override("sweep.sigma = 0, 0.01").unwrap();
        raw.set_override("sigma=0.005").unwrap();
        assert!(raw.set_override("nope=1").is_err());
        assert!(raw.set_override("run.n_bins").is_err());
        let c = RunConfig::from_raw(&raw).unwrap();
        assert_eq!((c.model.coupling, c.model.sigma), (0.02, 0.005));
        assert_eq!(c.points().len(), 2);
    }

    #[test]
    fn points_and_bins() {
        let c = RunConfig::parse(
            "[run]\nn_bins = auto\nt_final = 40 fs\ninitial_state = upper, lower\n[sweep]\nsigma = 0, 0.02\ncoupling = 0.01, 0.03\n",
        )
        .unwrap();
        let p = c.points();
        assert_eq!(p.len(), 8);
        assert_eq!((p[0].model.sigma, p[0].model.coupling, p[0].initial), (0.0, 0.01, InitialSelector::Upper));
        assert_eq!(p[7].model.sigma, 0.02);
        assert_eq!(c.bin_count(&p[0].model), 1);
        assert_eq!(c.bin_count(&p[7].model), 32);
    }

    #[test]
    fn text_round_trip() {
        let c = RunConfig::parse(
            "[model]\nsigma = 0.013\n[run]\npreset = x\nn_bins = 7\nt_final = 12.5 fs\nsnapshot_times = 5 fs\ninitial_state = custom\n\
             [custom_state]\nphoton = 0.6\namplitudes = 0.8\n[bins]\nweights = 1\nfrequencies = 0.1\n[spectrum]\nomega_min = 0.05\nomega_max = 0.15\nomega_step = 0.001\n",
        )
        .unwrap();
        let again = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), c.to_text());
    }
}
