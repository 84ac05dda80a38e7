//! Scenario configuration: a flat `key = value` text file. Keys and defaults
//! are documented in docs/config.md; unknown or malformed keys are hard
//! errors so experiment files cannot silently drift.

use std::fmt;
use std::path::{Path, PathBuf};

use vcrl_core::params::{ProtocolParams, MICROS_PER_SEC};

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
    /// Offending key, when the error is attributable to one.
    pub key: Option<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "config key '{k}': {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { message: message.into(), key: Some(key.to_string()) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    VehicleCentric,
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::VehicleCentric => "vehicle_centric",
            Mode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vehicle_centric" => Ok(Mode::VehicleCentric),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode '{other}' (vehicle_centric|baseline)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Adversary {
    None,
    /// Fraction of vehicles that never answer piece requests.
    Selfish { fraction: f64 },
    /// Fraction broadcasting bogus base pieces every `bogus_interval_s`.
    Dos { fraction: f64, bogus_interval_s: f64 },
    /// Fraction flooding bogus delta pieces every `bogus_interval_s`.
    DeltaFlood { fraction: f64, bogus_interval_s: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mobility {
    /// Manhattan grid with per-trip speeds drawn uniformly from the range.
    Manhattan { speed_min: f64, speed_max: f64 },
    /// Position trace CSV: `vehicle_id,time_s,x_m,y_m` with header.
    Trace { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsuPlacement {
    TopIntersections,
    Grid,
    Explicit,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub vehicles: u32,
    pub duration_s: f64,
    pub bandwidth_bytes_per_s: u32,
    pub tau_p_s: f64,
    pub gamma_s: f64,
    pub gamma_crl_s: f64,

    pub area_width_m: f64,
    pub area_height_m: f64,
    pub rsu_count: u32,
    pub rsu_placement: RsuPlacement,
    pub rsu_positions: Vec<(f64, f64)>,
    pub radio_range_m: f64,

    pub piece_tx_interval_s: f64,
    pub fingerprint_tx_interval_s: f64,
    pub delta_piece_tx_interval_s: f64,
    pub key_tx_interval_s: f64,
    pub cam_rate_hz: f64,

    pub revocation_rate: f64,
    pub carrier_fraction: f64,
    pub adversary: Adversary,
    pub mobility: Mobility,
    pub block_m: f64,
    pub trip_duration_mean_s: f64,
    pub min_trip_s: f64,
    pub trip_start_window_s: f64,

    pub fleet_pseudonyms_per_day: u64,
    pub fp_target_p: f64,
    pub phys_rate_mbps: f64,
    pub verify_cost_ms: f64,
    pub bf_check_cost_ms: f64,
    pub cpu_crl_share: f64,
    pub proc_queue_cap: u32,
    pub loss_prob: f64,
    pub request_interval_s: f64,
    pub response_jitter_ms: f64,
    pub delta_events_per_interval: u32,
    pub clock_max_drift_ms: f64,
    pub rate_limit_factor: f64,
    pub delta_buffer_cap_bytes: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn params(&self) -> Result<ProtocolParams, ConfigError> {
        ProtocolParams::new(
            to_us(self.tau_p_s),
            to_us(self.gamma_s),
            to_us(self.gamma_crl_s),
        )
        .map_err(|e| ConfigError { message: e.to_string(), key: Some("tau_p_s".into()) })
    }

    pub fn duration_us(&self) -> u64 {
        to_us(self.duration_s)
    }

    pub fn parse_file(path: &Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            message: format!("cannot read {}: {e}", path.display()),
            key: None,
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<SimConfig, ConfigError> {
        let mut kv: Vec<(String, String, usize)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError {
                    message: format!("line {}: expected 'key = value'", lineno + 1),
                    key: None,
                });
            };
            kv.push((k.trim().to_string(), v.trim().to_string(), lineno + 1));
        }
        Self::from_pairs(kv)
    }

    fn from_pairs(kv: Vec<(String, String, usize)>) -> Result<SimConfig, ConfigError> {
        let mut pairs = std::collections::BTreeMap::new();
        for (k, v, line) in kv {
            if pairs.insert(k.clone(), v).is_some() {
                return Err(err(&k, format!("duplicated (line {line})")));
            }
        }
        let mut take = |k: &str| pairs.remove(k);

        fn parse_f64(k: &str, v: &str) -> Result<f64, ConfigError> {
            v.parse::<f64>().map_err(|_| err(k, format!("not a number: '{v}'")))
        }
        fn parse_u64(k: &str, v: &str) -> Result<u64, ConfigError> {
            v.parse::<u64>().map_err(|_| err(k, format!("not an integer: '{v}'")))
        }

        macro_rules! req_f64 {
            ($k:literal) => {
                match take($k) {
                    Some(v) => parse_f64($k, &v)?,
                    None => return Err(err($k, "missing required key")),
                }
            };
        }
        macro_rules! opt_f64 {
            ($k:literal, $d:expr) => {
                match take($k) {
                    Some(v) => parse_f64($k, &v)?,
                    None => $d,
                }
            };
        }
        macro_rules! opt_u64 {
            ($k:literal, $d:expr) => {
                match take($k) {
                    Some(v) => parse_u64($k, &v)?,
                    None => $d,
                }
            };
        }

        let vehicles = opt_u64!("vehicles", {
            return Err(err("vehicles", "missing required key"));
        }) as u32;
        let duration_s = req_f64!("duration_s");
        let bandwidth = opt_u64!("bandwidth_bytes_per_s", {
            return Err(err("bandwidth_bytes_per_s", "missing required key"));
        }) as u32;
        let tau_p_s = req_f64!("tau_p_s");
        let gamma_crl_s = req_f64!("gamma_crl_s");
        let gamma_s = opt_f64!("gamma_s", tau_p_s);

        let rsu_placement = match take("rsu_placement").as_deref() {
            None | Some("top-intersections") => RsuPlacement::TopIntersections,
            Some("grid") => RsuPlacement::Grid,
            Some("explicit") => RsuPlacement::Explicit,
            Some(other) => {
                return Err(err(
                    "rsu_placement",
                    format!("unknown value '{other}' (top-intersections|grid|explicit)"),
                ))
            }
        };
        let rsu_positions = match take("rsu_positions") {
            None => Vec::new(),
            Some(v) if v.is_empty() => Vec::new(),
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(';') {
                    let Some((x, y)) = part.split_once(':') else {
                        return Err(err("rsu_positions", format!("bad position '{part}', want x:y")));
                    };
                    out.push((
                        parse_f64("rsu_positions", x.trim())?,
                        parse_f64("rsu_positions", y.trim())?,
                    ));
                }
                out
            }
        };

        let adversary = match take("adversary") {
            None => Adversary::None,
            Some(v) => parse_adversary(&v)?,
        };
        let mobility = match take("mobility") {
            None => Mobility::Manhattan { speed_min: 8.0, speed_max: 14.0 },
            Some(v) => parse_mobility(&v)?,
        };

        let duration = duration_s;
        let cfg = SimConfig {
            vehicles,
            duration_s,
            bandwidth_bytes_per_s: bandwidth,
            tau_p_s,
            gamma_s,
            gamma_crl_s,
            area_width_m: opt_f64!("area_width_m", 2000.0),
            area_height_m: opt_f64!("area_height_m", 2000.0),
            rsu_count: opt_u64!("rsu_count", 4) as u32,
            rsu_placement,
            rsu_positions,
            radio_range_m: opt_f64!("radio_range_m", 300.0),
            piece_tx_interval_s: opt_f64!("piece_tx_interval_s", 0.5),
            fingerprint_tx_interval_s: opt_f64!("fingerprint_tx_interval_s", 5.0),
            delta_piece_tx_interval_s: opt_f64!("delta_piece_tx_interval_s", 2.0),
            key_tx_interval_s: opt_f64!("key_tx_interval_s", 0.5),
            cam_rate_hz: opt_f64!("cam_rate_hz", 1.0),
            revocation_rate: opt_f64!("revocation_rate", 0.01),
            carrier_fraction: opt_f64!("carrier_fraction", 0.05),
            adversary,
            mobility,
            block_m: opt_f64!("block_m", 250.0),
            trip_duration_mean_s: opt_f64!("trip_duration_mean_s", 693.0),
            min_trip_s: opt_f64!("min_trip_s", 120.0),
            trip_start_window_s: opt_f64!("trip_start_window_s", duration * 0.6),
            fleet_pseudonyms_per_day: opt_u64!("fleet_pseudonyms_per_day", 1_712_782),
            fp_target_p: opt_f64!("fp_target_p", 1e-30),
            phys_rate_mbps: opt_f64!("phys_rate_mbps", 18.0),
            verify_cost_ms: opt_f64!("verify_cost_ms", 2.346),
            bf_check_cost_ms: opt_f64!("bf_check_cost_ms", 0.352),
            cpu_crl_share: opt_f64!("cpu_crl_share", 0.015),
            proc_queue_cap: opt_u64!("proc_queue_cap", 32) as u32,
            loss_prob: opt_f64!("loss_prob", 0.0),
            request_interval_s: opt_f64!("request_interval_s", 2.0),
            response_jitter_ms: opt_f64!("response_jitter_ms", 200.0),
            delta_events_per_interval: opt_u64!("delta_events_per_interval", 0) as u32,
            clock_max_drift_ms: opt_f64!("clock_max_drift_ms", 0.0),
            rate_limit_factor: opt_f64!("rate_limit_factor", 2.0),
            delta_buffer_cap_bytes: opt_u64!("delta_buffer_cap_bytes", 1 << 20) as usize,
            seed: opt_u64!("seed", 1),
        };

        if let Some(unknown) = pairs.keys().next() {
            return Err(err(unknown, "unknown config key"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        fn frac(k: &str, v: f64) -> Result<(), ConfigError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(err(k, format!("{v} outside [0, 1]")))
            }
        }
        if self.vehicles == 0 {
            return Err(err("vehicles", "must be >= 1"));
        }
        if self.duration_s <= 0.0 {
            return Err(err("duration_s", "must be positive"));
        }
        frac("revocation_rate", self.revocation_rate)?;
        frac("carrier_fraction", self.carrier_fraction)?;
        frac("loss_prob", self.loss_prob)?;
        match &self.adversary {
            Adversary::None => {}
            Adversary::Selfish { fraction } => frac("adversary", *fraction)?,
            Adversary::Dos { fraction, bogus_interval_s }
            | Adversary::DeltaFlood { fraction, bogus_interval_s } => {
                frac("adversary", *fraction)?;
                if *bogus_interval_s <= 0.0 {
                    return Err(err("adversary", "bogus interval must be positive"));
                }
            }
        }
        if let Mobility::Manhattan { speed_min, speed_max } = self.mobility {
            if speed_min <= 0.0 || speed_max < speed_min {
                return Err(err("mobility", "need 0 < speed_min <= speed_max"));
            }
        }
        if self.cpu_crl_share <= 0.0 || self.cpu_crl_share > 1.0 {
            return Err(err("cpu_crl_share", "must be in (0, 1]"));
        }
        if self.rsu_placement == RsuPlacement::Explicit
            && self.rsu_positions.len() != self.rsu_count as usize
        {
            return Err(err("rsu_positions", "explicit placement needs rsu_count positions"));
        }
        self.params()?;
        Ok(())
    }
}

fn parse_adversary(v: &str) -> Result<Adversary, ConfigError> {
    let mut parts = v.split(':');
    let kind = parts.next().unwrap_or("");
    let frac = |s: Option<&str>| -> Result<f64, ConfigError> {
        s.ok_or_else(|| err("adversary", "missing fraction"))?
            .parse::<f64>()
            .map_err(|_| err("adversary", "bad fraction"))
    };
    match kind {
        "none" => Ok(Adversary::None),
        "selfish" => Ok(Adversary::Selfish { fraction: frac(parts.next())? }),
        "dos" | "delta_flood" => {
            let fraction = frac(parts.next())?;
            let bogus_interval_s = match parts.next() {
                Some(s) => s.parse::<f64>().map_err(|_| err("adversary", "bad interval"))?,
                None => 0.5,
            };
            Ok(if kind == "dos" {
                Adversary::Dos { fraction, bogus_interval_s }
            } else {
                Adversary::DeltaFlood { fraction, bogus_interval_s }
            })
        }
        other => Err(err("adversary", format!("unknown kind '{other}'"))),
    }
}

fn parse_mobility(v: &str) -> Result<Mobility, ConfigError> {
    let mut parts = v.split(':');
    match parts.next().unwrap_or("") {
        "manhattan" => {
            let speed_min = parts
                .next()
                .unwrap_or("8")
                .parse::<f64>()
                .map_err(|_| err("mobility", "bad speed_min"))?;
            let speed_max = parts
                .next()
                .unwrap_or("14")
                .parse::<f64>()
                .map_err(|_| err("mobility", "bad speed_max"))?;
            Ok(Mobility::Manhattan { speed_min, speed_max })
        }
        "trace" => {
            let path = parts.next().ok_or_else(|| err("mobility", "trace needs a path"))?;
            Ok(Mobility::Trace { path: PathBuf::from(path) })
        }
        other => Err(err("mobility", format!("unknown kind '{other}'"))),
    }
}

pub fn to_us(seconds: f64) -> u64 {
    (seconds * MICROS_PER_SEC as f64).round() as u64
}
