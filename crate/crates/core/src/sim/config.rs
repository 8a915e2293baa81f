use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::baselines::WmmseConfig;
use crate::beamalign::{AlignmentScheme, AlignmentTiming};
use crate::formation::{HarnessConfig, ProtocolConfig};
use crate::rfmodel::{RfParams, MAX_BEAMWIDTH_DEG, MIN_BEAMWIDTH_DEG};

/// Where a configuration problem was found.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax {
        line: usize,
        message: String,
    },
    UnknownKey {
        line: usize,
        key: String,
    },
    DuplicateKey {
        line: usize,
        key: String,
    },
    InvalidValue {
        line: Option<usize>,
        key: String,
        message: String,
    },
    MissingSeed,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, message } => write!(f, "line {line}: {message}"),
            ConfigError::UnknownKey { line, key } => write!(f, "line {line}: unknown key `{key}`"),
            ConfigError::DuplicateKey { line, key } => {
                write!(f, "line {line}: key `{key}` given twice")
            }
            ConfigError::InvalidValue {
                line: Some(line),
                key,
                message,
            } => {
                write!(f, "line {line}: `{key}`: {message}")
            }
            ConfigError::InvalidValue {
                line: None,
                key,
                message,
            } => write!(f, "`{key}`: {message}"),
            ConfigError::MissingSeed => {
                f.write_str("no seed given; set `seed` in the config or pass --seed")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// How the per-slot beamforming decision is made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamformingMethod {
    Gnn,
    Wmmse,
    Random,
    /// Every link active at a common configured beamwidth.
    Fixed,
}

impl BeamformingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BeamformingMethod::Gnn => "gnn",
            BeamformingMethod::Wmmse => "wmmse",
            BeamformingMethod::Random => "random",
            BeamformingMethod::Fixed => "fixed",
        }
    }
}

impl FromStr for BeamformingMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gnn" => Ok(Self::Gnn),
            "wmmse" => Ok(Self::Wmmse),
            "random" => Ok(Self::Random),
            "fixed" => Ok(Self::Fixed),
            other => Err(format!(
                "unknown method `{other}` (gnn, wmmse, random, fixed)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadConfig {
    pub length_m: f64,
    pub lane_width_m: f64,
    pub lanes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub instances_per_epoch: usize,
    /// Links per generated training instance.
    pub links: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub instances: usize,
    pub links: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzSettings {
    pub vehicles: u32,
    pub events: usize,
    pub max_burst: usize,
    pub area_m: f64,
    pub drop_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub vehicles: u32,
    pub slots: usize,
    pub method: BeamformingMethod,
    pub scheme: AlignmentScheme,
    pub fixed_width_deg: u8,
    pub checkpoint: Option<PathBuf>,
    /// Chance per slot that one random group member leaves.
    pub churn_probability: f64,
    pub road: RoadConfig,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub rf: RfParams,
    pub timing: AlignmentTiming,
    pub protocol: ProtocolConfig,
    /// Channel of the control network; its seed is derived from `seed`.
    pub network: HarnessConfig,
    pub train: TrainSettings,
    pub wmmse: WmmseConfig,
    pub wmmse_width_deg: f64,
    pub eval: EvalSettings,
    pub fuzz: FuzzSettings,
    pub sweep_widths_deg: Vec<f64>,
}

impl ScenarioConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            vehicles: 12,
            slots: 100,
            method: BeamformingMethod::Wmmse,
            scheme: AlignmentScheme::DsrcScheme2,
            fixed_width_deg: 8,
            checkpoint: None,
            churn_probability: 0.01,
            road: RoadConfig {
                length_m: 200.0,
                lane_width_m: 3.5,
                lanes: 3,
            },
            speed_min_mps: 20.0,
            speed_max_mps: 30.0,
            rf: RfParams::default(),
            timing: AlignmentTiming::default(),
            protocol: ProtocolConfig::default(),
            network: HarnessConfig::default(),
            train: TrainSettings {
                learning_rate: 1e-3,
                epochs: 200,
                instances_per_epoch: 16,
                links: 12,
            },
            wmmse: WmmseConfig::default(),
            wmmse_width_deg: 8.0,
            eval: EvalSettings {
                instances: 20,
                links: 3,
            },
            fuzz: FuzzSettings {
                vehicles: 30,
                events: 1000,
                max_burst: 5,
                area_m: 200.0,
                drop_probability: 0.3,
            },
            sweep_widths_deg: (1..=9).map(|k| f64::from(k) * 5.0).collect(),
        }
    }

    /// Parses `key = value` lines. `#` starts a comment. A seed passed here
    /// overrides the one in the text; one of the two must be present.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self, ConfigError> {
        let mut cfg = Self::with_seed(0);
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut seed = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim();
            let value = unquote(value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    message: "empty key".into(),
                });
            }
            if seen.insert(key.to_string(), line).is_some() {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            let invalid = |message: String| ConfigError::InvalidValue {
                line: Some(line),
                key: key.to_string(),
                message,
            };
            if key == "seed" {
                seed = Some(num::<u64>(value).map_err(invalid)?);
                continue;
            }
            match cfg.set(key, value) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
                Err(message) => return Err(invalid(message)),
            }
        }
        cfg.seed = seed_override.or(seed).ok_or(ConfigError::MissingSeed)?;
        cfg.finish();
        cfg.validate()
            .map_err(|(key, message)| ConfigError::InvalidValue {
                line: seen.get(key).copied(),
                key: key.to_string(),
                message,
            })?;
        Ok(cfg)
    }

    /// Returns `Ok(false)` for an unknown key.
    fn set(&mut self, key: &str, v: &str) -> Result<bool, String> {
        match key {
            "scenario.vehicles" => self.vehicles = num(v)?,
            "scenario.slots" => self.slots = num(v)?,
            "scenario.method" => self.method = v.parse()?,
            "scenario.scheme" => self.scheme = v.parse().map_err(|e| format!("{e}"))?,
            "scenario.fixed_width_deg" => self.fixed_width_deg = num(v)?,
            "scenario.checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
            "scenario.churn_probability" => self.churn_probability = num(v)?,
            "road.length_m" => self.road.length_m = num(v)?,
            "road.lane_width_m" => self.road.lane_width_m = num(v)?,
            "road.lanes" => self.road.lanes = num(v)?,
            "speed.min_mps" => self.speed_min_mps = num(v)?,
            "speed.max_mps" => self.speed_max_mps = num(v)?,
            "rf.carrier_freq_hz" => self.rf.carrier_freq = num(v)?,
            "rf.bandwidth_hz" => self.rf.bandwidth = num(v)?,
            "rf.tx_power_w" => self.rf.tx_power = num(v)?,
            "rf.noise_psd_w_per_hz" => self.rf.noise_psd = num(v)?,
            "align.t_probe_s" => self.timing.t_probe = num(v)?,
            "align.t_dsrc_frame_s" => self.timing.t_dsrc_frame = num(v)?,
            "align.n_dsrc_frames" => self.timing.n_dsrc_frames = num(v)?,
            "align.t_slot_s" => self.timing.t_slot = num(v)?,
            "align.sector_span_deg" => self.timing.sector_span_deg = num(v)?,
            "align.n_refine" => self.timing.n_refine = num(v)?,
            "align.elevation_span_deg" => {
                self.timing.elevation_span_deg = if v == "none" { None } else { Some(num(v)?) }
            }
            "align.sweep_widths_deg" => {
                self.sweep_widths_deg = v
                    .split(',')
                    .map(|s| num::<f64>(s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "protocol.radio_range_m" => self.protocol.radio_range_m = num(v)?,
            "protocol.join_timeout_s" => self.protocol.join_timeout_s = num(v)?,
            "protocol.join_retries" => self.protocol.join_retries = num(v)?,
            "protocol.retransmit_interval_s" => self.protocol.retransmit_interval_s = num(v)?,
            "protocol.max_retransmits" => self.protocol.max_retransmits = num(v)?,
            "protocol.shadow_tolerance_deg" => self.protocol.shadow_tolerance_deg = num(v)?,
            "network.min_delay_s" => self.network.min_delay_s = num(v)?,
            "network.max_delay_s" => self.network.max_delay_s = num(v)?,
            "network.drop_probability" => self.network.drop_probability = num(v)?,
            "gnn.learning_rate" => self.train.learning_rate = num(v)?,
            "gnn.epochs" => self.train.epochs = num(v)?,
            "gnn.instances_per_epoch" => self.train.instances_per_epoch = num(v)?,
            "gnn.links" => self.train.links = num(v)?,
            "wmmse.max_iterations" => self.wmmse.max_iterations = num(v)?,
            "wmmse.tolerance" => self.wmmse.tolerance = num(v)?,
            "wmmse.width_deg" => self.wmmse_width_deg = num(v)?,
            "eval.instances" => self.eval.instances = num(v)?,
            "eval.links" => self.eval.links = num(v)?,
            "fuzz.vehicles" => self.fuzz.vehicles = num(v)?,
            "fuzz.events" => self.fuzz.events = num(v)?,
            "fuzz.max_burst" => self.fuzz.max_burst = num(v)?,
            "fuzz.area_m" => self.fuzz.area_m = num(v)?,
            "fuzz.drop_probability" => self.fuzz.drop_probability = num(v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Fills fields derived from others.
    fn finish(&mut self) {
        self.wmmse.max_power = self.rf.tx_power;
        self.network.seed = crate::nncore::mix(self.seed, 0x6e_6574_776f_726b);
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        self.validate()
            .map_err(|(key, message)| ConfigError::InvalidValue {
                line: None,
                key: key.to_string(),
                message,
            })
    }

    /// Checks every range; on failure names the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        fn check(ok: bool, key: &'static str, msg: &str) -> Result<(), (&'static str, String)> {
            if ok {
                Ok(())
            } else {
                Err((key, msg.to_string()))
            }
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        check(self.vehicles >= 1, "scenario.vehicles", "must be >= 1")?;
        check(self.slots >= 1, "scenario.slots", "must be >= 1")?;
        check(
            (MIN_BEAMWIDTH_DEG..=MAX_BEAMWIDTH_DEG).contains(&self.fixed_width_deg),
            "scenario.fixed_width_deg",
            "must be in 1..=15",
        )?;
        check(
            prob(self.churn_probability),
            "scenario.churn_probability",
            "must be in [0, 1]",
        )?;
        check(pos(self.road.length_m), "road.length_m", "must be positive")?;
        check(
            pos(self.road.lane_width_m),
            "road.lane_width_m",
            "must be positive",
        )?;
        check(self.road.lanes >= 1, "road.lanes", "must be >= 1")?;
        check(
            self.speed_min_mps >= 0.0 && self.speed_min_mps.is_finite(),
            "speed.min_mps",
            "must be finite and >= 0",
        )?;
        check(
            self.speed_max_mps >= self.speed_min_mps && self.speed_max_mps.is_finite(),
            "speed.max_mps",
            "must be finite and >= speed.min_mps",
        )?;
        for (key, v) in [
            ("rf.carrier_freq_hz", self.rf.carrier_freq),
            ("rf.bandwidth_hz", self.rf.bandwidth),
            ("rf.tx_power_w", self.rf.tx_power),
            ("rf.noise_psd_w_per_hz", self.rf.noise_psd),
            ("align.t_probe_s", self.timing.t_probe),
            ("align.t_dsrc_frame_s", self.timing.t_dsrc_frame),
            ("align.t_slot_s", self.timing.t_slot),
            ("protocol.radio_range_m", self.protocol.radio_range_m),
            ("protocol.join_timeout_s", self.protocol.join_timeout_s),
            (
                "protocol.retransmit_interval_s",
                self.protocol.retransmit_interval_s,
            ),
            ("fuzz.area_m", self.fuzz.area_m),
        ] {
            check(pos(v), key, "must be positive and finite")?;
        }
        check(
            self.timing.n_dsrc_frames >= 1,
            "align.n_dsrc_frames",
            "must be >= 1",
        )?;
        check(self.timing.n_refine >= 1, "align.n_refine", "must be >= 1")?;
        check(
            self.timing.sector_span_deg > 0.0 && self.timing.sector_span_deg <= 360.0,
            "align.sector_span_deg",
            "must be in (0, 360]",
        )?;
        check(
            self.timing
                .elevation_span_deg
                .is_none_or(|s| s > 0.0 && s <= 180.0),
            "align.elevation_span_deg",
            "must be in (0, 180] or `none`",
        )?;
        check(
            !self.sweep_widths_deg.is_empty()
                && self.sweep_widths_deg.iter().all(|&w| w > 0.0 && w <= 360.0),
            "align.sweep_widths_deg",
            "every width must be in (0, 360]",
        )?;
        check(
            (0.0..=180.0).contains(&self.protocol.shadow_tolerance_deg),
            "protocol.shadow_tolerance_deg",
            "must be in [0, 180]",
        )?;
        check(
            self.network.min_delay_s >= 0.0 && self.network.min_delay_s.is_finite(),
            "network.min_delay_s",
            "must be finite and >= 0",
        )?;
        check(
            self.network.max_delay_s >= self.network.min_delay_s
                && self.network.max_delay_s.is_finite(),
            "network.max_delay_s",
            "must be finite and >= network.min_delay_s",
        )?;
        // A lossless link is needed for the scenario to make progress.
        check(
            (0.0..1.0).contains(&self.network.drop_probability),
            "network.drop_probability",
            "must be in [0, 1)",
        )?;
        check(
            self.train.learning_rate >= 0.0 && self.train.learning_rate.is_finite(),
            "gnn.learning_rate",
            "must be finite and >= 0",
        )?;
        check(self.train.epochs >= 1, "gnn.epochs", "must be >= 1")?;
        check(
            self.train.instances_per_epoch >= 1,
            "gnn.instances_per_epoch",
            "must be >= 1",
        )?;
        check(self.train.links >= 1, "gnn.links", "must be >= 1")?;
        check(
            self.wmmse.max_iterations >= 1,
            "wmmse.max_iterations",
            "must be >= 1",
        )?;
        check(
            self.wmmse.tolerance >= 0.0 && self.wmmse.tolerance.is_finite(),
            "wmmse.tolerance",
            "must be finite and >= 0",
        )?;
        check(
            self.wmmse_width_deg > 0.0 && self.wmmse_width_deg <= 360.0,
            "wmmse.width_deg",
            "must be in (0, 360]",
        )?;
        check(self.eval.instances >= 1, "eval.instances", "must be >= 1")?;
        check(self.eval.links >= 1, "eval.links", "must be >= 1")?;
        check(self.fuzz.vehicles >= 1, "fuzz.vehicles", "must be >= 1")?;
        check(self.fuzz.events >= 1, "fuzz.events", "must be >= 1")?;
        check(self.fuzz.max_burst >= 1, "fuzz.max_burst", "must be >= 1")?;
        check(
            (0.0..1.0).contains(&self.fuzz.drop_probability),
            "fuzz.drop_probability",
            "must be in [0, 1)",
        )?;
        Ok(())
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

fn num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| format!("cannot parse `{v}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_with_seed_validate() {
        let cfg = ScenarioConfig::parse("seed = 7\n", None).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.vehicles, 12);
        assert_eq!(cfg.wmmse.max_power, cfg.rf.tx_power);
        assert_eq!(cfg.sweep_widths_deg.len(), 9);
    }

    #[test]
    fn parses_sections_comments_and_quotes() {
        let text = "# scenario\nseed = 3\nscenario.method = gnn # inline\nscenario.checkpoint = \"m.ckpt\"\n\
                    rf.carrier_freq_hz = 28e9\nalign.sweep_widths_deg = 5, 10,20\nalign.elevation_span_deg = 30\n";
        let cfg = ScenarioConfig::parse(text, None).unwrap();
        assert_eq!(cfg.method, BeamformingMethod::Gnn);
        assert_eq!(cfg.checkpoint, Some(PathBuf::from("m.ckpt")));
        assert_eq!(cfg.rf.carrier_freq, 28e9);
        assert_eq!(cfg.sweep_widths_deg, vec![5.0, 10.0, 20.0]);
        assert_eq!(cfg.timing.elevation_span_deg, Some(30.0));
    }

    #[test]
    fn seed_is_mandatory_and_overridable() {
        assert_eq!(
            ScenarioConfig::parse("scenario.slots = 4", None),
            Err(ConfigError::MissingSeed)
        );
        assert_eq!(
            ScenarioConfig::parse("scenario.slots = 4", Some(9))
                .unwrap()
                .seed,
            9
        );
        assert_eq!(ScenarioConfig::parse("seed = 1", Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = ScenarioConfig::parse("seed = 1\nrf.colour = red\n", None).unwrap_err();
        assert_eq!(
            e,
            ConfigError::UnknownKey {
                line: 2,
                key: "rf.colour".into()
            }
        );
        let e = ScenarioConfig::parse("seed = 1\n\nroad.lanes = 0\n", None).unwrap_err();
        assert!(
            matches!(e, ConfigError::InvalidValue { line: Some(3), ref key, .. } if key == "road.lanes")
        );
        assert!(e.to_string().contains("line 3"));
        let e = ScenarioConfig::parse("seed = 1\nscenario.slots = many\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::InvalidValue { line: Some(2), .. }));
        let e = ScenarioConfig::parse("seed = 1\njunk\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }));
        let e = ScenarioConfig::parse("seed = 1\nseed = 2\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::DuplicateKey { line: 2, .. }));
        let e = ScenarioConfig::parse("seed = 1\nspeed.min_mps = 10\nspeed.max_mps = 5\n", None)
            .unwrap_err();
        assert!(matches!(e, ConfigError::InvalidValue { line: Some(3), .. }));
        let e =
            ScenarioConfig::parse("seed = 1\nalign.sweep_widths_deg = 5, 400\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::InvalidValue { line: Some(2), .. }));
    }

    #[test]
    fn network_seed_follows_scenario_seed() {
        let a = ScenarioConfig::parse("seed = 1", None).unwrap();
        let b = ScenarioConfig::parse("seed = 2", None).unwrap();
        assert_ne!(a.network.seed, b.network.seed);
    }
}
