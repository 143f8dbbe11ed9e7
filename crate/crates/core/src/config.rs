//! Flat `key = value` configuration files covering the simulator, the CDR
//! synthesizer, and the evaluation harness in one namespace. Unknown keys
//! are rejected by name; coupled knobs (seed, track length, event rate) set
//! every struct they affect.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::calibration::{CalibratorKind, DEFAULT_KDE_BANDWIDTH};
use crate::evaluation::ExperimentConfig;
use crate::scoring::{FeatureSet, ScorerKind};
use crate::sim::SimConfig;
use crate::synthesis::SynthesisConfig;
use crate::{Error, Result};

/// Everything a config file can set, with defaults for the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub sim: SimConfig,
    pub synthesis: SynthesisConfig,
    pub experiment: ExperimentConfig,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            sim: SimConfig::default(),
            synthesis: SynthesisConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Parses a wall-clock time `HH:MM` into seconds after midnight; `24:00`
/// (end of day) is allowed as a window end.
pub fn parse_clock(value: &str) -> Result<i64> {
    let invalid = || Error::ConfigValue {
        key: "clock".into(),
        reason: format!("expected HH:MM between 00:00 and 24:00, got {value:?}"),
    };
    let (h, m) = value.split_once(':').ok_or_else(invalid)?;
    let hours: i64 = h.parse().map_err(|_| invalid())?;
    let minutes: i64 = m.parse().map_err(|_| invalid())?;
    if !(0..=24).contains(&hours) || !(0..60).contains(&minutes) || (hours == 24 && minutes != 0) {
        return Err(invalid());
    }
    Ok(hours * 3600 + minutes * 60)
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::ConfigValue {
        key: key.into(),
        reason: format!("cannot parse {value:?}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::ConfigValue {
            key: key.into(),
            reason: format!("expected true or false, got {value:?}"),
        }),
    }
}

fn parse_scorer(value: &str) -> Result<ScorerKind> {
    [
        ScorerKind::TwoStepLogistic,
        ScorerKind::OnedimBinning,
        ScorerKind::DislocationCount,
        ScorerKind::MeanDistance,
        ScorerKind::Constant,
    ]
    .into_iter()
    .find(|k| k.name() == value)
    .ok_or_else(|| Error::ConfigValue {
        key: "scorer".into(),
        reason: format!(
            "unknown scorer {value:?}; expected two_step_logistic, onedim_binning, \
             dislocation_count, mean_distance, or constant"
        ),
    })
}

fn parse_features(value: &str) -> Result<FeatureSet> {
    let mut fs = FeatureSet {
        distance: false,
        dt: false,
        speed: false,
        bearing: false,
    };
    for part in value.split('+') {
        match part.trim() {
            "distance" => fs.distance = true,
            "dt" => fs.dt = true,
            "speed" => fs.speed = true,
            "bearing" => fs.bearing = true,
            other => {
                return Err(Error::ConfigValue {
                    key: "features".into(),
                    reason: format!(
                        "unknown feature {other:?}; expected a +-joined subset of \
                         distance, dt, speed, bearing"
                    ),
                })
            }
        }
    }
    fs.validate()?;
    Ok(fs)
}

impl FileConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let clock = |v: &str, key: &str| {
            parse_clock(v).map_err(|_| Error::ConfigValue {
                key: key.into(),
                reason: format!("expected HH:MM between 00:00 and 24:00, got {v:?}"),
            })
        };
        match key {
            // population simulator
            "n_users" => self.sim.n_users = parse_num(key, value)?,
            "phones_per_user" => self.sim.phones_per_user = parse_num(key, value)?,
            "n_days" => self.sim.n_days = parse_num(key, value)?,
            "anchor_dispersion_m" => self.sim.anchor_dispersion_m = parse_num(key, value)?,
            "commute_offset_m" => self.sim.commute_offset_m = parse_num(key, value)?,
            "travel_speed_mps" => self.sim.travel_speed_mps = parse_num(key, value)?,
            "tower_grid_spacing_m" => self.sim.tower_grid_spacing_m = parse_num(key, value)?,
            "tower_snap_noise_m" => self.sim.tower_snap_noise_m = parse_num(key, value)?,
            "log_interval_s" => self.sim.log_interval_s = parse_num(key, value)?,

            // CDR synthesis and track extraction
            "window_start" => self.synthesis.window_start_local = clock(value, key)?,
            "window_end" => self.synthesis.window_end_local = clock(value, key)?,
            "min_coverage" => self.synthesis.min_coverage = parse_num(key, value)?,
            "min_movement_m" => self.synthesis.min_movement = parse_num(key, value)?,
            "utc_offset_s" => self.synthesis.utc_offset_s = parse_num(key, value)?,

            // harness
            "n_repeats" => self.experiment.n_repeats = parse_num(key, value)?,
            "test_fraction" => self.experiment.test_fraction = parse_num(key, value)?,
            "calibration_fraction" => {
                self.experiment.calibration_fraction_of_train = parse_num(key, value)?
            }
            "scorer" => self.experiment.scorer = parse_scorer(value)?,
            "calibrator" => {
                self.experiment.calibrator = match value {
                    "kde" => {
                        // keep a bandwidth already set by kde_bandwidth
                        match self.experiment.calibrator {
                            CalibratorKind::Kde { bandwidth } => CalibratorKind::Kde { bandwidth },
                            _ => CalibratorKind::Kde {
                                bandwidth: DEFAULT_KDE_BANDWIDTH,
                            },
                        }
                    }
                    "gaussian" => CalibratorKind::Gaussian,
                    "isotonic_pav" => CalibratorKind::IsotonicPav,
                    "none" => CalibratorKind::None,
                    _ => {
                        return Err(Error::ConfigValue {
                            key: key.into(),
                            reason: format!(
                                "unknown calibrator {value:?}; expected kde, gaussian, \
                                 isotonic_pav, or none"
                            ),
                        })
                    }
                }
            }
            "kde_bandwidth" => {
                let bandwidth: f64 = parse_num(key, value)?;
                match self.experiment.calibrator {
                    CalibratorKind::Kde { .. } => {
                        self.experiment.calibrator = CalibratorKind::Kde { bandwidth }
                    }
                    _ => {
                        return Err(Error::ConfigValue {
                            key: key.into(),
                            reason: "only meaningful with calibrator = kde".into(),
                        })
                    }
                }
            }
            "features" => self.experiment.features = parse_features(value)?,
            "group_by_user" => self.experiment.group_by_user = parse_bool(key, value)?,

            // coupled knobs
            "days_per_track" => {
                let days: u32 = parse_num(key, value)?;
                self.synthesis.days_per_track = days;
                self.experiment.days_per_track = days;
            }
            "events_per_hour" => {
                let rate: f64 = parse_num(key, value)?;
                self.synthesis.rate = rate;
                self.experiment.events_per_hour = rate;
            }
            "seed" => self.apply_seed(parse_num(key, value)?),

            _ => return Err(Error::ConfigKey(key.to_string())),
        }
        Ok(())
    }

    /// Sets the master seed everywhere it matters.
    pub fn apply_seed(&mut self, seed: u64) {
        self.sim.seed = seed;
        self.synthesis.seed = seed;
        self.experiment.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.synthesis.validate()?;
        self.experiment.validate()?;
        Ok(())
    }
}

/// Parses a whole config document: one `key = value` per line, `#` comments,
/// blank lines ignored.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut cfg = FileConfig::default();
    for raw in text.lines() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigValue {
            key: line.to_string(),
            reason: "expected `key = value`".into(),
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, FileConfig::default());
        assert_eq!(cfg.experiment.n_repeats, 100);
        assert_eq!(cfg.synthesis.rate, 1.0);
    }

    #[test]
    fn clock_values_parse_and_reject() {
        assert_eq!(parse_clock("07:00").unwrap(), 7 * 3600);
        assert_eq!(parse_clock("22:00").unwrap(), 22 * 3600);
        assert_eq!(parse_clock("24:00").unwrap(), 86_400);
        assert_eq!(parse_clock("09:30").unwrap(), 9 * 3600 + 30 * 60);
        for bad in ["7", "07:60", "25:00", "24:01", "aa:bb", "-1:00"] {
            assert!(parse_clock(bad).is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn full_document_sets_every_struct() {
        let text = "\
# population
n_users = 5
phones_per_user = 2
n_days = 3
log_interval_s = 60
tower_snap_noise_m = 100

# synthesis
window_start = 08:00
window_end = 20:00
min_coverage = 0.7
min_movement_m = 5000
days_per_track = 2
events_per_hour = 0.5

# harness
n_repeats = 10
test_fraction = 0.25
calibration_fraction = 0.4
scorer = mean_distance
calibrator = kde
kde_bandwidth = 0.1
features = distance+speed
group_by_user = true
seed = 42
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.sim.n_users, 5);
        assert_eq!(cfg.sim.n_days, 3);
        assert_eq!(cfg.sim.log_interval_s, 60);
        assert_eq!(cfg.synthesis.window_start_local, 8 * 3600);
        assert_eq!(cfg.synthesis.window_end_local, 20 * 3600);
        assert_eq!(cfg.synthesis.min_coverage, 0.7);
        assert_eq!(cfg.synthesis.min_movement, 5000.0);
        assert_eq!(cfg.synthesis.days_per_track, 2);
        assert_eq!(cfg.experiment.days_per_track, 2);
        assert_eq!(cfg.synthesis.rate, 0.5);
        assert_eq!(cfg.experiment.events_per_hour, 0.5);
        assert_eq!(cfg.experiment.n_repeats, 10);
        assert_eq!(cfg.experiment.scorer, ScorerKind::MeanDistance);
        assert_eq!(
            cfg.experiment.calibrator,
            CalibratorKind::Kde { bandwidth: 0.1 }
        );
        assert!(cfg.experiment.features.distance && cfg.experiment.features.speed);
        assert!(!cfg.experiment.features.dt);
        assert!(cfg.experiment.group_by_user);
        assert_eq!(cfg.sim.seed, 42);
        assert_eq!(cfg.synthesis.seed, 42);
        assert_eq!(cfg.experiment.seed, 42);
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        match parse_config("bogus_knob = 3") {
            Err(Error::ConfigKey(k)) => assert_eq!(k, "bogus_knob"),
            other => panic!("expected ConfigKey error, got {other:?}"),
        }
    }

    #[test]
    fn bad_values_name_their_key() {
        match parse_config("n_repeats = many") {
            Err(Error::ConfigValue { key, .. }) => assert_eq!(key, "n_repeats"),
            other => panic!("expected ConfigValue error, got {other:?}"),
        }
        match parse_config("window_start = 8am") {
            Err(Error::ConfigValue { key, .. }) => assert_eq!(key, "window_start"),
            other => panic!("expected ConfigValue error, got {other:?}"),
        }
        assert!(parse_config("scorer = nonsense").is_err());
        assert!(parse_config("features = distance+altitude").is_err());
        // bandwidth for a non-KDE calibrator is rejected
        assert!(parse_config("calibrator = gaussian\nkde_bandwidth = 0.1\n").is_err());
    }

    #[test]
    fn kde_bandwidth_order_is_flexible_when_calibrator_is_kde() {
        let cfg = parse_config("calibrator = kde\nkde_bandwidth = 0.025\n").unwrap();
        assert_eq!(
            cfg.experiment.calibrator,
            CalibratorKind::Kde { bandwidth: 0.025 }
        );
        // the default calibrator is already KDE, so bandwidth-first works
        // too, and a later explicit `calibrator = kde` keeps it
        let cfg = parse_config("kde_bandwidth = 0.025\ncalibrator = kde\n").unwrap();
        assert_eq!(
            cfg.experiment.calibrator,
            CalibratorKind::Kde { bandwidth: 0.025 }
        );
    }

    #[test]
    fn values_are_validated_after_parsing() {
        assert!(matches!(
            parse_config("test_fraction = 1.5"),
            Err(Error::ConfigValue { .. })
        ));
        assert!(matches!(
            parse_config("phones_per_user = 9"),
            Err(Error::ConfigValue { .. })
        ));
    }

    #[test]
    fn comments_and_spacing_are_tolerated() {
        let cfg = parse_config("  n_users   =  7   # lucky\n\n\n# nothing\n").unwrap();
        assert_eq!(cfg.sim.n_users, 7);
    }
}
