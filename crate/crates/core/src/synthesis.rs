//! Turning continuous location logs into sparse, CDR-like data: Poisson
//! event sampling, nearest-entry coordinate assignment, cutting measurements
//! into filtered daily tracks, and pairing tracks into labeled track pairs.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sim::{simulate_phone_log, SimConfig};
use crate::track::{track_time_coverage, track_total_movement, Measurement, PairLabel, Track, TrackPair};
use crate::{derive_seed, fnv1a64, Error, Result};

/// How a continuous log is thinned into registration events and cut into
/// tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Registration events per hour.
    pub rate: f64,
    /// Daily window start, seconds after local midnight.
    pub window_start_local: i64,
    /// Daily window end, seconds after local midnight.
    pub window_end_local: i64,
    /// Calendar days combined into one track.
    pub days_per_track: u32,
    /// Minimum fraction of the track window spanned by its events.
    pub min_coverage: f64,
    /// Minimum summed movement per day, meters.
    pub min_movement: f64,
    /// Fixed offset of local time from UTC, seconds (no DST).
    pub utc_offset_s: i64,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            rate: 1.0,
            window_start_local: 7 * 3600,
            window_end_local: 22 * 3600,
            days_per_track: 1,
            min_coverage: 0.8,
            min_movement: 10_000.0,
            utc_offset_s: 0,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, reason: String| {
            Err(Error::ConfigValue {
                key: key.to_string(),
                reason,
            })
        };
        if !(self.rate.is_finite() && self.rate > 0.0 && self.rate <= 3600.0) {
            return err("rate", format!("{} not in (0, 3600]", self.rate));
        }
        if !(0..86_400).contains(&self.window_start_local) {
            return err("window_start_local", "must be in [00:00, 24:00)".into());
        }
        if !(self.window_end_local > self.window_start_local && self.window_end_local <= 86_400) {
            return err(
                "window_end_local",
                "must be after window_start_local and at most 24:00".into(),
            );
        }
        if !(1..=60).contains(&self.days_per_track) {
            return err("days_per_track", format!("{} not in 1..=60", self.days_per_track));
        }
        if !(self.min_coverage > 0.0 && self.min_coverage <= 1.0) {
            return err("min_coverage", format!("{} not in (0, 1]", self.min_coverage));
        }
        if !(self.min_movement >= 0.0 && self.min_movement.is_finite()) {
            return err("min_movement", "must be finite and non-negative".into());
        }
        if self.utc_offset_s.abs() > 86_400 {
            return err("utc_offset_s", "must be within one day of UTC".into());
        }
        Ok(())
    }
}

/// Event times of a homogeneous Poisson process on `[t0, t1)`, whole
/// seconds, sorted. Rate 0 is allowed and yields no events.
pub fn sample_event_times(rate_per_hour: f64, t0: i64, t1: i64, seed: u64) -> Vec<i64> {
    assert!(
        rate_per_hour.is_finite() && rate_per_hour >= 0.0,
        "rate must be non-negative"
    );
    assert!(t1 > t0, "window must be non-empty");
    if rate_per_hour == 0.0 {
        return Vec::new();
    }
    let rate_per_second = rate_per_hour / 3600.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut t = t0 as f64;
    loop {
        // 1 - gen() lies in (0, 1], keeping ln finite.
        let u: f64 = 1.0 - rng.gen::<f64>();
        t += -u.ln() / rate_per_second;
        if t >= t1 as f64 {
            break;
        }
        out.push(t.floor() as i64);
    }
    out
}

/// Index of the entry in `times` (sorted ascending) closest to `t`;
/// equidistant neighbours resolve to the earlier entry.
fn nearest_entry(times: &[i64], t: i64) -> usize {
    let idx = times.partition_point(|&x| x <= t);
    if idx == 0 {
        return 0;
    }
    if idx == times.len() {
        return times.len() - 1;
    }
    if t - times[idx - 1] <= times[idx] - t {
        idx - 1
    } else {
        idx
    }
}

/// One measurement per event time, carrying the event time itself and the
/// location/cell of the log entry nearest in time.
pub fn synthesize_cdr(log: &[Measurement], event_times: &[i64]) -> Result<Vec<Measurement>> {
    if log.is_empty() {
        return Err(Error::EmptyInput("log"));
    }
    debug_assert!(log.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    let times: Vec<i64> = log.iter().map(|m| m.timestamp).collect();
    Ok(event_times
        .iter()
        .map(|&t| {
            let src = &log[nearest_entry(&times, t)];
            Measurement {
                timestamp: t,
                location: src.location,
                cell_id: src.cell_id.clone(),
            }
        })
        .collect())
}

/// Cuts measurements into tracks of `days_per_track` consecutive local
/// calendar days (chunks aligned to the epoch, so every phone shares chunk
/// boundaries), keeping only in-window measurements, then applies the
/// coverage and movement filters.
pub fn extract_daily_tracks(
    phone_id: &str,
    user_id: &str,
    ms: &[Measurement],
    cfg: &SynthesisConfig,
) -> Result<Vec<Track>> {
    cfg.validate()?;
    let k = cfg.days_per_track as i64;
    let mut chunks: BTreeMap<i64, Vec<Measurement>> = BTreeMap::new();
    for m in ms {
        let local = m.timestamp + cfg.utc_offset_s;
        let time_of_day = local.rem_euclid(86_400);
        if time_of_day < cfg.window_start_local || time_of_day > cfg.window_end_local {
            continue;
        }
        let day = local.div_euclid(86_400);
        chunks.entry(day.div_euclid(k)).or_default().push(m.clone());
    }

    let mut out = Vec::new();
    for (chunk, mut sel) in chunks {
        sel.sort_by_key(|m| m.timestamp);
        let first_day = chunk * k;
        let last_day = first_day + k - 1;
        let window_start = first_day * 86_400 + cfg.window_start_local - cfg.utc_offset_s;
        let window_end = last_day * 86_400 + cfg.window_end_local - cfg.utc_offset_s;
        let track = Track::new(phone_id, user_id, window_start, window_end, sel)?;
        if track_time_coverage(&track) >= cfg.min_coverage
            && track_total_movement(&track) >= cfg.min_movement * k as f64
        {
            out.push(track);
        }
    }
    Ok(out)
}

/// All unordered pairs of tracks that share the same date range and belong
/// to distinct phones, labeled by whether their users match.
pub fn pair_tracks(tracks: &[Track]) -> Result<Vec<TrackPair>> {
    let mut by_window: BTreeMap<(i64, i64), Vec<&Track>> = BTreeMap::new();
    for t in tracks {
        by_window
            .entry((t.window_start(), t.window_end()))
            .or_default()
            .push(t);
    }
    let mut out = Vec::new();
    for group in by_window.values() {
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                let (a, b) = (group[i], group[j]);
                if a.phone_id() == b.phone_id() {
                    continue;
                }
                let label = if a.user_id() == b.user_id() {
                    PairLabel::SameUser
                } else {
                    PairLabel::DifferentUser
                };
                out.push(TrackPair::new(a.clone(), b.clone(), label)?);
            }
        }
    }
    Ok(out)
}

/// Full per-phone synthesis: Poisson events over the log span (seeded from
/// the config seed mixed with the phone id), nearest-entry assignment, track
/// cutting and filtering.
pub fn synthesize_phone_tracks(
    ms: &[Measurement],
    phone_id: &str,
    user_id: &str,
    cfg: &SynthesisConfig,
) -> Result<Vec<Track>> {
    cfg.validate()?;
    if ms.len() < 2 {
        return Ok(Vec::new());
    }
    let seed = derive_seed(cfg.seed, fnv1a64(phone_id.as_bytes()));
    let events = sample_event_times(cfg.rate, ms[0].timestamp, ms[ms.len() - 1].timestamp, seed);
    if events.is_empty() {
        return Ok(Vec::new());
    }
    let cdr = synthesize_cdr(ms, &events)?;
    extract_daily_tracks(phone_id, user_id, &cdr, cfg)
}

/// Simulates a population and turns it into labeled track pairs, one phone
/// at a time so the dense logs never coexist in memory.
pub fn build_simulated_pairs(
    sim_cfg: &SimConfig,
    syn_cfg: &SynthesisConfig,
) -> Result<Vec<TrackPair>> {
    sim_cfg.validate()?;
    syn_cfg.validate()?;
    let mut tracks = Vec::new();
    for user in 0..sim_cfg.n_users {
        for phone in 0..sim_cfg.phones_per_user {
            let log = simulate_phone_log(sim_cfg, user, phone)?;
            let ms = log.measurements();
            tracks.extend(synthesize_phone_tracks(
                &ms,
                &log.phone_id,
                &log.user_id,
                syn_cfg,
            )?);
        }
    }
    pair_tracks(&tracks)
}
