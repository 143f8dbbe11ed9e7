//! Measurements, tracks and track pairs.
//!
//! A track is one phone's measurements inside one (or several consecutive)
//! 15-hour daily windows. Track pairs carry the ground-truth label used for
//! training and evaluation, or [`PairLabel::Unknown`] in case work.

use serde::{Deserialize, Serialize};

use crate::geo::{haversine_distance, GeoPoint};
use crate::{Error, Result};

/// Seconds in a single daily window (07:00-22:00).
pub const WINDOW_SECONDS: i64 = 15 * 3600;
/// Seconds per day.
pub const DAY_SECONDS: i64 = 24 * 3600;

/// One timestamped cell-tower registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// UTC seconds, > 0.
    pub timestamp: i64,
    pub location: GeoPoint,
    pub cell_id: Option<String>,
}

/// The two competing hypotheses about a pair of phones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// The phones were carried by the same user.
    SameUser,
    /// The phones were carried by different users.
    DifferentUser,
}

/// Ground-truth label of a track pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    SameUser,
    DifferentUser,
    Unknown,
}

impl PairLabel {
    pub fn hypothesis(self) -> Option<Hypothesis> {
        match self {
            PairLabel::SameUser => Some(Hypothesis::SameUser),
            PairLabel::DifferentUser => Some(Hypothesis::DifferentUser),
            PairLabel::Unknown => None,
        }
    }
}

/// One phone's measurements within one or more consecutive daily windows.
///
/// For a multi-day track the overnight gaps between consecutive daily
/// windows are included in the overall `[window_start, window_end]` span,
/// so a track built from the default 07:00–22:00 window over `d` days has
/// length `15 h + (d - 1) * 24 h`. The type itself only requires a positive
/// window; the daily structure comes from the track extractor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Track {
    phone_id: String,
    user_id: String,
    window_start: i64,
    window_end: i64,
    measurements: Vec<Measurement>,
}

impl Track {
    /// Validates the track invariants: a positive window and positive,
    /// sorted timestamps inside it.
    pub fn new(
        phone_id: impl Into<String>,
        user_id: impl Into<String>,
        window_start: i64,
        window_end: i64,
        measurements: Vec<Measurement>,
    ) -> Result<Track> {
        let phone_id = phone_id.into();
        let err = |reason: String| Error::InvalidTrack {
            phone_id: phone_id.clone(),
            reason,
        };

        if window_end <= window_start {
            return Err(err(format!(
                "empty window [{window_start}, {window_end}]"
            )));
        }
        let mut prev = i64::MIN;
        for m in &measurements {
            if m.timestamp <= 0 {
                return Err(err(format!("non-positive timestamp {}", m.timestamp)));
            }
            if m.timestamp < prev {
                return Err(err("measurements not sorted by timestamp".into()));
            }
            if m.timestamp < window_start || m.timestamp > window_end {
                return Err(err(format!(
                    "timestamp {} outside window [{window_start}, {window_end}]",
                    m.timestamp
                )));
            }
            prev = m.timestamp;
        }
        Ok(Track {
            phone_id,
            user_id: user_id.into(),
            window_start,
            window_end,
            measurements,
        })
    }

    pub fn phone_id(&self) -> &str {
        &self.phone_id
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn window_start(&self) -> i64 {
        self.window_start
    }

    pub fn window_end(&self) -> i64 {
        self.window_end
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    /// Number of calendar days the track covers.
    pub fn days(&self) -> i64 {
        (self.window_end - self.window_start + DAY_SECONDS - 1) / DAY_SECONDS
    }
}

/// Fraction of the track window spanned by its measurements.
///
/// Zero for tracks with fewer than two measurements.
pub fn track_time_coverage(t: &Track) -> f64 {
    let ms = t.measurements();
    if ms.len() < 2 {
        return 0.0;
    }
    let span = (ms[ms.len() - 1].timestamp - ms[0].timestamp) as f64;
    span / (t.window_end() - t.window_start()) as f64
}

/// Total great-circle distance over consecutive measurement pairs, meters.
pub fn track_total_movement(t: &Track) -> f64 {
    t.measurements()
        .windows(2)
        .map(|w| haversine_distance(w[0].location, w[1].location))
        .sum()
}

/// Two tracks of distinct phones over the same date range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackPair {
    a: Track,
    b: Track,
    label: PairLabel,
}

impl TrackPair {
    pub fn new(a: Track, b: Track, label: PairLabel) -> Result<TrackPair> {
        if a.phone_id() == b.phone_id() {
            return Err(Error::InvalidPair(format!(
                "both tracks belong to phone {}",
                a.phone_id()
            )));
        }
        if a.window_start() != b.window_start() || a.window_end() != b.window_end() {
            return Err(Error::InvalidPair(format!(
                "tracks cover different date ranges: [{}, {}] vs [{}, {}]",
                a.window_start(),
                a.window_end(),
                b.window_start(),
                b.window_end()
            )));
        }
        Ok(TrackPair { a, b, label })
    }

    pub fn a(&self) -> &Track {
        &self.a
    }

    pub fn b(&self) -> &Track {
        &self.b
    }

    pub fn label(&self) -> PairLabel {
        self.label
    }

    /// Stable identifier used in reports and error messages.
    pub fn pair_id(&self) -> String {
        format!(
            "{}|{}@{}",
            self.a.phone_id(),
            self.b.phone_id(),
            self.a.window_start()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(timestamp: i64, lat: f64, lon: f64) -> Measurement {
        Measurement {
            timestamp,
            location: GeoPoint::new(lat, lon).unwrap(),
            cell_id: None,
        }
    }

    /// 07:00 UTC on an arbitrary day, seconds.
    const W0: i64 = 19_000 * DAY_SECONDS + 7 * 3600;

    fn track(ms: Vec<Measurement>) -> Track {
        Track::new("p1", "u1", W0, W0 + WINDOW_SECONDS, ms).unwrap()
    }

    #[test]
    fn rejects_bad_windows_and_orderings() {
        assert!(Track::new("p", "u", W0, W0, vec![]).is_err());
        assert!(Track::new("p", "u", W0, W0 - 100, vec![]).is_err());
        // Two whole days is fine.
        assert!(Track::new("p", "u", W0, W0 + WINDOW_SECONDS + DAY_SECONDS, vec![]).is_ok());
        // Out of window.
        assert!(Track::new(
            "p",
            "u",
            W0,
            W0 + WINDOW_SECONDS,
            vec![m(W0 - 1, 52.0, 4.0)]
        )
        .is_err());
        // Unsorted.
        assert!(Track::new(
            "p",
            "u",
            W0,
            W0 + WINDOW_SECONDS,
            vec![m(W0 + 10, 52.0, 4.0), m(W0 + 5, 52.0, 4.0)]
        )
        .is_err());
    }

    #[test]
    fn day_count_follows_window_length() {
        let t1 = Track::new("p", "u", W0, W0 + WINDOW_SECONDS, vec![]).unwrap();
        assert_eq!(t1.days(), 1);
        let t2 = Track::new("p", "u", W0, W0 + WINDOW_SECONDS + DAY_SECONDS, vec![]).unwrap();
        assert_eq!(t2.days(), 2);
        let full_day = Track::new("p", "u", W0, W0 + DAY_SECONDS, vec![]).unwrap();
        assert_eq!(full_day.days(), 1);
    }

    #[test]
    fn coverage_degenerate_and_full_span() {
        assert_eq!(track_time_coverage(&track(vec![])), 0.0);
        assert_eq!(track_time_coverage(&track(vec![m(W0, 52.0, 4.0)])), 0.0);
        let full = track(vec![m(W0, 52.0, 4.0), m(W0 + WINDOW_SECONDS, 52.0, 4.0)]);
        assert_eq!(track_time_coverage(&full), 1.0);
    }

    #[test]
    fn coverage_twelve_of_fifteen_hours() {
        // Events at 07:00 and 19:00 in a 15 h window.
        let t = track(vec![m(W0, 52.0, 4.0), m(W0 + 12 * 3600, 52.0, 4.0)]);
        assert!((track_time_coverage(&t) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn coverage_monotone_under_appending_later_measurement() {
        let base = vec![m(W0 + 100, 52.0, 4.0), m(W0 + 200, 52.0, 4.0)];
        let before = track_time_coverage(&track(base.clone()));
        let mut more = base;
        more.push(m(W0 + 5000, 52.0, 4.0));
        assert!(track_time_coverage(&track(more)) >= before);
    }

    #[test]
    fn movement_sums_consecutive_distances() {
        assert_eq!(track_total_movement(&track(vec![m(W0, 52.0, 4.0)])), 0.0);
        let same_spot = track(vec![m(W0, 52.0, 4.0), m(W0 + 10, 52.0, 4.0)]);
        assert_eq!(track_total_movement(&same_spot), 0.0);

        // Three points on a meridian, each consecutive gap 6000 m on the
        // sphere (latitude step derived from the 50-digit oracle).
        let dlat = 0.05395929635512383;
        let t = track(vec![
            m(W0, 52.0, 4.0),
            m(W0 + 10, 52.0 + dlat, 4.0),
            m(W0 + 20, 52.0 + 2.0 * dlat, 4.0),
        ]);
        assert!((track_total_movement(&t) - 12_000.0).abs() < 0.2);
    }

    #[test]
    fn movement_invariant_under_reversal_and_resort() {
        let pts = vec![
            m(W0, 52.0, 4.0),
            m(W0 + 10, 52.1, 4.05),
            m(W0 + 20, 52.05, 4.2),
            m(W0 + 30, 51.95, 4.1),
        ];
        let fwd = track_total_movement(&track(pts.clone()));
        // Reverse spatial order by flipping timestamps, then re-sort.
        let n = pts.len();
        let mut rev: Vec<Measurement> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| Measurement {
                timestamp: W0 + 10 * (n - 1 - i) as i64,
                ..p.clone()
            })
            .collect();
        rev.sort_by_key(|p| p.timestamp);
        let bwd = track_total_movement(&track(rev));
        assert!((fwd - bwd).abs() < 1e-9);
    }

    #[test]
    fn pair_requires_distinct_phones_and_equal_windows() {
        let t1 = track(vec![m(W0, 52.0, 4.0)]);
        let mut t2 = track(vec![m(W0, 52.0, 4.0)]);
        assert!(TrackPair::new(t1.clone(), t2.clone(), PairLabel::SameUser).is_err());
        t2 = Track::new("p2", "u2", W0, W0 + WINDOW_SECONDS, vec![]).unwrap();
        assert!(TrackPair::new(t1.clone(), t2, PairLabel::DifferentUser).is_ok());
        let other_day = Track::new(
            "p2",
            "u2",
            W0 + DAY_SECONDS,
            W0 + DAY_SECONDS + WINDOW_SECONDS,
            vec![],
        )
        .unwrap();
        assert!(TrackPair::new(t1, other_day, PairLabel::DifferentUser).is_err());
    }
}
