//! Switches — time-adjacent registrations of the two phones of a pair —
//! their per-switch features, and robust feature scaling.
//!
//! Merging both tracks by time, every consecutive pair of measurements that
//! comes from different phones is a switch: the tightest observable
//! constraint on how far apart the two phones could have been.

use serde::{Deserialize, Serialize};

use crate::geo::{bearing_difference, haversine_distance, initial_bearing, GeoPoint};
use crate::track::{Measurement, TrackPair};
use crate::{Error, Result};

/// Which track of the pair a merged measurement came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhoneSide {
    A,
    B,
}

impl PhoneSide {
    pub fn other(self) -> PhoneSide {
        match self {
            PhoneSide::A => PhoneSide::B,
            PhoneSide::B => PhoneSide::A,
        }
    }
}

/// Two consecutive cross-phone measurements in the merged timeline, plus
/// each phone's own previous position (for the direction feature).
#[derive(Debug, Clone)]
pub struct Switch {
    pub first: Measurement,
    pub second: Measurement,
    pub first_side: PhoneSide,
    pub second_side: PhoneSide,
    pub prev_first: Option<GeoPoint>,
    pub prev_second: Option<GeoPoint>,
}

/// Raw per-switch features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchFeatures {
    pub distance_m: f64,
    pub dt_s: f64,
    pub speed_mps: f64,
    /// Absolute difference of the two phones' travel directions into the
    /// switch, folded to [0, 180]; absent when either phone has no prior
    /// measurement.
    pub bearing_diff_deg: Option<f64>,
}

/// Merges the pair's tracks by (timestamp, phone_id) and returns every
/// consecutive cross-phone pair, in timeline order. Which track is `a` does
/// not matter: the merge key depends only on phone identities.
pub fn extract_switches(pair: &TrackPair) -> Vec<Switch> {
    struct Entry<'a> {
        m: &'a Measurement,
        phone_id: &'a str,
        side: PhoneSide,
        index: usize,
    }
    let mut merged: Vec<Entry> = Vec::with_capacity(
        pair.a().measurements().len() + pair.b().measurements().len(),
    );
    for (side, track) in [(PhoneSide::A, pair.a()), (PhoneSide::B, pair.b())] {
        for (index, m) in track.measurements().iter().enumerate() {
            merged.push(Entry {
                m,
                phone_id: track.phone_id(),
                side,
                index,
            });
        }
    }
    merged.sort_by(|x, y| (x.m.timestamp, x.phone_id).cmp(&(y.m.timestamp, y.phone_id)));

    let prev_location = |e: &Entry| {
        let track = match e.side {
            PhoneSide::A => pair.a(),
            PhoneSide::B => pair.b(),
        };
        e.index
            .checked_sub(1)
            .map(|i| track.measurements()[i].location)
    };

    merged
        .windows(2)
        .filter(|w| w[0].side != w[1].side)
        .map(|w| Switch {
            first: w[0].m.clone(),
            second: w[1].m.clone(),
            first_side: w[0].side,
            second_side: w[1].side,
            prev_first: prev_location(&w[0]),
            prev_second: prev_location(&w[1]),
        })
        .collect()
}

/// Distance, time difference, speed and optional direction difference for
/// one switch. Equal timestamps are treated as 1 s apart, so speed is always
/// finite.
pub fn compute_features(s: &Switch) -> SwitchFeatures {
    let distance_m = haversine_distance(s.first.location, s.second.location);
    let dt_s = (s.second.timestamp - s.first.timestamp).max(1) as f64;
    let speed_mps = distance_m / dt_s;
    let bearing_diff_deg = match (s.prev_first, s.prev_second) {
        (Some(pf), Some(ps)) => {
            let into_first = initial_bearing(pf, s.first.location);
            let into_second = initial_bearing(ps, s.second.location);
            Some(bearing_difference(into_first, into_second))
        }
        _ => None,
    };
    SwitchFeatures {
        distance_m,
        dt_s,
        speed_mps,
        bearing_diff_deg,
    }
}

/// Per-column medians and interquartile ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub medians: Vec<f64>,
    pub iqrs: Vec<f64>,
}

/// Linear-interpolation quantile of a sorted slice (the common "type 7"
/// convention): index h = (n-1)·p, interpolated between its neighbours.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits per-column median/IQR over feature rows of equal width.
pub fn fit_robust_scaler(rows: &[Vec<f64>]) -> Result<ScalerParams> {
    let Some(first) = rows.first() else {
        return Err(Error::EmptyInput("scaler training set"));
    };
    let width = first.len();
    let mut medians = Vec::with_capacity(width);
    let mut iqrs = Vec::with_capacity(width);
    for col in 0..width {
        let mut values = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: row.len(),
                });
            }
            if !row[col].is_finite() {
                return Err(Error::NonFiniteFeature);
            }
            values.push(row[col]);
        }
        values.sort_by(|a, b| a.total_cmp(b));
        medians.push(quantile_sorted(&values, 0.5));
        iqrs.push(quantile_sorted(&values, 0.75) - quantile_sorted(&values, 0.25));
    }
    Ok(ScalerParams { medians, iqrs })
}

/// Applies (x − median) / IQR per column; a zero IQR (constant feature)
/// divides by 1 instead.
pub fn apply_scaler(params: &ScalerParams, row: &[f64]) -> Result<Vec<f64>> {
    if row.len() != params.medians.len() {
        return Err(Error::DimensionMismatch {
            expected: params.medians.len(),
            got: row.len(),
        });
    }
    Ok(row
        .iter()
        .zip(params.medians.iter().zip(&params.iqrs))
        .map(|(&x, (&m, &iqr))| {
            let divisor = if iqr == 0.0 { 1.0 } else { iqr };
            (x - m) / divisor
        })
        .collect())
}

/// Debug export of a pair's switches.
pub fn switches_debug_csv(pair: &TrackPair) -> String {
    let mut s = String::from("pair_id,t1,t2,distance_m,dt_s,speed_mps\n");
    let id = pair.pair_id();
    for sw in extract_switches(pair) {
        let f = compute_features(&sw);
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            id, sw.first.timestamp, sw.second.timestamp, f.distance_m, f.dt_s, f.speed_mps
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{PairLabel, Track};
    use proptest::prelude::*;

    const W0: i64 = 19_000 * 86_400 + 7 * 3600;
    const W1: i64 = W0 + 15 * 3600;
    const DEG_PER_M: f64 = 1.0 / 111_194.92664455873;

    fn m(timestamp: i64, lat: f64, lon: f64) -> Measurement {
        Measurement {
            timestamp,
            location: GeoPoint::new(lat, lon).unwrap(),
            cell_id: None,
        }
    }

    fn pair_of(times_a: &[i64], times_b: &[i64]) -> TrackPair {
        let ms = |times: &[i64]| times.iter().map(|&t| m(t, 52.0, 4.0)).collect();
        let a = Track::new("p1", "u1", W0, W1, ms(times_a)).unwrap();
        let b = Track::new("p2", "u2", W0, W1, ms(times_b)).unwrap();
        TrackPair::new(a, b, PairLabel::Unknown).unwrap()
    }

    #[test]
    fn interleaved_five_and_two_events_give_four_switches() {
        // Phone 1 registers five times (a–e), phone 2 twice (a–b), with
        // 2a between 1a and 1b, and 2b between 1d and 1e.
        let pair = pair_of(
            &[W0 + 100, W0 + 300, W0 + 400, W0 + 500, W0 + 700],
            &[W0 + 200, W0 + 600],
        );
        let switches = extract_switches(&pair);
        let times: Vec<(i64, i64)> = switches
            .iter()
            .map(|s| (s.first.timestamp - W0, s.second.timestamp - W0))
            .collect();
        assert_eq!(times, vec![(100, 200), (200, 300), (500, 600), (600, 700)]);
    }

    #[test]
    fn disjoint_time_ranges_give_one_switch() {
        let pair = pair_of(&[W0 + 10, W0 + 20, W0 + 30], &[W0 + 40, W0 + 50]);
        let switches = extract_switches(&pair);
        assert_eq!(switches.len(), 1);
        assert_eq!(switches[0].first.timestamp, W0 + 30);
        assert_eq!(switches[0].second.timestamp, W0 + 40);
    }

    #[test]
    fn empty_track_gives_no_switches() {
        let pair = pair_of(&[W0 + 10, W0 + 20], &[]);
        assert!(extract_switches(&pair).is_empty());
    }

    #[test]
    fn swapping_tracks_mirrors_roles_but_keeps_switches() {
        let pair = pair_of(&[W0 + 100, W0 + 300], &[W0 + 200]);
        let swapped = TrackPair::new(pair.b().clone(), pair.a().clone(), PairLabel::Unknown).unwrap();
        let fwd = extract_switches(&pair);
        let rev = extract_switches(&swapped);
        assert_eq!(fwd.len(), rev.len());
        for (f, r) in fwd.iter().zip(&rev) {
            assert_eq!(f.first.timestamp, r.first.timestamp);
            assert_eq!(f.second.timestamp, r.second.timestamp);
            assert_eq!(f.first_side, r.first_side.other());
        }
    }

    #[test]
    fn equal_timestamps_order_by_phone_id_and_clamp_dt() {
        let pair = pair_of(&[W0 + 100], &[W0 + 100]);
        let switches = extract_switches(&pair);
        assert_eq!(switches.len(), 1);
        // "p1" < "p2", so the p1 measurement comes first.
        assert_eq!(switches[0].first_side, PhoneSide::A);
        let f = compute_features(&switches[0]);
        assert_eq!(f.dt_s, 1.0);
        assert_eq!(f.speed_mps, f.distance_m);
    }

    #[test]
    fn features_zero_distance_and_plain_speed() {
        let a = Track::new("p1", "u1", W0, W1, vec![m(W0 + 100, 52.0, 4.0)]).unwrap();
        let b = Track::new("p2", "u2", W0, W1, vec![m(W0 + 700, 52.0, 4.0)]).unwrap();
        let pair = TrackPair::new(a, b, PairLabel::Unknown).unwrap();
        let f = compute_features(&extract_switches(&pair)[0]);
        assert_eq!(f.distance_m, 0.0);
        assert_eq!(f.dt_s, 600.0);
        assert_eq!(f.speed_mps, 0.0);
        assert_eq!(f.bearing_diff_deg, None); // no prior measurements

        let far = 52.0 + 10_000.0 * DEG_PER_M;
        let a = Track::new("p1", "u1", W0, W1, vec![m(W0 + 100, 52.0, 4.0)]).unwrap();
        let b = Track::new("p2", "u2", W0, W1, vec![m(W0 + 700, far, 4.0)]).unwrap();
        let pair = TrackPair::new(a, b, PairLabel::Unknown).unwrap();
        let f = compute_features(&extract_switches(&pair)[0]);
        assert!((f.speed_mps - 10_000.0 / 600.0).abs() < 1e-6);
    }

    #[test]
    fn direction_difference_of_perpendicular_movements_is_ninety() {
        // Phone 1 moves due north into the switch; phone 2 due east.
        let step = 1_000.0 * DEG_PER_M;
        let a = Track::new(
            "p1",
            "u1",
            W0,
            W1,
            vec![m(W0 + 100, 52.0, 4.0), m(W0 + 200, 52.0 + step, 4.0)],
        )
        .unwrap();
        let b = Track::new(
            "p2",
            "u2",
            W0,
            W1,
            vec![m(W0 + 150, 52.0, 4.0), m(W0 + 300, 52.0, 4.0 + step)],
        )
        .unwrap();
        let pair = TrackPair::new(a, b, PairLabel::Unknown).unwrap();
        let switches = extract_switches(&pair);
        // (1@200, 2@300): both phones have prior measurements.
        let last = compute_features(switches.last().unwrap());
        let diff = last.bearing_diff_deg.unwrap();
        assert!((diff - 90.0).abs() < 0.5, "got {diff}");
    }

    #[test]
    fn no_measurement_falls_strictly_between_switch_endpoints() {
        let pair = pair_of(
            &[W0 + 10, W0 + 25, W0 + 30, W0 + 80],
            &[W0 + 20, W0 + 60, W0 + 90],
        );
        let all_times: Vec<i64> = [&[10i64, 25, 30, 80][..], &[20, 60, 90][..]]
            .concat()
            .iter()
            .map(|t| W0 + t)
            .collect();
        for s in extract_switches(&pair) {
            for &t in &all_times {
                assert!(!(t > s.first.timestamp && t < s.second.timestamp));
            }
        }
    }

    #[test]
    fn scaler_on_one_to_five() {
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|&v| vec![v]).collect();
        let params = fit_robust_scaler(&rows).unwrap();
        assert_eq!(params.medians, vec![3.0]);
        assert_eq!(params.iqrs, vec![2.0]);
        assert_eq!(apply_scaler(&params, &[5.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn scaler_constant_feature_divides_by_one() {
        let rows: Vec<Vec<f64>> = (0..4).map(|_| vec![7.5]).collect();
        let params = fit_robust_scaler(&rows).unwrap();
        assert_eq!(params.iqrs, vec![0.0]);
        assert_eq!(apply_scaler(&params, &[7.5]).unwrap(), vec![0.0]);
        assert_eq!(apply_scaler(&params, &[9.5]).unwrap(), vec![2.0]);
    }

    #[test]
    fn scaler_requires_data_and_consistent_width() {
        assert!(matches!(fit_robust_scaler(&[]), Err(Error::EmptyInput(_))));
        let ragged = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(
            fit_robust_scaler(&ragged),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            fit_robust_scaler(&[vec![f64::NAN]]),
            Err(Error::NonFiniteFeature)
        ));
    }

    #[test]
    fn scaled_training_median_is_zero_for_odd_counts() {
        let rows: Vec<Vec<f64>> = [4.0, 9.0, 1.0, 16.0, 25.0].iter().map(|&v| vec![v]).collect();
        let params = fit_robust_scaler(&rows).unwrap();
        let mut scaled: Vec<f64> = rows
            .iter()
            .map(|r| apply_scaler(&params, r).unwrap()[0])
            .collect();
        scaled.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(scaled[2], 0.0);
    }

    #[test]
    fn debug_csv_has_one_row_per_switch() {
        let pair = pair_of(&[W0 + 100, W0 + 300], &[W0 + 200]);
        let csv = switches_debug_csv(&pair);
        assert_eq!(csv.lines().count(), 1 + 2);
        assert!(csv.starts_with("pair_id,t1,t2,"));
    }

    proptest! {
        // The number of switches equals the number of phone-tag alternations
        // in the merged (timestamp, phone_id) order, recounted independently.
        #[test]
        fn switch_count_equals_alternations(
            ta in proptest::collection::vec(0i64..2000, 0..12),
            tb in proptest::collection::vec(0i64..2000, 0..12),
        ) {
            let mut ta: Vec<i64> = ta.iter().map(|t| W0 + t).collect();
            let mut tb: Vec<i64> = tb.iter().map(|t| W0 + t).collect();
            ta.sort();
            tb.sort();
            let pair = pair_of(&ta, &tb);
            let switches = extract_switches(&pair);

            let mut merged: Vec<(i64, &str)> = ta.iter().map(|&t| (t, "p1"))
                .chain(tb.iter().map(|&t| (t, "p2")))
                .collect();
            merged.sort();
            let alternations = merged.windows(2).filter(|w| w[0].1 != w[1].1).count();
            prop_assert_eq!(switches.len(), alternations);
        }

        // Applying fitted params to the fit set centers every column near 0.
        #[test]
        fn scaled_median_is_near_zero(
            values in proptest::collection::vec(-1e6f64..1e6, 1..40),
        ) {
            let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
            let params = fit_robust_scaler(&rows).unwrap();
            let mut scaled: Vec<f64> = rows.iter()
                .map(|r| apply_scaler(&params, r).unwrap()[0])
                .collect();
            scaled.sort_by(|a, b| a.total_cmp(b));
            let median = quantile_sorted(&scaled, 0.5);
            prop_assert!(median.abs() < 1e-9);
        }
    }
}
