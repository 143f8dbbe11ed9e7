//! Synthetic mobility population: commuting users carrying several phones,
//! logged as continuous tower registrations on a regular tower lattice.
//!
//! Each user gets a home and a work anchor and commutes daily: home until a
//! morning departure, straight-line travel at constant speed, work until an
//! evening departure, then back. Every `log_interval_s` each of the user's
//! phones records the lattice tower nearest to the user's position plus
//! phone-specific snap noise, so phones of one user see nearby-but-not-equal
//! tower sequences, while phones of different users follow different paths.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geo::{haversine_distance, GeoPoint, EARTH_RADIUS_M};
use crate::ingest::{NetmonEntry, TowerRecord};
use crate::track::Measurement;
use crate::{derive_seed, Error, Result};

/// Meters per degree of latitude (and of longitude at the equator).
const M_PER_DEG: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// Simulation epoch: 2020-09-14T00:00:00Z, a Monday, at a day boundary.
pub const SIM_START: i64 = 1_600_041_600;

/// All simulated geometry is laid out in a local east/north frame around
/// this point.
pub fn sim_center() -> GeoPoint {
    GeoPoint::new(52.0, 4.0).expect("fixed center is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_users: usize,
    /// Phones carried by every user (1–3).
    pub phones_per_user: usize,
    pub n_days: u32,
    /// Scatter (meters, Gaussian scale) of home and work anchors around
    /// their respective centers.
    pub anchor_dispersion_m: f64,
    /// Eastward offset of the work-anchor center from the home-anchor
    /// center; 0 makes dispersion-0 anchors coincide.
    pub commute_offset_m: f64,
    pub travel_speed_mps: f64,
    pub tower_grid_spacing_m: f64,
    /// Scale of the per-phone position noise applied before tower snapping,
    /// truncated at one scale radius so phone disagreement stays bounded.
    pub tower_snap_noise_m: f64,
    pub log_interval_s: i64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_users: 20,
            phones_per_user: 2,
            n_days: 14,
            anchor_dispersion_m: 3_000.0,
            commute_offset_m: 8_000.0,
            travel_speed_mps: 15.0,
            tower_grid_spacing_m: 500.0,
            tower_snap_noise_m: 150.0,
            log_interval_s: 10,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, reason: String| {
            Err(Error::ConfigValue {
                key: key.to_string(),
                reason,
            })
        };
        if self.n_users == 0 {
            return err("n_users", "must be at least 1".into());
        }
        if !(1..=3).contains(&self.phones_per_user) {
            return err("phones_per_user", format!("{} not in 1..=3", self.phones_per_user));
        }
        if self.n_days == 0 {
            return err("n_days", "must be at least 1".into());
        }
        if !(self.anchor_dispersion_m >= 0.0 && self.anchor_dispersion_m <= 20_000.0) {
            return err("anchor_dispersion_m", "must be in 0..=20000".into());
        }
        if !(self.commute_offset_m >= 0.0 && self.commute_offset_m <= 20_000.0) {
            return err("commute_offset_m", "must be in 0..=20000".into());
        }
        if !(self.travel_speed_mps >= 0.0 && self.travel_speed_mps <= 100.0) {
            return err("travel_speed_mps", "must be in 0..=100".into());
        }
        if !(self.tower_grid_spacing_m > 0.0 && self.tower_grid_spacing_m <= 10_000.0) {
            return err("tower_grid_spacing_m", "must be in (0, 10000]".into());
        }
        if !(self.tower_snap_noise_m >= 0.0 && self.tower_snap_noise_m <= 2_000.0) {
            return err("tower_snap_noise_m", "must be in 0..=2000".into());
        }
        if !(1..=86_400).contains(&self.log_interval_s) {
            return err("log_interval_s", "must be in 1..=86400".into());
        }
        Ok(())
    }
}

/// Regular tower lattice centered on a reference point, indexed by
/// (north step, east step).
#[derive(Debug, Clone)]
pub struct TowerGrid {
    center: GeoPoint,
    spacing_m: f64,
}

/// Distances closer than this count as equal when picking a tower, so the
/// lexicographic tie-break is stable under floating-point jitter.
const TIE_EPS_M: f64 = 1e-6;

impl TowerGrid {
    pub fn new(center: GeoPoint, spacing_m: f64) -> TowerGrid {
        assert!(spacing_m > 0.0, "grid spacing must be positive");
        TowerGrid { center, spacing_m }
    }

    fn node_location(&self, ni: i64, ei: i64) -> GeoPoint {
        to_geo(self.center, ei as f64 * self.spacing_m, ni as f64 * self.spacing_m)
    }

    pub fn node(&self, ni: i64, ei: i64) -> TowerRecord {
        TowerRecord {
            cell_id: format!("T{ni}:{ei}"),
            location: self.node_location(ni, ei),
        }
    }

    /// Exact fractional lattice coordinates of `p`.
    fn fractional_index(&self, p: GeoPoint) -> (f64, f64) {
        let ni = (p.lat() - self.center.lat()) * M_PER_DEG / self.spacing_m;
        let ei = (p.lon() - self.center.lon()) * M_PER_DEG
            * self.center.lat().to_radians().cos()
            / self.spacing_m;
        (ni, ei)
    }

    /// Tower with minimal haversine distance to `p`; near-exact ties go to
    /// the lexicographically smallest (lat, lon).
    ///
    /// The optimum always lies within one step of the rounded lattice
    /// coordinates: haversine distance is monotone in |Δlat| and |Δlon|
    /// separately, so any node further than half a spacing away on an axis
    /// is beaten by its neighbour one step closer.
    pub fn nearest(&self, p: GeoPoint) -> TowerRecord {
        let (nf, ef) = self.fractional_index(p);
        let (ni0, ei0) = (nf.round() as i64, ef.round() as i64);
        let mut best: Option<(f64, i64, i64)> = None;
        for ni in (ni0 - 1)..=(ni0 + 1) {
            for ei in (ei0 - 1)..=(ei0 + 1) {
                let d = haversine_distance(self.node_location(ni, ei), p);
                let better = match best {
                    None => true,
                    Some((bd, _, _)) => d < bd - TIE_EPS_M,
                };
                if better {
                    best = Some((d, ni, ei));
                }
            }
        }
        let (_, ni, ei) = best.expect("scan is non-empty");
        self.node(ni, ei)
    }
}

/// Local east/north meters to a geographic point, in a frame whose east
/// scale is fixed at the center latitude.
fn to_geo(center: GeoPoint, east_m: f64, north_m: f64) -> GeoPoint {
    let lat = center.lat() + north_m / M_PER_DEG;
    let lon = center.lon() + east_m / (M_PER_DEG * center.lat().to_radians().cos());
    GeoPoint::new(lat, lon).expect("validated configs keep positions in range")
}

/// One standard-normal pair via Box–Muller.
fn gauss_pair(rng: &mut impl Rng) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1], keeps ln finite
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Gaussian displacement of scale `sigma`, truncated at radius `sigma` so
/// two phones sharing a position stay within 2·sigma of each other before
/// snapping.
fn truncated_noise(rng: &mut impl Rng, sigma: f64) -> (f64, f64) {
    if sigma == 0.0 {
        // Keep the draw so noise-0 and noise-ε runs consume the same stream.
        let _ = gauss_pair(rng);
        return (0.0, 0.0);
    }
    let mut last = (0.0, 0.0);
    for _ in 0..16 {
        let (gx, gy) = gauss_pair(rng);
        last = (gx * sigma, gy * sigma);
        if last.0.hypot(last.1) <= sigma {
            return last;
        }
    }
    let r = last.0.hypot(last.1);
    (last.0 * sigma / r, last.1 * sigma / r)
}

/// A user's anchors (local meters) and per-day departure times (seconds
/// into the day).
struct UserPlan {
    home: (f64, f64),
    work: (f64, f64),
    departures: Vec<(f64, f64)>,
}

fn plan_user(cfg: &SimConfig, user_idx: usize) -> UserPlan {
    let user_seed = derive_seed(cfg.seed, user_idx as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(user_seed, 0));
    let d = cfg.anchor_dispersion_m;
    // Anchors clamped at 4 scales to keep the population inside the modeled
    // area (and every position within coordinate range).
    let clamp = |(x, y): (f64, f64)| {
        let r = x.hypot(y);
        let cap = 4.0 * d;
        if r > cap && r > 0.0 {
            (x * cap / r, y * cap / r)
        } else {
            (x, y)
        }
    };
    let (g1, g2) = gauss_pair(&mut rng);
    let (g3, g4) = gauss_pair(&mut rng);
    let home = clamp((g1 * d, g2 * d));
    let work_off = clamp((g3 * d, g4 * d));
    let work = (cfg.commute_offset_m + work_off.0, work_off.1);
    let departures = (0..cfg.n_days)
        .map(|_| {
            let leave_home = 7.0 * 3600.0 + rng.gen::<f64>() * 2.0 * 3600.0;
            let leave_work = 16.5 * 3600.0 + rng.gen::<f64>() * 2.0 * 3600.0;
            (leave_home, leave_work)
        })
        .collect();
    UserPlan {
        home,
        work,
        departures,
    }
}

/// Straight-line travel from `from` toward `to` with a distance budget.
fn travel_toward(from: (f64, f64), to: (f64, f64), budget_m: f64) -> (f64, f64) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let dist = dx.hypot(dy);
    if budget_m >= dist || dist == 0.0 {
        return to;
    }
    let f = budget_m / dist;
    (from.0 + f * dx, from.1 + f * dy)
}

/// User position (local meters) at absolute time `t`.
fn position_at(plan: &UserPlan, speed_mps: f64, t: i64) -> (f64, f64) {
    let day = ((t - SIM_START) / 86_400) as usize;
    let s = ((t - SIM_START) % 86_400) as f64;
    let (leave_home, leave_work) = plan.departures[day.min(plan.departures.len() - 1)];
    if s < leave_home {
        return plan.home;
    }
    if s < leave_work {
        return travel_toward(plan.home, plan.work, (s - leave_home) * speed_mps);
    }
    let turn = travel_toward(plan.home, plan.work, (leave_work - leave_home) * speed_mps);
    travel_toward(turn, plan.home, (s - leave_work) * speed_mps)
}

pub fn user_id(user_idx: usize) -> String {
    format!("u{user_idx:03}")
}

pub fn phone_id(user_idx: usize, phone_idx: usize) -> String {
    format!("{}-p{}", user_id(user_idx), phone_idx + 1)
}

/// Ground-truth `(phone_id, user_id)` pairs in simulation order.
pub fn population_manifest(cfg: &SimConfig) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(cfg.n_users * cfg.phones_per_user);
    for u in 0..cfg.n_users {
        for p in 0..cfg.phones_per_user {
            out.push((phone_id(u, p), user_id(u)));
        }
    }
    out
}

/// One phone's continuous registration log plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneLog {
    pub phone_id: String,
    pub user_id: String,
    pub entries: Vec<NetmonEntry>,
}

impl PhoneLog {
    pub fn measurements(&self) -> Vec<Measurement> {
        self.entries
            .iter()
            .map(|e| Measurement {
                timestamp: e.timestamp,
                location: e.location,
                cell_id: Some(e.cell_id.clone()),
            })
            .collect()
    }
}

/// Simulates a single phone. Each (user, phone) pair has its own derived
/// random stream, so logs are identical whether phones are generated one at
/// a time or all together, in any order.
pub fn simulate_phone_log(cfg: &SimConfig, user_idx: usize, phone_idx: usize) -> Result<PhoneLog> {
    cfg.validate()?;
    assert!(user_idx < cfg.n_users && phone_idx < cfg.phones_per_user);
    let plan = plan_user(cfg, user_idx);
    let user_seed = derive_seed(cfg.seed, user_idx as u64);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(user_seed, 1 + phone_idx as u64));
    let grid = TowerGrid::new(sim_center(), cfg.tower_grid_spacing_m);
    let id = phone_id(user_idx, phone_idx);

    let n_entries = cfg.n_days as i64 * 86_400 / cfg.log_interval_s;
    let mut entries = Vec::with_capacity(n_entries as usize);
    for k in 0..n_entries {
        let t = SIM_START + k * cfg.log_interval_s;
        let (east, north) = position_at(&plan, cfg.travel_speed_mps, t);
        let (nx, ny) = truncated_noise(&mut noise_rng, cfg.tower_snap_noise_m);
        let seen = to_geo(sim_center(), east + nx, north + ny);
        let tower = grid.nearest(seen);
        entries.push(NetmonEntry {
            phone_id: id.clone(),
            timestamp: t,
            cell_id: tower.cell_id,
            location: tower.location,
        });
    }
    Ok(PhoneLog {
        phone_id: id,
        user_id: user_id(user_idx),
        entries,
    })
}

/// Simulates the whole population. Memory scales with the full log; for
/// larger corpora iterate [`simulate_phone_log`] per phone instead.
pub fn simulate_population(cfg: &SimConfig) -> Result<Vec<PhoneLog>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.n_users * cfg.phones_per_user);
    for u in 0..cfg.n_users {
        for p in 0..cfg.phones_per_user {
            out.push(simulate_phone_log(cfg, u, p)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::write_netmon_csv;
    use rand::SeedableRng;

    fn small_cfg() -> SimConfig {
        SimConfig {
            n_users: 2,
            n_days: 1,
            log_interval_s: 600,
            seed: 42,
            ..SimConfig::default()
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        for (cfg, key) in [
            (SimConfig { n_users: 0, ..small_cfg() }, "n_users"),
            (SimConfig { phones_per_user: 4, ..small_cfg() }, "phones_per_user"),
            (SimConfig { tower_grid_spacing_m: 0.0, ..small_cfg() }, "tower_grid_spacing_m"),
            (SimConfig { log_interval_s: 0, ..small_cfg() }, "log_interval_s"),
            (SimConfig { anchor_dispersion_m: -1.0, ..small_cfg() }, "anchor_dispersion_m"),
        ] {
            match cfg.validate().unwrap_err() {
                Error::ConfigValue { key: k, .. } => assert_eq!(k, key),
                other => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn one_day_at_ten_seconds_is_8640_entries() {
        let cfg = SimConfig {
            n_users: 1,
            phones_per_user: 1,
            n_days: 1,
            log_interval_s: 10,
            ..small_cfg()
        };
        let log = simulate_phone_log(&cfg, 0, 0).unwrap();
        assert_eq!(log.entries.len(), 8_640);
        assert_eq!(log.entries[0].timestamp, SIM_START);
        assert_eq!(log.entries.last().unwrap().timestamp, SIM_START + 86_390);
    }

    #[test]
    fn stationary_user_sees_one_tower() {
        let cfg = SimConfig {
            n_users: 1,
            phones_per_user: 1,
            anchor_dispersion_m: 0.0,
            commute_offset_m: 0.0,
            travel_speed_mps: 0.0,
            tower_snap_noise_m: 0.0,
            ..small_cfg()
        };
        let log = simulate_phone_log(&cfg, 0, 0).unwrap();
        assert!(log.entries.iter().all(|e| e.cell_id == "T0:0"));
    }

    #[test]
    fn zero_noise_phones_see_identical_towers() {
        let cfg = SimConfig {
            tower_snap_noise_m: 0.0,
            ..small_cfg()
        };
        let a = simulate_phone_log(&cfg, 0, 0).unwrap();
        let b = simulate_phone_log(&cfg, 0, 1).unwrap();
        let cells_a: Vec<&str> = a.entries.iter().map(|e| e.cell_id.as_str()).collect();
        let cells_b: Vec<&str> = b.entries.iter().map(|e| e.cell_id.as_str()).collect();
        assert_eq!(cells_a, cells_b);
    }

    #[test]
    fn same_seed_gives_byte_identical_logs() {
        let cfg = small_cfg();
        let a = simulate_population(&cfg).unwrap();
        let b = simulate_population(&cfg).unwrap();
        assert_eq!(a, b);
        let csv_a: String = a.iter().map(|l| write_netmon_csv(&l.entries)).collect();
        let csv_b: String = b.iter().map(|l| write_netmon_csv(&l.entries)).collect();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = simulate_population(&small_cfg()).unwrap();
        let b = simulate_population(&SimConfig { seed: 43, ..small_cfg() }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn commuter_is_home_at_night_and_away_at_noon() {
        let cfg = SimConfig {
            n_users: 1,
            phones_per_user: 1,
            anchor_dispersion_m: 0.0,
            tower_snap_noise_m: 0.0,
            ..small_cfg()
        };
        let log = simulate_phone_log(&cfg, 0, 0).unwrap();
        let cell_at = |hour: i64| {
            let t = SIM_START + hour * 3600;
            log.entries
                .iter()
                .find(|e| e.timestamp == t)
                .map(|e| e.cell_id.clone())
                .unwrap()
        };
        assert_eq!(cell_at(5), "T0:0"); // home anchor, dispersion 0
        assert_ne!(cell_at(12), "T0:0"); // at work, 8 km east
        assert_eq!(cell_at(23), "T0:0"); // returned home
    }

    #[test]
    fn grid_point_on_node_maps_to_that_node() {
        let grid = TowerGrid::new(sim_center(), 750.0);
        let node = grid.node(-3, 7);
        assert_eq!(grid.nearest(node.location).cell_id, "T-3:7");
    }

    #[test]
    fn grid_midpoints_break_ties_lexicographically() {
        let grid = TowerGrid::new(sim_center(), 1000.0);
        // Halfway east between T0:0 and T0:1 — same lat, smaller lon wins.
        let east_mid = to_geo(sim_center(), 500.0, 0.0);
        assert_eq!(grid.nearest(east_mid).cell_id, "T0:0");
        // Halfway north between T0:0 and T1:0 — smaller lat wins.
        let north_mid = to_geo(sim_center(), 0.0, 500.0);
        assert_eq!(grid.nearest(north_mid).cell_id, "T0:0");
    }

    #[test]
    fn grid_nearest_matches_brute_force() {
        let grid = TowerGrid::new(sim_center(), 400.0);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let diagonal = 400.0 * std::f64::consts::SQRT_2;
        for _ in 0..200 {
            let east = (rng.gen::<f64>() - 0.5) * 30_000.0;
            let north = (rng.gen::<f64>() - 0.5) * 30_000.0;
            let p = to_geo(sim_center(), east, north);
            let chosen = grid.nearest(p);
            let (nf, ef) = grid.fractional_index(p);
            let (n0, e0) = (nf.round() as i64, ef.round() as i64);
            let mut best_d = f64::INFINITY;
            for ni in (n0 - 6)..=(n0 + 6) {
                for ei in (e0 - 6)..=(e0 + 6) {
                    best_d = best_d.min(haversine_distance(grid.node_location(ni, ei), p));
                }
            }
            let got = haversine_distance(chosen.location, p);
            assert!((got - best_d).abs() <= TIE_EPS_M, "missed true nearest: {got} vs {best_d}");
            assert!(got <= diagonal / 2.0 + 1.0);
        }
    }

    #[test]
    fn same_user_towers_stay_within_noise_bound() {
        let cfg = SimConfig {
            tower_snap_noise_m: 200.0,
            tower_grid_spacing_m: 500.0,
            log_interval_s: 300,
            ..small_cfg()
        };
        let bound = 2.0 * 200.0 + 500.0 * std::f64::consts::SQRT_2 + 1e-6;
        for user in 0..cfg.n_users {
            let a = simulate_phone_log(&cfg, user, 0).unwrap();
            let b = simulate_phone_log(&cfg, user, 1).unwrap();
            for (ea, eb) in a.entries.iter().zip(&b.entries) {
                assert_eq!(ea.timestamp, eb.timestamp);
                let d = haversine_distance(ea.location, eb.location);
                assert!(d <= bound, "towers {d} m apart at t={}", ea.timestamp);
            }
        }
    }

    #[test]
    fn different_users_move_independently() {
        let cfg = SimConfig {
            tower_snap_noise_m: 0.0,
            ..small_cfg()
        };
        let a = simulate_phone_log(&cfg, 0, 0).unwrap();
        let b = simulate_phone_log(&cfg, 1, 0).unwrap();
        let differing = a
            .entries
            .iter()
            .zip(&b.entries)
            .filter(|(x, y)| x.cell_id != y.cell_id)
            .count();
        assert!(differing > a.entries.len() / 2);
    }

    #[test]
    fn manifest_covers_every_phone() {
        let cfg = SimConfig {
            n_users: 3,
            phones_per_user: 2,
            ..small_cfg()
        };
        let manifest = population_manifest(&cfg);
        assert_eq!(manifest.len(), 6);
        assert_eq!(manifest[0], ("u000-p1".to_string(), "u000".to_string()));
        assert_eq!(manifest[5], ("u002-p2".to_string(), "u002".to_string()));
    }
}
