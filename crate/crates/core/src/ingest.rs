//! Parsing of CDR files, cell-tower databases and continuous network-monitor
//! logs into per-phone measurement streams.
//!
//! One canonical CSV schema is used for both CDRs and monitor logs:
//! `phone_id,timestamp,cell_id,lat,lon`, UTF-8, header row mandatory.
//! Timestamps are integer epoch seconds or ISO-8601. Tower databases use
//! `cell_id,lat,lon`.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::geo::GeoPoint;
use crate::track::Measurement;
use crate::{Error, Result};

pub const MEASUREMENT_HEADER: &str = "phone_id,timestamp,cell_id,lat,lon";
pub const TOWER_HEADER: &str = "cell_id,lat,lon";

/// One CDR row. Coordinates are optional; rows without them must be
/// resolvable through a tower database.
#[derive(Debug, Clone, PartialEq)]
pub struct CdrRecord {
    pub phone_id: String,
    pub timestamp: i64,
    pub cell_id: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

/// One tower-database row.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerRecord {
    pub cell_id: String,
    pub location: GeoPoint,
}

/// One network-monitor log row. All fields are required.
#[derive(Debug, Clone, PartialEq)]
pub struct NetmonEntry {
    pub phone_id: String,
    pub timestamp: i64,
    pub cell_id: String,
    pub location: GeoPoint,
}

/// Result of [`parse_netmon_csv`]: entries grouped per phone and sorted by
/// time, plus the number of duplicate `(phone_id, timestamp)` rows dropped.
#[derive(Debug, Default)]
pub struct NetmonParse {
    pub per_phone: BTreeMap<String, Vec<NetmonEntry>>,
    pub duplicates_dropped: usize,
}

/// Parses an epoch-second or ISO-8601 timestamp.
pub fn parse_timestamp(s: &str) -> std::result::Result<i64, String> {
    if let Ok(t) = s.parse::<i64>() {
        return Ok(t);
    }
    match chrono::DateTime::parse_from_rfc3339(s) {
        Ok(dt) => Ok(dt.timestamp()),
        Err(_) => Err(format!("`{s}` is neither epoch seconds nor ISO-8601")),
    }
}

fn parse_coord(s: &str, what: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("bad {what} `{s}`"))
}

struct Rows<'a> {
    reader: csv::Reader<&'a [u8]>,
}

/// Opens a CSV reader and validates the exact header.
fn open_csv<'a>(bytes: &'a [u8], expected_header: &str) -> Result<Rows<'a>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let got = match reader.headers() {
        Ok(h) => h.iter().collect::<Vec<_>>().join(","),
        Err(e) => {
            return Err(Error::Header {
                expected: expected_header.to_string(),
                got: format!("<unreadable: {e}>"),
            })
        }
    };
    if got != expected_header {
        return Err(Error::Header {
            expected: expected_header.to_string(),
            got,
        });
    }
    Ok(Rows { reader })
}

impl<'a> Rows<'a> {
    /// Iterates records, attaching 1-based line numbers to every failure.
    fn for_each(
        mut self,
        mut f: impl FnMut(u64, &csv::StringRecord) -> std::result::Result<(), String>,
    ) -> Result<()> {
        for row in self.reader.records() {
            let record = row.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            f(line, &record).map_err(|reason| Error::Csv { line, reason })?;
        }
        Ok(())
    }
}

/// Parses a CDR CSV. Row order is preserved; empty lat/lon parse as absent.
pub fn parse_cdr_csv(bytes: &[u8]) -> Result<Vec<CdrRecord>> {
    let mut out = Vec::new();
    open_csv(bytes, MEASUREMENT_HEADER)?.for_each(|_, rec| {
        if rec.len() != 5 {
            return Err(format!("expected 5 fields, got {}", rec.len()));
        }
        let phone_id = rec[0].to_string();
        if phone_id.is_empty() {
            return Err("empty phone_id".into());
        }
        let timestamp = parse_timestamp(&rec[1])?;
        if timestamp <= 0 {
            return Err(format!("non-positive timestamp {timestamp}"));
        }
        let cell_id = rec[2].to_string();
        if cell_id.is_empty() {
            return Err("empty cell_id".into());
        }
        let (lat, lon) = match (rec[3].is_empty(), rec[4].is_empty()) {
            (true, true) => (None, None),
            (false, false) => {
                let lat = parse_coord(&rec[3], "lat")?;
                let lon = parse_coord(&rec[4], "lon")?;
                GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
                (Some(lat), Some(lon))
            }
            _ => return Err("lat and lon must both be present or both empty".into()),
        };
        out.push(CdrRecord {
            phone_id,
            timestamp,
            cell_id,
            lat,
            lon,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Parses a network-monitor CSV. All fields required; duplicate
/// `(phone_id, timestamp)` rows keep the first occurrence.
pub fn parse_netmon_csv(bytes: &[u8]) -> Result<NetmonParse> {
    let mut parse = NetmonParse::default();
    let mut seen: HashSet<(String, i64)> = HashSet::new();
    open_csv(bytes, MEASUREMENT_HEADER)?.for_each(|_, rec| {
        if rec.len() != 5 {
            return Err(format!("expected 5 fields, got {}", rec.len()));
        }
        for (idx, name) in [(0, "phone_id"), (2, "cell_id"), (3, "lat"), (4, "lon")] {
            if rec[idx].is_empty() {
                return Err(format!("missing {name}"));
            }
        }
        let phone_id = rec[0].to_string();
        let timestamp = parse_timestamp(&rec[1])?;
        if timestamp <= 0 {
            return Err(format!("non-positive timestamp {timestamp}"));
        }
        let lat = parse_coord(&rec[3], "lat")?;
        let lon = parse_coord(&rec[4], "lon")?;
        let location = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
        if !seen.insert((phone_id.clone(), timestamp)) {
            parse.duplicates_dropped += 1;
            return Ok(());
        }
        parse.per_phone.entry(phone_id.clone()).or_default().push(NetmonEntry {
            phone_id,
            timestamp,
            cell_id: rec[2].to_string(),
            location,
        });
        Ok(())
    })?;
    for entries in parse.per_phone.values_mut() {
        entries.sort_by_key(|e| e.timestamp);
    }
    Ok(parse)
}

/// Parses a tower-database CSV, enforcing cell_id uniqueness.
pub fn parse_tower_csv(bytes: &[u8]) -> Result<Vec<TowerRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    open_csv(bytes, TOWER_HEADER)?.for_each(|_, rec| {
        if rec.len() != 3 {
            return Err(format!("expected 3 fields, got {}", rec.len()));
        }
        let cell_id = rec[0].to_string();
        if cell_id.is_empty() {
            return Err("empty cell_id".into());
        }
        if !seen.insert(cell_id.clone()) {
            return Err(format!("duplicate cell_id `{cell_id}`"));
        }
        let lat = parse_coord(&rec[1], "lat")?;
        let lon = parse_coord(&rec[2], "lon")?;
        let location = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
        out.push(TowerRecord { cell_id, location });
        Ok(())
    })?;
    Ok(out)
}

/// Resolves CDR records to measurements, grouped per phone and sorted by
/// timestamp. Records with inline coordinates keep them; others take the
/// tower-database location.
pub fn resolve_cell_locations(
    records: &[CdrRecord],
    db: &[TowerRecord],
) -> Result<BTreeMap<String, Vec<Measurement>>> {
    let by_cell: HashMap<&str, GeoPoint> =
        db.iter().map(|t| (t.cell_id.as_str(), t.location)).collect();

    let mut unresolved: Vec<String> = Vec::new();
    let mut out: BTreeMap<String, Vec<Measurement>> = BTreeMap::new();
    for rec in records {
        let location = match (rec.lat, rec.lon) {
            (Some(lat), Some(lon)) => GeoPoint::new(lat, lon)?,
            _ => match by_cell.get(rec.cell_id.as_str()) {
                Some(&loc) => loc,
                None => {
                    unresolved.push(rec.cell_id.clone());
                    continue;
                }
            },
        };
        out.entry(rec.phone_id.clone()).or_default().push(Measurement {
            timestamp: rec.timestamp,
            location,
            cell_id: Some(rec.cell_id.clone()),
        });
    }
    if !unresolved.is_empty() {
        unresolved.sort();
        unresolved.dedup();
        return Err(Error::UnresolvedCells(unresolved));
    }
    for ms in out.values_mut() {
        ms.sort_by_key(|m| m.timestamp);
    }
    Ok(out)
}

/// Serializes CDR records back to the canonical CSV (epoch-second timestamps).
pub fn write_cdr_csv(records: &[CdrRecord]) -> String {
    let mut s = String::from(MEASUREMENT_HEADER);
    s.push('\n');
    for r in records {
        let lat = r.lat.map(|v| v.to_string()).unwrap_or_default();
        let lon = r.lon.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.phone_id, r.timestamp, r.cell_id, lat, lon
        ));
    }
    s
}

/// Serializes network-monitor entries to the canonical CSV.
pub fn write_netmon_csv<'a>(entries: impl IntoIterator<Item = &'a NetmonEntry>) -> String {
    let mut s = String::from(MEASUREMENT_HEADER);
    s.push('\n');
    for e in entries {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            e.phone_id,
            e.timestamp,
            e.cell_id,
            e.location.lat(),
            e.location.lon()
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_only_file_gives_empty_list() {
        let parsed = parse_cdr_csv(b"phone_id,timestamp,cell_id,lat,lon\n").unwrap();
        assert!(parsed.is_empty());
    }

    #[test]
    fn unknown_header_is_rejected() {
        let err = parse_cdr_csv(b"phone,when,cell,lat,lon\n").unwrap_err();
        assert!(matches!(err, Error::Header { .. }));
    }

    #[test]
    fn direct_row_parses_with_inline_coordinates() {
        let rows = parse_cdr_csv(b"phone_id,timestamp,cell_id,lat,lon\np1,1600000000,NL-123,52.1,4.3\n")
            .unwrap();
        assert_eq!(
            rows,
            vec![CdrRecord {
                phone_id: "p1".into(),
                timestamp: 1_600_000_000,
                cell_id: "NL-123".into(),
                lat: Some(52.1),
                lon: Some(4.3),
            }]
        );
    }

    #[test]
    fn iso8601_timestamps_are_accepted() {
        let rows = parse_cdr_csv(
            b"phone_id,timestamp,cell_id,lat,lon\np1,2020-09-13T12:26:40Z,NL-1,,\n",
        )
        .unwrap();
        assert_eq!(rows[0].timestamp, 1_600_000_000);
        assert_eq!(rows[0].lat, None);
    }

    #[test]
    fn bad_timestamp_error_names_line_2() {
        let err =
            parse_cdr_csv(b"phone_id,timestamp,cell_id,lat,lon\np1,not-a-time,NL-1,52.0,4.0\n")
                .unwrap_err();
        match err {
            Error::Csv { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn half_present_coordinates_are_rejected() {
        let err =
            parse_cdr_csv(b"phone_id,timestamp,cell_id,lat,lon\np1,1600000000,NL-1,52.0,\n")
                .unwrap_err();
        assert!(matches!(err, Error::Csv { line: 2, .. }));
    }

    #[test]
    fn resolve_prefers_inline_coordinates() {
        let records = vec![CdrRecord {
            phone_id: "p1".into(),
            timestamp: 10,
            cell_id: "NL-1".into(),
            lat: Some(52.0),
            lon: Some(4.0),
        }];
        let resolved = resolve_cell_locations(&records, &[]).unwrap();
        assert_eq!(resolved["p1"][0].location.lat(), 52.0);
    }

    #[test]
    fn resolve_uses_tower_database() {
        let records = vec![CdrRecord {
            phone_id: "p1".into(),
            timestamp: 10,
            cell_id: "NL-123".into(),
            lat: None,
            lon: None,
        }];
        let db = vec![TowerRecord {
            cell_id: "NL-123".into(),
            location: GeoPoint::new(51.5, 4.5).unwrap(),
        }];
        let resolved = resolve_cell_locations(&records, &db).unwrap();
        assert_eq!(resolved["p1"][0].location.lon(), 4.5);
        assert_eq!(resolved["p1"][0].cell_id.as_deref(), Some("NL-123"));
    }

    #[test]
    fn resolve_reports_unknown_cells() {
        let records = vec![
            CdrRecord {
                phone_id: "p1".into(),
                timestamp: 10,
                cell_id: "X-2".into(),
                lat: None,
                lon: None,
            },
            CdrRecord {
                phone_id: "p1".into(),
                timestamp: 20,
                cell_id: "X-1".into(),
                lat: None,
                lon: None,
            },
        ];
        match resolve_cell_locations(&records, &[]).unwrap_err() {
            Error::UnresolvedCells(cells) => assert_eq!(cells, vec!["X-1", "X-2"]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn resolve_size_matches_input_when_clean() {
        let records: Vec<CdrRecord> = (0..10)
            .map(|i| CdrRecord {
                phone_id: format!("p{}", i % 3),
                timestamp: 100 - i,
                cell_id: "C".into(),
                lat: Some(52.0),
                lon: Some(4.0),
            })
            .collect();
        let resolved = resolve_cell_locations(&records, &[]).unwrap();
        let total: usize = resolved.values().map(Vec::len).sum();
        assert_eq!(total, records.len());
        for ms in resolved.values() {
            assert!(ms.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        }
    }

    #[test]
    fn netmon_keeps_order_and_sorts() {
        let parsed = parse_netmon_csv(
            b"phone_id,timestamp,cell_id,lat,lon\np1,100,C1,52.0,4.0\np1,90,C2,52.0,4.0\n",
        )
        .unwrap();
        let times: Vec<i64> = parsed.per_phone["p1"].iter().map(|e| e.timestamp).collect();
        assert_eq!(times, vec![90, 100]);
        assert_eq!(parsed.duplicates_dropped, 0);
    }

    #[test]
    fn netmon_duplicate_timestamps_keep_first() {
        let parsed = parse_netmon_csv(
            b"phone_id,timestamp,cell_id,lat,lon\np1,100,C1,52.0,4.0\np1,100,C2,53.0,5.0\n",
        )
        .unwrap();
        assert_eq!(parsed.duplicates_dropped, 1);
        assert_eq!(parsed.per_phone["p1"].len(), 1);
        assert_eq!(parsed.per_phone["p1"][0].cell_id, "C1");
    }

    #[test]
    fn netmon_missing_coordinate_is_an_error() {
        let err = parse_netmon_csv(b"phone_id,timestamp,cell_id,lat,lon\np1,100,C1,52.0,\n")
            .unwrap_err();
        assert!(matches!(err, Error::Csv { line: 2, .. }));
    }

    #[test]
    fn netmon_two_entries_ten_seconds_apart() {
        let parsed = parse_netmon_csv(
            b"phone_id,timestamp,cell_id,lat,lon\np1,100,C1,52.0,4.0\np1,110,C1,52.0,4.0\n",
        )
        .unwrap();
        assert_eq!(parsed.per_phone["p1"].len(), 2);
    }

    #[test]
    fn tower_csv_rejects_duplicates() {
        let err = parse_tower_csv(b"cell_id,lat,lon\nC1,52.0,4.0\nC1,52.0,4.1\n").unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }));
    }

    #[test]
    fn crlf_line_endings_parse() {
        let rows =
            parse_cdr_csv(b"phone_id,timestamp,cell_id,lat,lon\r\np1,10,C1,52.0,4.0\r\n").unwrap();
        assert_eq!(rows.len(), 1);
    }

    proptest! {
        // Round-trip: write then reparse yields identical records.
        #[test]
        fn cdr_round_trip(
            times in proptest::collection::vec(1i64..1_000_000_000, 0..20),
            with_coords in proptest::collection::vec(proptest::bool::ANY, 0..20),
        ) {
            let records: Vec<CdrRecord> = times
                .iter()
                .zip(with_coords.iter().chain(std::iter::repeat(&true)))
                .enumerate()
                .map(|(i, (&t, &c))| CdrRecord {
                    phone_id: format!("p{}", i % 4),
                    timestamp: t,
                    cell_id: format!("C{i}"),
                    lat: c.then_some(50.0 + (i as f64) * 0.172),
                    lon: c.then_some(4.0 - (i as f64) * 0.093),
                })
                .collect();
            let reparsed = parse_cdr_csv(write_cdr_csv(&records).as_bytes()).unwrap();
            prop_assert_eq!(records, reparsed);
        }
    }
}
