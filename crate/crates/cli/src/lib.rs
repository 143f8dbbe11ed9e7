//! Command implementations behind the `tracklr` binary.
//!
//! Every command returns the JSON value it wants on stdout; file writing and
//! corpus plumbing happen here so the commands are testable without spawning
//! a process. Human-readable progress goes to stderr, keeping stdout purely
//! machine-readable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use tracklr_core::calibration::ElubBounds;
use tracklr_core::config::FileConfig;
use tracklr_core::evaluation::{run_experiment, sweep, summarize, SweepDimension};
use tracklr_core::ingest::{
    parse_cdr_csv, parse_timestamp, parse_tower_csv, resolve_cell_locations, write_cdr_csv,
    write_netmon_csv, CdrRecord, TowerRecord, TOWER_HEADER,
};
use tracklr_core::pipeline::{fit_pipeline, LrPipeline};
use tracklr_core::report::export_run_report;
use tracklr_core::scoring::{prepare_pairs, PreparedPair};
use tracklr_core::sim::{population_manifest, simulate_phone_log, SimConfig};
use tracklr_core::synthesis::{
    pair_tracks, sample_event_times, synthesize_cdr, synthesize_phone_tracks, SynthesisConfig,
};
use tracklr_core::track::{Measurement, PairLabel, Track, TrackPair};
use tracklr_core::{derive_seed, fnv1a64};

pub const USERS_FILE: &str = "users.csv";
pub const TOWERS_FILE: &str = "towers.csv";
pub const USERS_HEADER: &str = "phone_id,user_id";

/// The stdout payload of `compare`: everything a case report needs to be
/// reproduced from the pipeline file and the input records.
#[derive(Debug, Serialize)]
pub struct CaseReport {
    pub pair_id: String,
    pub n_switches: usize,
    pub unscorable: bool,
    /// Present iff `unscorable`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clipped_lr: Option<f64>,
    pub lr_lower_bound: f64,
    pub lr_upper_bound: f64,
    pub pipeline_hash: String,
}

/// Refuses to write into an existing non-empty directory unless forced.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            bail!("output path {} exists and is not a directory", dir.display());
        }
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if occupied && !force {
            bail!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            );
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn users_csv(manifest: &[(String, String)]) -> String {
    let mut s = String::from(USERS_HEADER);
    s.push('\n');
    for (phone, user) in manifest {
        s.push_str(&format!("{phone},{user}\n"));
    }
    s
}

fn towers_csv(towers: &BTreeMap<String, (f64, f64)>) -> String {
    let mut s = String::from(TOWER_HEADER);
    s.push('\n');
    for (cell, (lat, lon)) in towers {
        s.push_str(&format!("{cell},{lat},{lon}\n"));
    }
    s
}

/// Simulates the configured population and writes one continuous log per
/// phone plus the ground-truth manifest and the set of towers observed.
pub fn cmd_simulate(cfg: &SimConfig, out_dir: &Path, force: bool) -> Result<Value> {
    prepare_out_dir(out_dir, force)?;
    let mut files = Vec::new();
    let mut towers: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut total_entries = 0usize;
    for user in 0..cfg.n_users {
        for phone in 0..cfg.phones_per_user {
            let log = simulate_phone_log(cfg, user, phone)?;
            for e in &log.entries {
                towers
                    .entry(e.cell_id.clone())
                    .or_insert((e.location.lat(), e.location.lon()));
            }
            total_entries += log.entries.len();
            let name = format!("netmon_{}.csv", log.phone_id);
            write_text(&out_dir.join(&name), &write_netmon_csv(&log.entries))?;
            files.push(name);
        }
    }
    let manifest = population_manifest(cfg);
    write_text(&out_dir.join(USERS_FILE), &users_csv(&manifest))?;
    write_text(&out_dir.join(TOWERS_FILE), &towers_csv(&towers))?;
    files.push(USERS_FILE.to_string());
    files.push(TOWERS_FILE.to_string());
    eprintln!(
        "simulated {} phones over {} days ({} log entries, {} towers)",
        manifest.len(),
        cfg.n_days,
        total_entries,
        towers.len()
    );
    Ok(json!({
        "command": "simulate",
        "out_dir": out_dir.display().to_string(),
        "n_users": cfg.n_users,
        "phones_per_user": cfg.phones_per_user,
        "n_days": cfg.n_days,
        "entries": total_entries,
        "towers": towers.len(),
        "files": files,
        "seed": cfg.seed,
    }))
}

/// Reads `users.csv` (ground truth phone → user).
pub fn read_users_csv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == USERS_HEADER => {}
        other => bail!(
            "{}: expected header `{USERS_HEADER}`, got {:?}",
            path.display(),
            other.unwrap_or("")
        ),
    }
    let mut out = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (phone, user) = line
            .split_once(',')
            .with_context(|| format!("{} line {}: expected two fields", path.display(), i + 2))?;
        out.insert(phone.trim().to_string(), user.trim().to_string());
    }
    Ok(out)
}

/// A loaded measurement corpus: per-phone sorted streams plus ground truth.
pub struct Corpus {
    pub streams: BTreeMap<String, Vec<Measurement>>,
    pub users: BTreeMap<String, String>,
}

/// Loads all measurement CSVs in a directory (everything but `users.csv` and
/// `towers.csv`), resolving tower-only rows through `towers.csv` when
/// present. Works on both continuous logs and sparse records, which share
/// one schema.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    if !dir.is_dir() {
        bail!("corpus directory {} does not exist", dir.display());
    }
    let users = read_users_csv(&dir.join(USERS_FILE))?;

    let towers_path = dir.join(TOWERS_FILE);
    let towers: Vec<TowerRecord> = if towers_path.exists() {
        let bytes =
            fs::read(&towers_path).with_context(|| format!("reading {}", towers_path.display()))?;
        parse_tower_csv(&bytes)?
    } else {
        Vec::new()
    };

    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name()
                    .is_some_and(|n| n != USERS_FILE && n != TOWERS_FILE)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no measurement CSV files in {}", dir.display());
    }

    let mut records: Vec<CdrRecord> = Vec::new();
    for path in &names {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        records.extend(
            parse_cdr_csv(&bytes).with_context(|| format!("parsing {}", path.display()))?,
        );
    }
    let streams = resolve_cell_locations(&records, &towers)?;
    for phone in streams.keys() {
        if !users.contains_key(phone) {
            bail!("phone {phone} has measurements but no users.csv entry");
        }
    }
    Ok(Corpus { streams, users })
}

/// Cuts every phone's stream into tracks and pairs them up.
pub fn corpus_pairs(corpus: &Corpus, syn: &SynthesisConfig) -> Result<Vec<TrackPair>> {
    let mut tracks = Vec::new();
    for (phone, ms) in &corpus.streams {
        let user = &corpus.users[phone];
        tracks.extend(synthesize_phone_tracks(ms, phone, user, syn)?);
    }
    let pairs = pair_tracks(&tracks)?;
    if pairs.is_empty() {
        bail!("corpus produced no track pairs (filters too strict or too little data)");
    }
    Ok(pairs)
}

fn prepared_pairs(corpus: &Corpus, syn: &SynthesisConfig) -> Result<Vec<PreparedPair>> {
    Ok(prepare_pairs(&corpus_pairs(corpus, syn)?))
}

fn class_counts(pairs: &[PreparedPair]) -> (usize, usize) {
    let su = pairs
        .iter()
        .filter(|p| p.label == PairLabel::SameUser)
        .count();
    (su, pairs.len() - su)
}

/// Thins continuous logs into sparse timestamped records, one file per
/// phone, carrying `users.csv` (and `towers.csv` if present) along.
pub fn cmd_synthesize(
    data_dir: &Path,
    out_dir: &Path,
    syn: &SynthesisConfig,
    force: bool,
) -> Result<Value> {
    let corpus = load_corpus(data_dir)?;
    prepare_out_dir(out_dir, force)?;
    let mut files = Vec::new();
    let mut total_events = 0usize;
    for (phone, ms) in &corpus.streams {
        if ms.len() < 2 {
            continue;
        }
        let seed = derive_seed(syn.seed, fnv1a64(phone.as_bytes()));
        let events = sample_event_times(
            syn.rate,
            ms[0].timestamp,
            ms[ms.len() - 1].timestamp,
            seed,
        );
        let cdr = synthesize_cdr(ms, &events)?;
        let records: Vec<CdrRecord> = cdr
            .iter()
            .map(|m| CdrRecord {
                phone_id: phone.clone(),
                timestamp: m.timestamp,
                cell_id: m.cell_id.clone().unwrap_or_else(|| "unknown".into()),
                lat: Some(m.location.lat()),
                lon: Some(m.location.lon()),
            })
            .collect();
        total_events += records.len();
        let name = format!("cdr_{phone}.csv");
        write_text(&out_dir.join(&name), &write_cdr_csv(&records))?;
        files.push(name);
    }
    let users_src = data_dir.join(USERS_FILE);
    fs::copy(&users_src, out_dir.join(USERS_FILE))
        .with_context(|| format!("copying {}", users_src.display()))?;
    files.push(USERS_FILE.to_string());
    let towers_src = data_dir.join(TOWERS_FILE);
    if towers_src.exists() {
        fs::copy(&towers_src, out_dir.join(TOWERS_FILE))
            .with_context(|| format!("copying {}", towers_src.display()))?;
        files.push(TOWERS_FILE.to_string());
    }
    eprintln!(
        "synthesized {} events across {} phones at rate {}/h",
        total_events,
        corpus.streams.len(),
        syn.rate
    );
    Ok(json!({
        "command": "synthesize",
        "out_dir": out_dir.display().to_string(),
        "rate": syn.rate,
        "events": total_events,
        "files": files,
        "seed": syn.seed,
    }))
}

/// Fits scorer + calibrator + LR bounds on the full corpus and saves the
/// pipeline JSON.
pub fn cmd_train(data_dir: &Path, out_path: &Path, cfg: &FileConfig) -> Result<Value> {
    let corpus = load_corpus(data_dir)?;
    let pairs = prepared_pairs(&corpus, &cfg.synthesis)?;
    let (n_su, n_du) = class_counts(&pairs);
    eprintln!("training on {n_su} same-user and {n_du} different-user pairs");
    let pipeline = fit_pipeline(&pairs, &cfg.experiment)?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    pipeline.save(out_path)?;
    Ok(json!({
        "command": "train",
        "pipeline": out_path.display().to_string(),
        "pipeline_hash": pipeline.content_hash(),
        "n_same_user_pairs": n_su,
        "n_different_user_pairs": n_du,
        "scorer": cfg.experiment.scorer.name(),
        "calibrator": cfg.experiment.calibrator.name(),
        "lr_lower_bound": pipeline.bounds.lower,
        "lr_upper_bound": pipeline.bounds.upper,
        "seed": cfg.experiment.seed,
    }))
}

/// Runs the repeated-split harness — either one run with full report files,
/// or one sensitivity sweep along the named dimension.
pub fn cmd_evaluate(
    data_dir: &Path,
    out_dir: &Path,
    cfg: &FileConfig,
    sweep_dimension: Option<&str>,
) -> Result<Value> {
    let corpus = load_corpus(data_dir)?;
    match sweep_dimension {
        None => {
            let pairs = prepared_pairs(&corpus, &cfg.synthesis)?;
            let (n_su, n_du) = class_counts(&pairs);
            eprintln!(
                "evaluating {} repeats on {n_su}+{n_du} pairs",
                cfg.experiment.n_repeats
            );
            let result = run_experiment(&pairs, &cfg.experiment)?;
            let written = export_run_report(out_dir, &result)?;
            let summary = summarize(&result.records)?;
            Ok(json!({
                "command": "evaluate",
                "n_same_user_pairs": n_su,
                "n_different_user_pairs": n_du,
                "summary": summary,
                "files": written
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>(),
                "seed": cfg.experiment.seed,
            }))
        }
        Some(name) => {
            let dimension = SweepDimension::parse(name)?;
            let rows = sweep(&cfg.experiment, dimension, |exp| {
                let syn = SynthesisConfig {
                    rate: exp.events_per_hour,
                    days_per_track: exp.days_per_track,
                    ..cfg.synthesis.clone()
                };
                let mut tracks = Vec::new();
                for (phone, ms) in &corpus.streams {
                    tracks.extend(synthesize_phone_tracks(
                        ms,
                        phone,
                        &corpus.users[phone],
                        &syn,
                    )?);
                }
                let pairs = pair_tracks(&tracks)?;
                if pairs.is_empty() {
                    return Err(tracklr_core::Error::EmptyInput("track pairs"));
                }
                Ok(prepare_pairs(&pairs))
            })?;
            fs::create_dir_all(out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            let table = out_dir.join(format!("sweep_{}.json", dimension.name()));
            tracklr_core::report::write_sweep_json(&table, &rows)?;
            eprintln!("swept {} over {} grid points", dimension.name(), rows.len());
            Ok(json!({
                "command": "evaluate",
                "sweep": dimension.name(),
                "rows": rows
                    .iter()
                    .map(|r| json!({
                        "label": r.label,
                        "mean_cllr": r.summary.mean_cllr,
                        "sd_cllr": r.summary.sd_cllr,
                        "mean_cllr_min": r.summary.mean_cllr_min,
                        "mean_cllr_cal": r.summary.mean_cllr_cal,
                    }))
                    .collect::<Vec<_>>(),
                "file": table.display().to_string(),
                "seed": cfg.experiment.seed,
            }))
        }
    }
}

/// Loads one phone's records from one CSV (optionally resolving through a
/// tower database), requiring exactly one phone id in the file.
fn load_case_phone(
    path: &Path,
    towers: &[TowerRecord],
    range: (Option<i64>, Option<i64>),
) -> Result<(String, Vec<Measurement>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let records = parse_cdr_csv(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let streams = resolve_cell_locations(&records, towers)?;
    if streams.len() != 1 {
        bail!(
            "{}: expected records of exactly one phone, found {}",
            path.display(),
            streams.len()
        );
    }
    let (phone, mut ms) = streams.into_iter().next().unwrap();
    if let (Some(from), _) = range {
        ms.retain(|m| m.timestamp >= from);
    }
    if let (_, Some(to)) = range {
        ms.retain(|m| m.timestamp <= to);
    }
    Ok((phone, ms))
}

/// Evaluates one disputed pair of record files against a fitted pipeline and
/// prints a case report. Pairs without a single switch are reported as
/// unscorable instead of being given a likelihood ratio.
pub fn cmd_compare(
    pipeline_path: &Path,
    a_path: &Path,
    b_path: &Path,
    towers_path: Option<&Path>,
    from: Option<&str>,
    to: Option<&str>,
) -> Result<Value> {
    let pipeline = LrPipeline::load(pipeline_path)?;
    let towers: Vec<TowerRecord> = match towers_path {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            parse_tower_csv(&bytes)?
        }
        None => Vec::new(),
    };
    let parse_arg = |label: &str, v: Option<&str>| -> Result<Option<i64>> {
        v.map(|s| parse_timestamp(s).map_err(|e| anyhow::anyhow!("--{label}: {e}")))
            .transpose()
    };
    let range = (parse_arg("from", from)?, parse_arg("to", to)?);

    let (phone_a, ms_a) = load_case_phone(a_path, &towers, range)?;
    let (phone_b, ms_b) = load_case_phone(b_path, &towers, range)?;

    let all_times: Vec<i64> = ms_a
        .iter()
        .chain(&ms_b)
        .map(|m| m.timestamp)
        .collect();
    let Some(&start) = all_times.iter().min() else {
        bail!("no measurements in the requested range");
    };
    let end = (*all_times.iter().max().unwrap()).max(start + 1);

    let track_a = Track::new(&phone_a, "unknown-a", start, end, ms_a)?;
    let track_b = Track::new(&phone_b, "unknown-b", start, end, ms_b)?;
    let pair = TrackPair::new(track_a, track_b, PairLabel::Unknown)?;
    let prepared = PreparedPair::from_pair(&pair);
    let n_switches = prepared.features.len();
    let ElubBounds { lower, upper } = pipeline.bounds;

    let report = if n_switches == 0 {
        eprintln!("pair {} has no switches in range; refusing to score", prepared.pair_id);
        CaseReport {
            pair_id: prepared.pair_id.clone(),
            n_switches: 0,
            unscorable: true,
            reason: Some("0 switches between the two phones in the requested range".into()),
            score: None,
            lr: None,
            clipped_lr: None,
            lr_lower_bound: lower,
            lr_upper_bound: upper,
            pipeline_hash: pipeline.content_hash(),
        }
    } else {
        let eval = pipeline.evaluate_pair(&prepared)?;
        CaseReport {
            pair_id: prepared.pair_id.clone(),
            n_switches,
            unscorable: false,
            reason: None,
            score: Some(eval.score),
            lr: Some(eval.raw_lr),
            clipped_lr: Some(eval.clipped_lr),
            lr_lower_bound: lower,
            lr_upper_bound: upper,
            pipeline_hash: pipeline.content_hash(),
        }
    };
    Ok(serde_json::to_value(&report)?)
}
