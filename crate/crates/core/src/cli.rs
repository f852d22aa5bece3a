//! Operator commands. Each `cmd_*` function writes its machine-readable
//! output to files and returns a report whose `Display` is the human summary.
//! [`run`] parses arguments and maps errors to exit codes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use crate::aggregators::{receive, ACK, NAK};
use crate::config::{Config, ConfigError};
use crate::fusion::{fuse_situation, FusionError, SituationRecord};
use crate::messages::{MapTopology, RecordBody, RecordKind, StationId, TimestampMs};
use crate::metrics::{evaluate_situation, handover_summary, to_csv, HandoverSummary, MetricsError};
use crate::simgen::{generate, ScenarioConfig, SimError};
use crate::store::{RawQuery, RawSource, Store, StoreError, StoreStats};
use crate::stressmap::{self, StressError, StressSample};
use crate::wire::{decode_batch, read_frame, read_ksb, write_ksb, BatchEnvelope, FrameError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] SimError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stress(#[from] StressError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("no situation with id {0}")]
    UnknownSituation(u64),
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("listener: {0}")]
    Listener(io::Error),
}

impl CliError {
    /// 1 for problems with the operator's input, 2 for internal failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_)
            | CliError::UnknownSituation(_)
            | CliError::Input { .. }
            | CliError::Io { .. }
            | CliError::Metrics(_)
            | CliError::Stress(_) => 1,
            CliError::Scenario(SimError::Wire(_)) => 2,
            CliError::Scenario(_) => 1,
            CliError::Fusion(FusionError::Store(_)) => 2,
            CliError::Fusion(_) => 1,
            CliError::Store(_) | CliError::Listener(_) => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn input_err(path: &Path, reason: impl fmt::Display) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn open_store(cfg: &Config) -> Result<Store, CliError> {
    Ok(Store::open(&cfg.store_path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub files: Vec<PathBuf>,
    pub batches: usize,
    pub records: usize,
    pub objects: usize,
}

impl fmt::Display for SimulateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "simulated {} road users: {} batches, {} records in {} files",
            self.objects,
            self.batches,
            self.records,
            self.files.len()
        )
    }
}

/// Writes one `.ksb` file per sending station, `ground_truth.json` and `map.json`.
pub fn cmd_simulate(scenario: &Path, out_dir: &Path) -> Result<SimulateReport, CliError> {
    let text = fs::read_to_string(scenario).map_err(io_err(scenario))?;
    let sc = generate(&ScenarioConfig::from_toml(&text)?)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut by_station: BTreeMap<StationId, Vec<BatchEnvelope>> = BTreeMap::new();
    for b in &sc.batches {
        by_station.entry(b.meta.station).or_default().push(b.clone());
    }
    let mut files = Vec::new();
    for (station, batches) in &by_station {
        let path = out_dir.join(format!("station_{}.ksb", station.0));
        if path.exists() {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
        write_ksb(&path, batches).map_err(|e| input_err(&path, e))?;
        files.push(path);
    }
    let truth = out_dir.join("ground_truth.json");
    write_file(&truth, &serde_json::to_string_pretty(&sc.truth).expect("truth serializes"))?;
    let map = out_dir.join("map.json");
    write_file(&map, &serde_json::to_string_pretty(&sc.map).expect("map serializes"))?;
    files.extend([truth, map]);
    Ok(SimulateReport {
        files,
        batches: sc.batches.len(),
        records: sc.batches.iter().map(|b| b.records.len()).sum(),
        objects: sc.truth.objects.len(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub batches: usize,
    pub records: usize,
    pub inserted: usize,
    pub duplicates: usize,
    pub rejected: usize,
    pub topologies: usize,
}

impl IngestReport {
    fn add(&mut self, o: IngestReport) {
        self.batches += o.batches;
        self.records += o.records;
        self.inserted += o.inserted;
        self.duplicates += o.duplicates;
        self.rejected += o.rejected;
        self.topologies += o.topologies;
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ingested {} batches: {} records, {} new, {} duplicates skipped, {} batches rejected, {} topologies",
            self.batches, self.records, self.inserted, self.duplicates, self.rejected, self.topologies
        )
    }
}

pub fn ingest_envelope(store: &mut Store, e: &BatchEnvelope) -> Result<IngestReport, CliError> {
    let records = receive(e).map_err(|err| CliError::Input {
        path: PathBuf::from(format!("batch from station {}", e.meta.station.0)),
        reason: err.to_string(),
    })?;
    let inserted = store.insert_raw(&records)?;
    Ok(IngestReport {
        batches: 1,
        records: records.len(),
        inserted,
        duplicates: records.len() - inserted,
        ..IngestReport::default()
    })
}

/// `.ksb` batch files and `.json` intersection topologies.
pub fn ingest_files(store: &mut Store, paths: &[PathBuf]) -> Result<IngestReport, CliError> {
    let mut report = IngestReport::default();
    for path in paths {
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let map: MapTopology = serde_json::from_str(&text).map_err(|e| input_err(path, e))?;
            if !map.is_well_formed() {
                return Err(input_err(path, "malformed topology"));
            }
            store.put_topology(&map)?;
            report.topologies += 1;
            continue;
        }
        let batches = read_ksb(path).map_err(|e| match e {
            FrameError::Io(source) => CliError::Io {
                path: path.clone(),
                source,
            },
            other => input_err(path, other),
        })?;
        for b in &batches {
            report.add(ingest_envelope(store, b).map_err(|e| match e {
                CliError::Input { reason, .. } => input_err(path, reason),
                other => other,
            })?);
        }
    }
    Ok(report)
}

enum Job {
    Frame(BatchEnvelope, mpsc::Sender<bool>),
}

fn serve_connection(mut stream: TcpStream, jobs: mpsc::Sender<Job>) -> IngestReport {
    let mut rejected = IngestReport::default();
    loop {
        let frame = match read_frame(&mut stream) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                log::warn!("connection dropped: {e}");
                break;
            }
        };
        let ok = match decode_batch(&frame) {
            Ok(env) => {
                let (tx, rx) = mpsc::channel();
                if jobs.send(Job::Frame(env, tx)).is_err() {
                    break;
                }
                rx.recv().unwrap_or(false)
            }
            Err(e) => {
                log::warn!("rejected frame: {e}");
                false
            }
        };
        if !ok {
            rejected.rejected += 1;
        }
        if stream.write_all(&[if ok { ACK } else { NAK }]).and_then(|_| stream.flush()).is_err() {
            break;
        }
    }
    rejected
}

/// Accepts connections on `listener`, each carrying length-prefixed frames.
/// One thread per connection decodes; a single writer owns the store and
/// answers every frame with ACK once stored or NAK if rejected. Returns after
/// `max_connections` connections have closed; runs forever when `None`.
pub fn serve(listener: TcpListener, store: &mut Store, max_connections: Option<usize>) -> Result<IngestReport, CliError> {
    let (jobs_tx, jobs_rx) = mpsc::channel::<Job>();
    thread::scope(|scope| {
        let writer = scope.spawn(move || {
            let mut report = IngestReport::default();
            for Job::Frame(env, reply) in jobs_rx {
                match ingest_envelope(store, &env) {
                    Ok(r) => {
                        report.add(r);
                        let _ = reply.send(true);
                    }
                    Err(e) => {
                        log::warn!("batch not stored: {e}");
                        let _ = reply.send(false);
                    }
                }
            }
            report
        });
        let mut readers = Vec::new();
        let limit = max_connections.unwrap_or(usize::MAX);
        let mut accept_error = None;
        for stream in listener.incoming().take(limit) {
            match stream {
                Ok(s) => {
                    let jobs = jobs_tx.clone();
                    readers.push(scope.spawn(move || serve_connection(s, jobs)));
                }
                Err(e) => {
                    accept_error = Some(e);
                    break;
                }
            }
        }
        drop(jobs_tx);
        let mut report = IngestReport::default();
        for r in readers {
            report.add(r.join().expect("connection thread"));
        }
        report.add(writer.join().expect("writer thread"));
        match accept_error {
            Some(e) => Err(CliError::Listener(e)),
            None => Ok(report),
        }
    })
}

pub fn cmd_ingest(
    cfg: &Config,
    files: &[PathBuf],
    listen: bool,
    max_connections: Option<usize>,
) -> Result<IngestReport, CliError> {
    let mut store = open_store(cfg)?;
    let mut report = ingest_files(&mut store, files)?;
    if listen {
        let listener = TcpListener::bind(&cfg.listen_addr).map_err(CliError::Listener)?;
        log::info!("listening on {}", cfg.listen_addr);
        report.add(serve(listener, &mut store, max_connections)?);
    }
    Ok(report)
}

/// One line describing a fused situation.
pub fn summary_line(s: &SituationRecord) -> String {
    let driver = s
        .driver
        .map(|d| format!("valence {} arousal {}", d.valence, d.arousal))
        .unwrap_or_else(|| "no driver state".into());
    let lanes = s.topology.as_ref().map_or(0, |t| t.lanes.len());
    format!(
        "situation {}: VUT {} at {}, {} objects, {} lanes, {} hazards, {}, {}",
        s.situation_id,
        s.vut.0,
        s.timestamp,
        s.objects.len(),
        lanes,
        s.hazards.len(),
        driver,
        if s.environment.is_some() { "environment" } else { "no environment" }
    )
}

pub fn cmd_fuse(cfg: &Config, vut: StationId, at: TimestampMs) -> Result<SituationRecord, CliError> {
    let mut store = open_store(cfg)?;
    Ok(fuse_situation(vut, at, &mut store, &cfg.fusion)?)
}

fn load(cfg: &Config, id: u64) -> Result<SituationRecord, CliError> {
    let mut store = open_store(cfg)?;
    store.load_situation(id)?.ok_or(CliError::UnknownSituation(id))
}

/// Writes the evaluation table and returns the handover assessment.
pub fn cmd_eval(cfg: &Config, id: u64, csv_out: &Path) -> Result<HandoverSummary, CliError> {
    let s = load(cfg, id)?;
    let rows = evaluate_situation(&s, &cfg.metrics)?;
    write_file(csv_out, &to_csv(&rows))?;
    Ok(handover_summary(
        &rows,
        s.driver.as_ref(),
        &s.hazards,
        &cfg.metrics,
        &cfg.stress_matrix()?,
    ))
}

fn point(p: crate::geo::GeoPosition) -> Value {
    json!({ "type": "Point", "coordinates": [p.lon, p.lat] })
}

/// Fused objects, lanes with their signal phase, and the VUT as a feature collection.
pub fn situation_geojson(s: &SituationRecord) -> Value {
    let mut features = Vec::new();
    for o in &s.objects {
        let vut = o.is_vut(s.vut);
        features.push(json!({
            "type": "Feature",
            "geometry": point(o.position),
            "properties": {
                "layer": if vut { "vut" } else { "object" },
                "object_id": o.fused_id,
                "classification": o.classification.label(),
                "speed": o.speed,
                "course": o.course.value(),
                "lane_id": o.lane_id,
                "sources": o.provenance.len(),
            }
        }));
    }
    if let Some(t) = &s.topology {
        for l in &t.lanes {
            let coords: Vec<[f64; 2]> = l.lane.polyline.iter().map(|p| [p.lon, p.lat]).collect();
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords },
                "properties": {
                    "layer": "lane",
                    "intersection_id": t.intersection_id,
                    "lane_id": l.lane.lane_id,
                    "signal_group": l.lane.signal_group,
                    "phase": format!("{:?}", l.phase),
                }
            }));
        }
    }
    for h in &s.hazards {
        features.push(json!({
            "type": "Feature",
            "geometry": point(h.position),
            "properties": { "layer": "hazard", "kind": format!("{:?}", h.kind), "source": h.source.0 }
        }));
    }
    json!({
        "type": "FeatureCollection",
        "properties": {
            "situation_id": s.situation_id,
            "vut": s.vut.0,
            "timestamp": s.timestamp,
            "radius_m": s.radius_m,
        },
        "features": features,
    })
}

pub fn cmd_export(cfg: &Config, id: u64, out: &Path) -> Result<usize, CliError> {
    let doc = situation_geojson(&load(cfg, id)?);
    let n = doc["features"].as_array().map_or(0, Vec::len);
    write_file(out, &serde_json::to_string_pretty(&doc).expect("json"))?;
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StressReport {
    pub samples: usize,
    pub cells: usize,
}

impl fmt::Display for StressReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} driver samples in {} stress cells", self.samples, self.cells)
    }
}

/// Aggregates every stored driver state of `vut` at the position it was recorded.
pub fn cmd_stressmap(cfg: &Config, vut: StationId, out: &Path) -> Result<StressReport, CliError> {
    let store = open_store(cfg)?;
    let matrix = cfg.stress_matrix()?;
    let q = RawQuery::new(0, TimestampMs::MAX, [RecordKind::DriverState]).from_reporter(vut);
    let samples: Vec<StressSample> = store
        .query_raw(&q)?
        .records
        .iter()
        .filter_map(|r| match r.record.body {
            RecordBody::DriverState(d) if d.is_valid() => Some(StressSample::from_driver(&d, r.record.position)),
            _ => None,
        })
        .collect();
    let tree = stressmap::build(&samples, cfg.stress_tree)?;
    let cells = tree.cells(1, &matrix);
    write_file(out, &stressmap::export_geojson(&cells))?;
    Ok(StressReport {
        samples: samples.len(),
        cells: cells.len(),
    })
}

pub fn cmd_stats(cfg: &Config) -> Result<StoreStats, CliError> {
    Ok(open_store(cfg)?.stats()?)
}

pub fn format_stats(s: &StoreStats) -> String {
    let mut out = String::new();
    for (kind, n) in &s.raw {
        out.push_str(&format!("{:<14}{n}\n", format!("{kind:?}")));
    }
    out.push_str(&format!("{:<14}{}\n", "raw total", s.raw_total()));
    out.push_str(&format!("{:<14}{}\n", "map lanes", s.map_lanes));
    out.push_str(&format!("{:<14}{}", "situations", s.situations));
    out
}

#[derive(Debug, Parser)]
#[command(name = "situfuse", version, about = "Traffic situation fusion backend")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario as batch files.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Store batches from files and/or a socket listener.
    Ingest {
        files: Vec<PathBuf>,
        #[arg(long)]
        listen: bool,
        /// Stop listening after this many connections have closed.
        #[arg(long)]
        connections: Option<usize>,
    },
    /// Fuse the situation around a VUT at a point in time.
    Fuse {
        #[arg(long)]
        vut: u32,
        /// Milliseconds since the Unix epoch.
        #[arg(long)]
        at: TimestampMs,
    },
    /// Write the evaluation table of a situation.
    Eval {
        #[arg(long)]
        situation: u64,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Write a situation as GeoJSON.
    Export {
        #[arg(long)]
        situation: u64,
        #[arg(long)]
        geojson: PathBuf,
    },
    /// Write the driver stress map of a VUT as GeoJSON.
    Stressmap {
        #[arg(long)]
        vut: u32,
        #[arg(long)]
        geojson: PathBuf,
    },
    /// Print row counts of the store.
    Stats,
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref())?;
    let line = match cli.command {
        Command::Simulate { scenario, out } => cmd_simulate(&scenario, &out)?.to_string(),
        Command::Ingest {
            files,
            listen,
            connections,
        } => cmd_ingest(&cfg, &files, listen, connections)?.to_string(),
        Command::Fuse { vut, at } => summary_line(&cmd_fuse(&cfg, StationId(vut), at)?),
        Command::Eval { situation, csv } => cmd_eval(&cfg, situation, &csv)?.to_string(),
        Command::Export { situation, geojson } => {
            let n = cmd_export(&cfg, situation, &geojson)?;
            format!("wrote {n} features to {}", geojson.display())
        }
        Command::Stressmap { vut, geojson } => cmd_stressmap(&cfg, StationId(vut), &geojson)?.to_string(),
        Command::Stats => format_stats(&cmd_stats(&cfg)?),
    };
    let _ = writeln!(out, "{line}");
    Ok(())
}

/// Runs one command; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
