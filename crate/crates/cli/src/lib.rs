//! The `gazereview` command line.
//!
//! Every command writes its result to the given writer; errors surface as
//! [`gazereview_core::Error`] and are rendered by `main` as one JSON line on
//! stderr with a per-kind exit code (see [`exit_code`]).

use std::fs;
use std::io::{BufReader, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use gazereview_core::geometry::GazeAngles;
use gazereview_core::labeler::{label_session_ml, MissingFacePolicy, MlLabelerConfig};
use gazereview_core::pipeline::{evaluate_stored, EvaluationRequest};
use gazereview_core::session::{EventMarker, LabelSequence, Session, SystemKind};
use gazereview_core::sim::ScenarioConfig;
use gazereview_core::store::{parse_predictions, NewSession, Store};
use gazereview_core::study::{simulate_sessions, ProctorPanel};
use gazereview_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gazereview", version, about = "Gaze-assisted proctoring review tools")]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "GAZEREVIEW_STORE", default_value = "gazereview-store")]
    pub store: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Store a session from a line-delimited prediction file.
    Ingest {
        file: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        fps: f64,
        #[arg(long)]
        video_uri: Option<String>,
        /// RFC 3339 timestamp; defaults to the file's modification time.
        #[arg(long)]
        created_at: Option<String>,
        /// JSON array of {frame, kind, note} timeline markers.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Generate synthetic sessions with ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Label sessions with the angular-threshold model.
    LabelMl {
        /// Session id, or `all`.
        #[arg(long)]
        session: String,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        ref_pitch: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        ref_yaw: f64,
        #[arg(long, default_value_t = 1)]
        min_run: usize,
        /// treat_negative, treat_positive or carry_forward.
        #[arg(long, default_value = "treat_negative")]
        missing_face: String,
    },
    /// Score stored labels against the majority-vote reference.
    Evaluate {
        /// Comma-separated session ids, or `all`.
        #[arg(long)]
        sessions: String,
        #[arg(long)]
        k: usize,
        /// Proctor panel JSON. Fabricates human, hybrid and vote data from
        /// stored ground truth and ML labels before evaluating.
        #[arg(long)]
        simulate_proctors: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "GAZEREVIEW_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "GAZEREVIEW_HOST", default_value = "127.0.0.1")]
        host: IpAddr,
        /// Spatial index cells per axis.
        #[arg(long, env = "GAZEREVIEW_GRID", default_value_t = 64)]
        grid: usize,
    },
    /// Print a stored evaluation report.
    ExportReport {
        report_id: String,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
}

/// Process exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotFound(_) => 3,
        Error::Validation(_) | Error::Parse { .. } | Error::Domain(_) => 4,
        Error::Corrupt { .. } | Error::Io(_) | Error::Json(_) => 5,
        Error::Conflict { .. } | Error::AlreadyExists(_) => 6,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        3 => "not_found",
        4 => "validation",
        5 => "store",
        6 => "conflict",
        _ => "error",
    }
}

/// The single-line JSON form of an error.
pub fn error_line(e: &Error) -> String {
    let fields = match e {
        Error::Validation(f) => f.clone(),
        _ => Vec::new(),
    };
    serde_json::json!({
        "error": error_kind(e),
        "message": e.to_string(),
        "fields": fields,
    })
    .to_string()
}

fn read_json_file<T: DeserializeOwned>(path: &Path, flag: &str) -> Result<T> {
    let bytes = fs::read(path)
        .map_err(|e| Error::invalid(flag, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::invalid(flag, format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, v)?;
    writeln!(out)?;
    Ok(())
}

fn session_ids(store: &Store, arg: &str) -> Result<Vec<String>> {
    let ids: Vec<String> = if arg == "all" {
        store.list_manifests()?.into_iter().map(|m| m.id).collect()
    } else {
        arg.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    };
    if ids.is_empty() {
        return Err(Error::invalid("sessions", "no sessions selected"));
    }
    Ok(ids)
}

/// Writes labels over whatever version is stored.
fn overwrite_labels(store: &Store, id: &str, labels: &LabelSequence) -> Result<u64> {
    let current = match store.load_labels(id, labels.system) {
        Ok(l) => l.version,
        Err(Error::NotFound(_)) => 0,
        Err(e) => return Err(e),
    };
    Ok(store.persist_labels(id, labels, current)?.version)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let store = Store::open(&cli.store)?;
    match cli.command {
        Command::Ingest {
            file,
            id,
            fps,
            video_uri,
            created_at,
            events,
        } => {
            let created_at: DateTime<Utc> = match created_at {
                Some(s) => DateTime::parse_from_rfc3339(&s)
                    .map_err(|e| Error::invalid("created_at", e.to_string()))?
                    .with_timezone(&Utc),
                None => fs::metadata(&file)
                    .and_then(|m| m.modified())
                    .map_err(|e| Error::invalid("file", format!("{}: {e}", file.display())))?
                    .into(),
            };
            let reader = fs::File::open(&file)
                .map_err(|e| Error::invalid("file", format!("{}: {e}", file.display())))?;
            let predictions = parse_predictions(BufReader::new(reader))?;
            let events: Vec<EventMarker> = match events {
                Some(p) => read_json_file(&p, "events")?,
                None => Vec::new(),
            };
            let session = Session::new(id, fps, predictions, events)?;
            let manifest = store.persist_session(&session, NewSession::ingested(video_uri, created_at))?;
            print_json(out, &manifest)
        }
        Command::Simulate { config, n, seed } => {
            let scenario: ScenarioConfig = read_json_file(&config, "config")?;
            scenario.validate()?;
            for (session, truth) in simulate_sessions(&scenario, n, seed)? {
                store.persist_session(&session, NewSession::synthetic())?;
                store.persist_ground_truth(&session.id, &truth)?;
                print_json(
                    out,
                    &serde_json::json!({
                        "id": session.id,
                        "frame_count": truth.frame_count,
                        "events": truth.events.len(),
                    }),
                )?;
            }
            Ok(())
        }
        Command::LabelMl {
            session,
            theta,
            ref_pitch,
            ref_yaw,
            min_run,
            missing_face,
        } => {
            let cfg = MlLabelerConfig {
                min_run,
                missing_face_policy: missing_face.parse::<MissingFacePolicy>()?,
                ..MlLabelerConfig::with_theta(theta)
            }
            .with_reference_angles(GazeAngles::new(ref_pitch, ref_yaw)?)?;
            cfg.validate()?;
            for id in session_ids(&store, &session)? {
                let labels = label_session_ml(&store.load_session(&id)?, &cfg)?;
                let version = overwrite_labels(&store, &id, &labels)?;
                print_json(
                    out,
                    &serde_json::json!({
                        "id": id,
                        "version": version,
                        "positive_frames": labels.count_positive(),
                        "intervals": labels.intervals().len(),
                    }),
                )?;
            }
            Ok(())
        }
        Command::Evaluate {
            sessions,
            k,
            simulate_proctors,
            format,
        } => {
            let ids = session_ids(&store, &sessions)?;
            if let Some(path) = simulate_proctors {
                let panel: ProctorPanel = read_json_file(&path, "simulate_proctors")?;
                panel.validate()?;
                for id in &ids {
                    let session = store.load_session(id)?;
                    let truth = store.load_ground_truth(id)?;
                    let ml = store.load_labels(id, SystemKind::MlOnly)?.to_sequence()?;
                    let fabricated = panel.fabricate(&session, &truth, ml, k)?;
                    overwrite_labels(&store, id, &fabricated.human)?;
                    overwrite_labels(&store, id, &fabricated.hybrid)?;
                    store.persist_votes(id, k, fabricated.votes)?;
                }
            }
            let req = EvaluationRequest {
                session_ids: ids,
                ml_config: None,
                k,
            };
            let (report_id, report) = evaluate_stored(&store, &req)?;
            match format {
                ReportFormat::Json => print_json(
                    out,
                    &serde_json::json!({"report_id": report_id, "report": report}),
                ),
                ReportFormat::Text => {
                    writeln!(out, "report: {report_id}")?;
                    write!(out, "{}", report.render_text())?;
                    Ok(())
                }
            }
        }
        Command::Serve { port, host, grid } => {
            let _ = tracing_subscriber::fmt()
                .with_writer(std::io::stderr)
                .try_init();
            let state = Arc::new(gazereview_server::AppState::with_grid_resolution(store, grid));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(gazereview_server::serve(SocketAddr::new(host, port), state))?;
            Ok(())
        }
        Command::ExportReport { report_id, format } => {
            let report = store.load_report(&report_id)?;
            match format {
                ReportFormat::Json => {
                    serde_json::to_writer_pretty(&mut *out, &report)?;
                    writeln!(out)?;
                }
                ReportFormat::Text => write!(out, "{}", report.render_text())?,
            }
            Ok(())
        }
    }
}
