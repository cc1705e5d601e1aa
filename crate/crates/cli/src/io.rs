//! On-disk formats: event CSV + JSON metadata sidecar, JSON checkpoints,
//! trace/metrics/detail CSVs, and run manifests.

use crate::error::CliError;
use coevolve_core::{Activation, Event, EventDetail, EventLog, Metrics, ModelParams, TrainTrace};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// Event CSV + sidecar
// ---------------------------------------------------------------------------

/// Metadata sidecar `{m, n, d, T}` stored next to an event CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
}

pub fn sidecar_path(events: &Path) -> PathBuf {
    events.with_extension("meta.json")
}

pub fn read_sidecar(events: &Path) -> Result<Option<Sidecar>, CliError> {
    let path = sidecar_path(events);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let sidecar = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("bad sidecar {}: {e}", path.display())))?;
    Ok(Some(sidecar))
}

/// Loads `user_id,item_id,time[,c_1..c_d]` rows (header optional), sorted and
/// validated. User/item counts come from the arguments when given, otherwise
/// from the sidecar; the horizon comes from the sidecar when present, else
/// the last event time.
pub fn load_event_log(
    path: &Path,
    users: Option<usize>,
    items: Option<usize>,
) -> Result<EventLog, CliError> {
    let sidecar = read_sidecar(path)?;
    let m = users
        .or(sidecar.as_ref().map(|s| s.m))
        .ok_or_else(|| CliError::config("user count required (flag, config, or sidecar)"))?;
    let n = items
        .or(sidecar.as_ref().map(|s| s.n))
        .ok_or_else(|| CliError::config("item count required (flag, config, or sidecar)"))?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut events = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("row {}: {e}", idx + 1)))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 && record.get(0).is_some_and(|f| f.parse::<usize>().is_err()) {
            continue; // header row
        }
        if record.len() < 3 {
            return Err(CliError::data(format!(
                "row {}: expected at least user_id,item_id,time",
                idx + 1
            )));
        }
        let field = |j: usize| record.get(j).unwrap_or("");
        let user: usize = field(0)
            .parse()
            .map_err(|_| CliError::data(format!("row {}: bad user id `{}`", idx + 1, field(0))))?;
        let item: usize = field(1)
            .parse()
            .map_err(|_| CliError::data(format!("row {}: bad item id `{}`", idx + 1, field(1))))?;
        let time: f64 = field(2)
            .parse()
            .map_err(|_| CliError::data(format!("row {}: bad time `{}`", idx + 1, field(2))))?;
        let mut event = Event::new(user, item, time);
        if record.len() > 3 {
            let mut context = Vec::with_capacity(record.len() - 3);
            for j in 3..record.len() {
                context.push(field(j).parse::<f64>().map_err(|_| {
                    CliError::data(format!("row {}: bad context value `{}`", idx + 1, field(j)))
                })?);
            }
            event.context = Some(context);
        }
        events.push(event);
    }

    let log = match sidecar.as_ref() {
        Some(s) => EventLog::with_horizon(events, m, n, s.horizon)?,
        None => EventLog::new(events, m, n)?,
    };
    if let Some(s) = sidecar {
        if s.d != log.context_dim() {
            return Err(CliError::data(format!(
                "sidecar context dim {} disagrees with rows ({})",
                s.d,
                log.context_dim()
            )));
        }
    }
    Ok(log)
}

pub fn save_event_log(path: &Path, log: &EventLog) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    let mut header = vec!["user_id".to_string(), "item_id".into(), "time".into()];
    for j in 0..log.context_dim() {
        header.push(format!("c_{}", j + 1));
    }
    writer
        .write_record(&header)
        .and_then(|_| {
            for e in log.events() {
                let mut row = vec![e.user.to_string(), e.item.to_string(), e.time.to_string()];
                if let Some(q) = &e.context {
                    row.extend(q.iter().map(|x| x.to_string()));
                }
                writer.write_record(&row)?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    let sidecar = Sidecar {
        m: log.num_users(),
        n: log.num_items(),
        d: log.context_dim(),
        horizon: log.horizon(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    k: usize,
    d: usize,
    activation: String,
    /// Row-major blocks keyed "W1".."W4" (user side), "V1".."V4" (item side).
    blocks: BTreeMap<String, Vec<f64>>,
}

/// Writes a checkpoint. JSON numbers round-trip `f64` exactly, so a
/// load-after-save reproduces every parameter bit.
pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<(), CliError> {
    let mut blocks = BTreeMap::new();
    blocks.insert("W1".into(), params.user.drift.clone());
    blocks.insert("W2".into(), params.user.self_evo.clone());
    blocks.insert("W3".into(), params.user.co_evo.clone());
    blocks.insert("W4".into(), params.user.context.clone());
    blocks.insert("V1".into(), params.item.drift.clone());
    blocks.insert("V2".into(), params.item.self_evo.clone());
    blocks.insert("V3".into(), params.item.co_evo.clone());
    blocks.insert("V4".into(), params.item.context.clone());
    let file = CheckpointFile {
        k: params.k(),
        d: params.context_dim(),
        activation: params.activation.name().to_string(),
        blocks,
    };
    write_json(path, &file)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("bad checkpoint {}: {e}", path.display())))?;
    let activation: Activation = file
        .activation
        .parse()
        .map_err(|e: String| CliError::data(format!("bad checkpoint: {e}")))?;
    let mut params = ModelParams::zeros(file.k, file.d, activation);
    let take = |name: &str, expected: usize| -> Result<Vec<f64>, CliError> {
        let block = file
            .blocks
            .get(name)
            .ok_or_else(|| CliError::data(format!("checkpoint missing block {name}")))?;
        if block.len() != expected {
            return Err(CliError::data(format!(
                "checkpoint block {name} has {} entries, expected {expected}",
                block.len()
            )));
        }
        if block.iter().any(|x| !x.is_finite()) {
            return Err(CliError::data(format!(
                "checkpoint block {name} contains non-finite values"
            )));
        }
        Ok(block.clone())
    };
    let (k, d) = (file.k, file.d);
    params.user.drift = take("W1", k)?;
    params.user.self_evo = take("W2", k * k)?;
    params.user.co_evo = take("W3", k * k)?;
    params.user.context = take("W4", k * d)?;
    params.item.drift = take("V1", k)?;
    params.item.self_evo = take("V2", k * k)?;
    params.item.co_evo = take("V3", k * k)?;
    params.item.context = take("V4", k * d)?;
    Ok(params)
}

// ---------------------------------------------------------------------------
// Trace, metrics, details, predictions
// ---------------------------------------------------------------------------

pub fn save_trace(path: &Path, trace: &TrainTrace) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record([
            "window",
            "event_term",
            "survival_term",
            "total",
            "grad_norm",
            "clip_events",
        ])
        .and_then(|_| {
            for w in &trace.windows {
                writer.write_record([
                    w.window.to_string(),
                    w.event_term.to_string(),
                    w.survival_term.to_string(),
                    w.total.to_string(),
                    w.grad_norm.to_string(),
                    w.clip_events.to_string(),
                ])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct MetricsDto {
    pub mar: f64,
    pub mae_hours: f64,
    pub per_bin_mar: Vec<f64>,
    pub per_bin_count: Vec<usize>,
    pub recurring_mar: f64,
    pub recurring_mae: f64,
    pub ranked: usize,
    pub timed: usize,
    pub cold_pairs_skipped: usize,
    pub recurring: usize,
}

impl From<&Metrics> for MetricsDto {
    fn from(m: &Metrics) -> Self {
        MetricsDto {
            mar: m.mar,
            mae_hours: m.mae_hours,
            per_bin_mar: m.per_bin_mar.clone(),
            per_bin_count: m.per_bin_count.clone(),
            recurring_mar: m.recurring_mar,
            recurring_mae: m.recurring_mae,
            ranked: m.counts.ranked,
            timed: m.counts.timed,
            cold_pairs_skipped: m.counts.cold_pairs_skipped,
            recurring: m.counts.recurring,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SplitDto {
    pub proportion: f64,
    pub train_events: usize,
    pub test_events: usize,
    pub metrics: MetricsDto,
}

#[derive(Debug, Serialize)]
pub struct ReportDto {
    pub splits: Vec<SplitDto>,
    pub mean_mar: f64,
    pub mean_mae: f64,
}

pub fn save_metrics_json(path: &Path, report: &ReportDto) -> Result<(), CliError> {
    write_json(path, report)
}

pub fn save_metrics_csv(path: &Path, report: &ReportDto) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record([
            "proportion",
            "train_events",
            "test_events",
            "mar",
            "mae_hours",
            "recurring_mar",
            "recurring_mae",
            "ranked",
            "timed",
            "cold_pairs_skipped",
            "recurring",
        ])
        .and_then(|_| {
            for s in &report.splits {
                writer.write_record([
                    s.proportion.to_string(),
                    s.train_events.to_string(),
                    s.test_events.to_string(),
                    s.metrics.mar.to_string(),
                    s.metrics.mae_hours.to_string(),
                    s.metrics.recurring_mar.to_string(),
                    s.metrics.recurring_mae.to_string(),
                    s.metrics.ranked.to_string(),
                    s.metrics.timed.to_string(),
                    s.metrics.cold_pairs_skipped.to_string(),
                    s.metrics.recurring.to_string(),
                ])?;
            }
            writer.write_record([
                "mean".to_string(),
                String::new(),
                String::new(),
                report.mean_mar.to_string(),
                report.mean_mae.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn save_details(path: &Path, details: &[EventDetail]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record(["user", "time", "true_item", "rank", "predicted_time"])
        .and_then(|_| {
            for d in details {
                writer.write_record([
                    d.user.to_string(),
                    d.time.to_string(),
                    d.true_item.to_string(),
                    d.rank.to_string(),
                    d.predicted_time.map(|t| t.to_string()).unwrap_or_default(),
                ])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub struct PredictionRow {
    pub rank: usize,
    pub item: usize,
    pub score: f64,
    pub predicted_return_time: f64,
}

pub fn save_prediction(
    path: &Path,
    user: usize,
    time: f64,
    rows: &[PredictionRow],
) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record([
            "query_user",
            "query_time",
            "rank",
            "item",
            "score",
            "predicted_return_time",
        ])
        .and_then(|_| {
            for r in rows {
                writer.write_record([
                    user.to_string(),
                    time.to_string(),
                    r.rank.to_string(),
                    r.item.to_string(),
                    r.score.to_string(),
                    r.predicted_return_time.to_string(),
                ])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

/// Every run writes `<command>_manifest.json` with the fully resolved
/// configuration, enough to reproduce the run bit for bit.
pub fn save_manifest(
    dir: &Path,
    command: &str,
    resolved: serde_json::Value,
) -> Result<PathBuf, CliError> {
    let manifest = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "resolved": resolved,
    });
    let path = dir.join(format!("{command}_manifest.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(format!("serialization failed: {e}")))?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}
