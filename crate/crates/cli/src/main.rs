//! `coevolve`: simulate, train, evaluate, and predict from one binary.

use clap::{Args, Parser, Subcommand};
use coevolve_cli::config::{self, FileConfig};
use coevolve_cli::io;
use coevolve_cli::CliError;
use coevolve_core::{
    evaluate, evaluate_detailed, holdout_nll, predict_return_time, rank_items, replay, simulate,
    sweep_splits, train, Activation, ContextMode, EventLog, Metrics, SimConfig, TrainConfig,
};
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "coevolve",
    version,
    about = "Event-driven recommendations from coevolving user/item embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an event log from a (random or given) model.
    Simulate(SimulateArgs),
    /// Fit model parameters to an event log.
    Train(TrainArgs),
    /// Split, (re)train or load a checkpoint, and score the held-out part.
    Evaluate(EvaluateArgs),
    /// Rank items for one user at one time from a checkpoint.
    Predict(PredictArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (also settable via COEVOLVE_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random draw of the run.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    context_dim: Option<usize>,
    /// "none" or "gaussian".
    #[arg(long)]
    context_mode: Option<String>,
    /// Observation window end, hours.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    max_events: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Event CSV path.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    /// Train only on events up to horizon * proportion.
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    embedding_dim: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    /// Score this checkpoint instead of training per split.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comma-separated split proportions, e.g. 0.7,0.72,0.74.
    #[arg(long, value_delimiter = ',')]
    proportions: Option<Vec<f64>>,
    /// Also write one CSV row per scored test event.
    #[arg(long)]
    dump_details: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Query user id.
    #[arg(long)]
    user: Option<usize>,
    /// Query time, hours.
    #[arg(long)]
    time: Option<f64>,
    /// How many items to report.
    #[arg(long)]
    top: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Predict(args) => run_predict(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.code as i32);
    }
}

struct Run {
    file: FileConfig,
    out: PathBuf,
    seed: u64,
}

fn prepare(common: &CommonArgs) -> Result<Run, CliError> {
    let file = config::load_config(common.config.as_deref())?;
    let out = config::resolve_output_dir(common.out.clone(), file.output_dir.clone());
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
    let seed = common.seed.or(file.seed).unwrap_or(0);
    Ok(Run { file, out, seed })
}

fn parse_activation(name: Option<&str>) -> Result<Activation, CliError> {
    match name {
        None => Ok(Activation::Tanh),
        Some(s) => s.parse().map_err(|e: String| CliError::config(e)),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let run = prepare(&args.common)?;
    let section = run.file.simulate.clone().unwrap_or_default();
    let users = args
        .users
        .or(section.users)
        .ok_or_else(|| CliError::config("simulate: user count required"))?;
    let items = args
        .items
        .or(section.items)
        .ok_or_else(|| CliError::config("simulate: item count required"))?;
    let k = args.embedding_dim.or(section.embedding_dim).unwrap_or(4);
    let d = args.context_dim.or(section.context_dim).unwrap_or(0);
    let mode = match args
        .context_mode
        .as_deref()
        .or(section.context_mode.as_deref())
        .unwrap_or("none")
    {
        "none" => ContextMode::None,
        "gaussian" => ContextMode::Gaussian,
        other => return Err(CliError::config(format!("unknown context mode `{other}`"))),
    };

    let mut cfg = SimConfig::new(users, items, k);
    cfg.d = d;
    cfg.context_mode = mode;
    cfg.horizon = args.horizon.or(section.horizon).unwrap_or(100.0);
    cfg.max_events = args.max_events.or(section.max_events).unwrap_or(10_000);
    cfg.seed = run.seed;
    cfg.activation = parse_activation(section.activation.as_deref())?;

    let result = simulate(&cfg)?;
    let events_path = run.out.join("events.csv");
    io::save_event_log(&events_path, &result.log)?;
    let params_path = run.out.join("sim_params.json");
    io::save_checkpoint(&params_path, &result.params)?;
    io::save_manifest(
        &run.out,
        "simulate",
        json!({
            "seed": cfg.seed,
            "users": users, "items": items,
            "embedding_dim": k, "context_dim": d,
            "context_mode": match mode { ContextMode::None => "none", ContextMode::Gaussian => "gaussian" },
            "horizon": cfg.horizon, "max_events": cfg.max_events,
            "activation": cfg.activation.name(),
            "outputs": { "events": events_path, "params": params_path },
        }),
    )?;
    println!(
        "simulate: {} events over [0, {}] for {users} users x {items} items -> {}",
        result.log.len(),
        result.log.horizon(),
        events_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn resolve_train_config(
    file: &FileConfig,
    seed: u64,
    epochs: Option<usize>,
    window_size: Option<usize>,
    learning_rate: Option<f64>,
    embedding_dim: Option<usize>,
) -> Result<TrainConfig, CliError> {
    let section = file.train.clone().unwrap_or_default();
    let k = embedding_dim.or(section.embedding_dim).unwrap_or(4);
    let mut cfg = TrainConfig::new(k);
    cfg.seed = seed;
    if let Some(m) = window_size.or(section.window_size) {
        cfg.window_size = m;
    }
    cfg.nce_samples = section.nce_samples;
    if let Some(flag) = section.scale_survival {
        cfg.scale_survival = flag;
    }
    if let Some(lr) = learning_rate.or(section.learning_rate) {
        cfg.learning_rate = lr;
    }
    if let Some(clip) = section.clip_norm {
        cfg.clip_norm = clip;
    }
    if let Some(e) = epochs.or(section.epochs) {
        cfg.epochs = e;
    }
    cfg.activation = parse_activation(section.activation.as_deref())?;
    Ok(cfg)
}

fn train_config_manifest(cfg: &TrainConfig) -> serde_json::Value {
    json!({
        "window_size": cfg.window_size,
        "nce_samples": cfg.nce_samples,
        "scale_survival": cfg.scale_survival,
        "learning_rate": cfg.learning_rate,
        "clip_norm": cfg.clip_norm,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "embedding_dim": cfg.k,
        "activation": cfg.activation.name(),
    })
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let run = prepare(&args.common)?;
    let section = run.file.train.clone().unwrap_or_default();
    let events_path = args
        .events
        .or(section.events.clone())
        .ok_or_else(|| CliError::config("train: events path required"))?;
    let log = io::load_event_log(
        &events_path,
        args.users.or(section.users),
        args.items.or(section.items),
    )?;
    let proportion = args.proportion.or(section.proportion);
    let train_log = match proportion {
        Some(p) => log.split_by_proportion(p)?.0,
        None => log,
    };

    let cfg = resolve_train_config(
        &run.file,
        run.seed,
        args.epochs,
        args.window_size,
        args.learning_rate,
        args.embedding_dim,
    )?;
    let outcome = train(&train_log, &cfg)?;

    let checkpoint_path = run.out.join("checkpoint.json");
    io::save_checkpoint(&checkpoint_path, &outcome.params)?;
    let trace_path = run.out.join("trace.csv");
    io::save_trace(&trace_path, &outcome.trace)?;
    io::save_manifest(
        &run.out,
        "train",
        json!({
            "events": events_path,
            "proportion": proportion,
            "train_events": train_log.len(),
            "config": train_config_manifest(&cfg),
            "degenerate_gaps": outcome.trace.degenerate_gaps,
            "outputs": { "checkpoint": checkpoint_path, "trace": trace_path },
        }),
    )?;
    let last = outcome
        .trace
        .windows
        .last()
        .map(|w| w.total)
        .unwrap_or(f64::NAN);
    println!(
        "train: {} events, {} windows, final window loss {last:.4} -> {}",
        train_log.len(),
        outcome.trace.windows.len(),
        checkpoint_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn metrics_report(rows: Vec<(f64, usize, usize, Metrics)>) -> io::ReportDto {
    let mut splits = Vec::with_capacity(rows.len());
    let (mut mar_sum, mut mae_sum, mut scored) = (0.0, 0.0, 0usize);
    for (proportion, train_events, test_events, metrics) in rows {
        if metrics.counts.ranked > 0 {
            mar_sum += metrics.mar;
            mae_sum += metrics.mae_hours;
            scored += 1;
        }
        splits.push(io::SplitDto {
            proportion,
            train_events,
            test_events,
            metrics: (&metrics).into(),
        });
    }
    let denom = scored.max(1) as f64;
    io::ReportDto {
        splits,
        mean_mar: mar_sum / denom,
        mean_mae: mae_sum / denom,
    }
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let run = prepare(&args.common)?;
    let section = run.file.evaluate.clone().unwrap_or_default();
    let events_path = args
        .events
        .or(section.events.clone())
        .ok_or_else(|| CliError::config("evaluate: events path required"))?;
    let log = io::load_event_log(
        &events_path,
        args.users.or(section.users),
        args.items.or(section.items),
    )?;
    let proportions = args
        .proportions
        .or(section.proportions.clone())
        .unwrap_or_else(|| vec![0.7]);
    let dump_details = args.dump_details || section.dump_details.unwrap_or(false);
    let checkpoint = args.checkpoint.or(section.checkpoint.clone());

    let report = match &checkpoint {
        Some(path) => {
            // Fixed parameters: replay each split's train part and score the
            // rest.
            let params = io::load_checkpoint(path)?;
            let mut rows = Vec::new();
            for &p in &proportions {
                let (train_log, test_log) = log.split_by_proportion(p)?;
                let metrics = if dump_details {
                    let (metrics, details) = evaluate_detailed(&train_log, &test_log, &params)?;
                    io::save_details(&run.out.join(format!("eval_details_p{p:.2}.csv")), &details)?;
                    metrics
                } else {
                    evaluate(&train_log, &test_log, &params)?
                };
                let nll = holdout_nll(&train_log, &test_log, &params)?;
                println!(
                    "evaluate p={p}: MAR {:.3}, MAE {:.3} h, held-out NLL {:.2} ({} test events)",
                    metrics.mar,
                    metrics.mae_hours,
                    nll.total,
                    test_log.len()
                );
                rows.push((p, train_log.len(), test_log.len(), metrics));
            }
            metrics_report(rows)
        }
        None => {
            // No fixed checkpoint: train a fresh model per split, then score.
            let cfg = resolve_train_config(&run.file, run.seed, None, None, None, None)?;
            if dump_details {
                let mut rows = Vec::new();
                for &p in &proportions {
                    let (train_log, test_log) = log.split_by_proportion(p)?;
                    let outcome = train(&train_log, &cfg)?;
                    let (metrics, details) =
                        evaluate_detailed(&train_log, &test_log, &outcome.params)?;
                    io::save_details(&run.out.join(format!("eval_details_p{p:.2}.csv")), &details)?;
                    println!(
                        "evaluate p={p}: MAR {:.3}, MAE {:.3} h ({} test events)",
                        metrics.mar,
                        metrics.mae_hours,
                        test_log.len()
                    );
                    rows.push((p, train_log.len(), test_log.len(), metrics));
                }
                metrics_report(rows)
            } else {
                let report = sweep_splits(&log, &cfg, &proportions)?;
                for s in &report.splits {
                    println!(
                        "evaluate p={}: MAR {:.3}, MAE {:.3} h ({} test events)",
                        s.proportion, s.metrics.mar, s.metrics.mae_hours, s.test_events
                    );
                }
                metrics_report(
                    report
                        .splits
                        .into_iter()
                        .map(|s| (s.proportion, s.train_events, s.test_events, s.metrics))
                        .collect(),
                )
            }
        }
    };

    let json_path = run.out.join("metrics.json");
    io::save_metrics_json(&json_path, &report)?;
    let csv_path = run.out.join("metrics.csv");
    io::save_metrics_csv(&csv_path, &report)?;
    io::save_manifest(
        &run.out,
        "evaluate",
        json!({
            "events": events_path,
            "checkpoint": checkpoint,
            "proportions": proportions,
            "dump_details": dump_details,
            "seed": run.seed,
            "train_config": run.file.train.as_ref().map(|_| train_config_manifest(
                &resolve_train_config(&run.file, run.seed, None, None, None, None).expect("validated above")
            )),
            "outputs": { "metrics_json": json_path, "metrics_csv": csv_path },
        }),
    )?;
    println!(
        "evaluate: mean MAR {:.3}, mean MAE {:.3} h over {} split(s) -> {}",
        report.mean_mar,
        report.mean_mae,
        report.splits.len(),
        json_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

fn run_predict(args: PredictArgs) -> Result<(), CliError> {
    let run = prepare(&args.common)?;
    let section = run.file.predict.clone().unwrap_or_default();
    let events_path = args
        .events
        .or(section.events.clone())
        .ok_or_else(|| CliError::config("predict: events path required"))?;
    let checkpoint_path = args
        .checkpoint
        .or(section.checkpoint.clone())
        .ok_or_else(|| CliError::config("predict: checkpoint path required"))?;
    let user = args
        .user
        .or(section.user)
        .ok_or_else(|| CliError::config("predict: user id required"))?;
    let time = args
        .time
        .or(section.time)
        .ok_or_else(|| CliError::config("predict: query time required"))?;
    let top = args.top.or(section.top).unwrap_or(10);

    let log = io::load_event_log(
        &events_path,
        args.users.or(section.users),
        args.items.or(section.items),
    )?;
    if user >= log.num_users() {
        return Err(CliError::data(format!(
            "query user {user} out of range (m={})",
            log.num_users()
        )));
    }
    let params = io::load_checkpoint(&checkpoint_path)?;
    if params.context_dim() != log.context_dim() {
        return Err(CliError::data(format!(
            "checkpoint context dim {} does not match log ({})",
            params.context_dim(),
            log.context_dim()
        )));
    }

    // Prediction at time t uses only events strictly before t.
    let past: Vec<_> = log
        .events()
        .iter()
        .filter(|e| e.time < time)
        .cloned()
        .collect();
    let past_log = EventLog::with_horizon(past, log.num_users(), log.num_items(), log.horizon())?;
    let rep = replay(&past_log, &params)?;
    let ranking = rank_items(&rep, user, time)?;
    let rows: Vec<io::PredictionRow> = ranking
        .top(top)
        .iter()
        .map(|&item| {
            predict_return_time(&rep, user, item, time).map(|rt| io::PredictionRow {
                rank: ranking.rank_of(item),
                item,
                score: ranking.score(item),
                predicted_return_time: rt,
            })
        })
        .collect::<Result<_, _>>()?;

    println!(
        "predict: user {user} at t={time} (top {top} of {}):",
        ranking.num_items()
    );
    for r in &rows {
        println!(
            "  #{:<3} item {:<4} score {:.6e} expected return t={:.4}",
            r.rank, r.item, r.score, r.predicted_return_time
        );
    }
    let csv_path = run.out.join("prediction.csv");
    io::save_prediction(&csv_path, user, time, &rows)?;
    io::save_manifest(
        &run.out,
        "predict",
        json!({
            "events": events_path,
            "checkpoint": checkpoint_path,
            "user": user, "time": time, "top": top,
            "outputs": { "prediction": csv_path },
        }),
    )?;
    println!("predict: wrote {}", csv_path.display());
    Ok(())
}
