//! `situ`: operator entry point for the situation fusion platform.
//!
//! Subcommands: `run` executes a scenario end-to-end in process, `serve`
//! runs the fusion backend on a TCP listener, `query` filters a store log,
//! `stressmap` exports the challenge grid as CSV or GeoJSON.

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand};

use situ_backend::evaluate::BaselineScorer;
use situ_backend::fuse::FusionService;
use situ_backend::store::{SituationQuery, SituationStore, StoreError};
use situ_backend::wire::{serve_loop, spawn_evaluator, ServerState};
use situ_core::{EpochTime, GeoArea, GeoPoint, ValidityInterval};

use situ_cli::config::AppConfig;
use situ_cli::pipeline::{build_spec, run_pipeline};
use situ_cli::CliError;

#[derive(Parser)]
#[command(name = "situ", version, about = "Situation fusion platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end-to-end in process and report the counts.
    Run {
        #[arg(long)]
        scenario: u8,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the fusion wire protocol until interrupted.
    Serve {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
    },
    /// Print stored situations matching the filters, one JSON line each.
    Query {
        #[arg(long)]
        log: PathBuf,
        /// Match every stored situation.
        #[arg(long)]
        all: bool,
        /// Window intersection range start (epoch ms).
        #[arg(long)]
        from: Option<u64>,
        /// Window intersection range end (epoch ms, exclusive).
        #[arg(long)]
        to: Option<u64>,
        /// Area filter as the JSON area object.
        #[arg(long)]
        area: Option<String>,
        /// Key filters; repeatable.
        #[arg(long = "key")]
        keys: Vec<String>,
    },
    /// Export the stress map of an evaluated store log.
    Stressmap {
        #[arg(long)]
        log: PathBuf,
        /// Bounding box as LAT1,LON1,LAT2,LON2 (degrees).
        #[arg(long)]
        bbox: String,
        /// Cell edge length in meters.
        #[arg(long, default_value_t = 100.0)]
        cell: f64,
        /// Output format: csv or geojson.
        #[arg(long)]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
}

static SHUTDOWN: AtomicBool = AtomicBool::new(false);

extern "C" fn on_signal(_sig: libc::c_int) {
    SHUTDOWN.store(true, Ordering::SeqCst);
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            scenario,
            seed,
            config,
            out,
        } => {
            let config = AppConfig::load(config.as_deref())?;
            let report = run_pipeline(scenario, seed, &config, out.as_deref())?;
            print!("{}", report.render_text());
            Ok(())
        }
        Command::Serve {
            listen,
            config,
            log,
        } => cmd_serve(&listen, config.as_deref(), &log),
        Command::Query {
            log,
            all,
            from,
            to,
            area,
            keys,
        } => cmd_query(&log, all, from, to, area.as_deref(), &keys),
        Command::Stressmap {
            log,
            bbox,
            cell,
            format,
            out,
        } => cmd_stressmap(&log, &bbox, cell, &format, &out),
    }
}

fn cmd_serve(
    listen: &str,
    config: Option<&std::path::Path>,
    log: &std::path::Path,
) -> Result<(), CliError> {
    let config = AppConfig::load(config)?;
    let dict = config.dictionary()?;
    let spec = build_spec(1, &config)?;

    let listener = TcpListener::bind(listen).map_err(|e| CliError::Bind(e.to_string()))?;
    let (store, warnings) =
        SituationStore::open(log).map_err(|e| CliError::Output(e.to_string()))?;
    for w in warnings {
        eprintln!("store log line {}: {}", w.line, w.message);
    }

    let fusion = FusionService::new(
        dict,
        spec.monitored_areas.clone(),
        Some(spec.bounding.clone()),
        config.fusion,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let mut state = ServerState::new(fusion, store).with_auth(config.serve.auth.clone());
    state.assemble_every_batches = config.serve.assemble_every_batches;
    state.leap_offset_ms = config.serve.leap_offset_ms;
    let state = Arc::new(Mutex::new(state));

    let scorer =
        BaselineScorer::new(config.scoring).map_err(|e| CliError::Config(e.to_string()))?;
    let (evaluator, eval_sub) =
        spawn_evaluator(state.clone(), scorer).map_err(|e| CliError::Internal(e.to_string()))?;

    unsafe {
        libc::signal(
            libc::SIGINT,
            on_signal as extern "C" fn(libc::c_int) as libc::sighandler_t,
        );
        libc::signal(
            libc::SIGTERM,
            on_signal as extern "C" fn(libc::c_int) as libc::sighandler_t,
        );
    }
    eprintln!("listening on {listen}, log at {}", log.display());

    let shutdown = Arc::new(AtomicBool::new(false));
    let waiter = {
        let shutdown = shutdown.clone();
        std::thread::spawn(move || {
            while !SHUTDOWN.load(Ordering::SeqCst) {
                std::thread::sleep(std::time::Duration::from_millis(50));
            }
            shutdown.store(true, Ordering::SeqCst);
        })
    };
    let served = serve_loop(listener, state.clone(), shutdown);
    SHUTDOWN.store(true, Ordering::SeqCst);
    let _ = waiter.join();
    served.map_err(|e| CliError::Internal(e.to_string()))?;

    {
        let mut st = state.lock().expect("service lock");
        st.store.cancel(eval_sub);
    }
    evaluator
        .join()
        .map_err(|_| CliError::Internal("evaluator panicked".into()))?;
    let mut st = state.lock().expect("service lock");
    st.store
        .flush()
        .map_err(|e| CliError::Output(e.to_string()))?;
    eprintln!("shut down cleanly");
    Ok(())
}

fn strict_replay(log: &std::path::Path) -> Result<SituationStore, CliError> {
    let (store, warnings) = SituationStore::replay(log).map_err(|e| match e {
        StoreError::CorruptLog { line, message } => CliError::CorruptLog { line, message },
        other => CliError::Output(other.to_string()),
    })?;
    // Command-line reads treat a truncated tail as corruption; the line
    // number tells the operator where the log was cut.
    if let Some(w) = warnings.first() {
        return Err(CliError::CorruptLog {
            line: w.line,
            message: w.message.clone(),
        });
    }
    Ok(store)
}

fn cmd_query(
    log: &std::path::Path,
    all: bool,
    from: Option<u64>,
    to: Option<u64>,
    area: Option<&str>,
    keys: &[String],
) -> Result<(), CliError> {
    let store = strict_replay(log)?;
    let mut query = if all {
        SituationQuery::all()
    } else {
        SituationQuery::default()
    };
    if from.is_some() || to.is_some() {
        let from = from.unwrap_or(0);
        let to = to.unwrap_or(u64::MAX);
        if to < from {
            return Err(CliError::Config("--to must be >= --from".into()));
        }
        query.interval = Some(ValidityInterval::new(
            EpochTime::from_millis(from),
            to - from,
        ));
    }
    if let Some(area_json) = area {
        let area: GeoArea = serde_json::from_str(area_json)
            .map_err(|e| CliError::Config(format!("--area: {e}")))?;
        query.area = Some(area);
    }
    if !keys.is_empty() {
        let parsed: Result<std::collections::BTreeSet<_>, _> = keys
            .iter()
            .map(|k| situ_core::DataKey::new(k.clone()))
            .collect();
        query.keys = Some(parsed.map_err(|e| CliError::Config(e.to_string()))?);
    }

    let results = store.query(&query).map_err(|e| match e {
        StoreError::EmptyFilter => {
            CliError::Config("no filter given; pass --all or a filter flag".into())
        }
        other => CliError::Internal(other.to_string()),
    })?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for stored in results {
        let line = serde_json::to_string(&stored).map_err(|e| CliError::Internal(e.to_string()))?;
        match writeln!(out, "{line}") {
            Ok(()) => {}
            // A closed pipe (e.g. `| head`) is not an error.
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            Err(e) => return Err(CliError::Output(e.to_string())),
        }
    }
    Ok(())
}

fn cmd_stressmap(
    log: &std::path::Path,
    bbox: &str,
    cell: f64,
    format: &str,
    out: &std::path::Path,
) -> Result<(), CliError> {
    let store = strict_replay(log)?;

    let parts: Vec<f64> = bbox
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--bbox: {e}")))?;
    if parts.len() != 4 {
        return Err(CliError::Config("--bbox needs LAT1,LON1,LAT2,LON2".into()));
    }
    let corner_a =
        GeoPoint::from_degrees(parts[0], parts[1]).map_err(|e| CliError::Config(e.to_string()))?;
    let corner_b =
        GeoPoint::from_degrees(parts[2], parts[3]).map_err(|e| CliError::Config(e.to_string()))?;

    let evaluated: Vec<(GeoPoint, f64)> = store
        .query(&SituationQuery {
            with_evaluation: true,
            interval: Some(ValidityInterval::new(EpochTime::ZERO, u64::MAX)),
            ..Default::default()
        })
        .map_err(|e| CliError::Internal(e.to_string()))?
        .iter()
        .filter_map(|s| {
            s.latest_evaluation()
                .map(|(_, e)| (s.situation.area.center(), e.score))
        })
        .collect();
    let evaluated_count = evaluated.len();

    let grid = situ_backend::evaluate::build_stress_map(evaluated, corner_a, corner_b, cell)
        .map_err(|e| CliError::Output(e.to_string()))?;

    let mut file = std::io::BufWriter::new(
        std::fs::File::create(out).map_err(|e| CliError::Output(e.to_string()))?,
    );
    match format {
        "csv" => grid
            .write_csv(&mut file)
            .map_err(|e| CliError::Output(e.to_string()))?,
        "geojson" => {
            let doc = grid.to_geojson();
            serde_json::to_writer(&mut file, &doc).map_err(|e| CliError::Output(e.to_string()))?;
            file.write_all(b"\n")
                .map_err(|e| CliError::Output(e.to_string()))?;
        }
        other => {
            return Err(CliError::Config(format!(
                "--format must be csv or geojson, got {other}"
            )));
        }
    }
    file.flush().map_err(|e| CliError::Output(e.to_string()))?;

    println!(
        "conservation: cells={} outside={} evaluated={} {}",
        grid.total_count(),
        grid.outside,
        evaluated_count,
        if grid.total_count() + grid.outside == evaluated_count {
            "ok"
        } else {
            "VIOLATED"
        }
    );
    Ok(())
}
