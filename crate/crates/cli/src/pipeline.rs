//! The in-process end-to-end pipeline behind `situ run`: simulation,
//! aggregation, fusion, storage and evaluation in one deterministic,
//! single-threaded pass.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use situ_backend::aggregate::{Aggregator, AggregatorKind, DEFAULT_PREAGG_WINDOW_MS};
use situ_backend::evaluate::{BaselineScorer, HandoverDirection, SituationScorer};
use situ_backend::fuse::{FusionService, RegistrationRequest};
use situ_backend::prepare::TimeBase;
use situ_backend::store::{SituationQuery, SituationStore};
use situ_core::{validate_record, EpochTime};
use situ_sim::{
    run_scenario, scenario_spec_with_channels, Destination, ScenarioSpec, SimError, SimOutput,
};

use crate::config::AppConfig;
use crate::CliError;

/// Counters and summary of one scenario run. The conservation identities
/// are asserted during the run, not merely reported.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunReport {
    pub scenario: u8,
    pub seed: u64,
    pub emitted: usize,
    pub dropped: usize,
    pub delivered: usize,
    pub station_deliveries: usize,
    pub agg_rejected: usize,
    pub ingested: usize,
    pub prepared: usize,
    pub situations: usize,
    pub situation_records: usize,
    pub unassigned: usize,
    pub evaluated: usize,
    pub mean_suitability: f64,
}

impl RunReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario: {}", self.scenario);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "emitted: {}", self.emitted);
        let _ = writeln!(out, "dropped: {}", self.dropped);
        let _ = writeln!(out, "delivered: {}", self.delivered);
        let _ = writeln!(out, "station_deliveries: {}", self.station_deliveries);
        let _ = writeln!(out, "agg_rejected: {}", self.agg_rejected);
        let _ = writeln!(out, "ingested: {}", self.ingested);
        let _ = writeln!(out, "prepared: {}", self.prepared);
        let _ = writeln!(out, "situations: {}", self.situations);
        let _ = writeln!(out, "situation_records: {}", self.situation_records);
        let _ = writeln!(out, "unassigned: {}", self.unassigned);
        let _ = writeln!(out, "evaluated: {}", self.evaluated);
        let _ = writeln!(out, "mean_suitability: {:.4}", self.mean_suitability);
        let _ = writeln!(out, "conservation: ok");
        out
    }
}

fn map_sim_err(e: SimError) -> CliError {
    CliError::Scenario(e.to_string())
}

/// Build the scenario: from the configured spec file when present, else the
/// built-in scenario with the configured tuning and channels.
pub fn build_spec(scenario: u8, config: &AppConfig) -> Result<ScenarioSpec, CliError> {
    if let Some(path) = &config.scenario_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        return ScenarioSpec::from_toml_str(&text).map_err(map_sim_err);
    }
    scenario_spec_with_channels(scenario, &config.scenario, config.channels).map_err(map_sim_err)
}

/// Run the whole chain and optionally persist the artifacts into `out_dir`:
/// `report.txt`, `store.log`, `records.jsonl`, `drops.jsonl`.
pub fn run_pipeline(
    scenario: u8,
    seed: u64,
    config: &AppConfig,
    out_dir: Option<&Path>,
) -> Result<RunReport, CliError> {
    let dict = config.dictionary()?;
    let spec = build_spec(scenario, config)?;
    let sim: SimOutput = run_scenario(&spec, seed).map_err(map_sim_err)?;

    // Collection: route deliveries into the four aggregator roles.
    let mut tda = Aggregator::backend("tda-1", AggregatorKind::Tda, spec.bounding.clone(), &dict)
        .expect("TDA is a backend kind");
    let mut eda = Aggregator::backend("eda-1", AggregatorKind::Eda, spec.bounding.clone(), &dict)
        .expect("EDA is a backend kind");
    let mut vda = Aggregator::onboard(
        "vda-ego",
        AggregatorKind::Vda,
        DEFAULT_PREAGG_WINDOW_MS,
        &dict,
    )
    .expect("VDA is an on-node kind");
    let mut dda = Aggregator::onboard(
        "dda-ego",
        AggregatorKind::Dda,
        DEFAULT_PREAGG_WINDOW_MS,
        &dict,
    )
    .expect("DDA is an on-node kind");

    let mut station_deliveries = 0usize;
    let mut agg_rejected = 0usize;
    for delivery in &sim.deliveries {
        let target = match (&delivery.destination, delivery.record.key.group()) {
            (Destination::Station(_), _) => {
                station_deliveries += 1;
                continue;
            }
            (Destination::Backend, "traffic") => &mut tda,
            (Destination::Backend, "env") => &mut eda,
            (Destination::OnBoard(_), "vehicle") => &mut vda,
            (Destination::OnBoard(_), "driver") => &mut dda,
            _ => {
                agg_rejected += 1;
                continue;
            }
        };
        if validate_record(&delivery.record, &dict).is_err()
            || target.accept_record(delivery.record.clone()).is_err()
        {
            agg_rejected += 1;
        }
    }

    // Fusion: register the four roles and ingest their flush batches.
    let mut fusion = FusionService::new(
        dict.clone(),
        sim.monitored_areas.clone(),
        Some(sim.bounding.clone()),
        config.fusion,
    )
    .map_err(|e| CliError::Scenario(e.to_string()))?;

    let mut ingested = 0usize;
    for agg in [&mut tda, &mut eda, &mut vda, &mut dda] {
        let batch = agg.flush();
        let session = fusion
            .register(RegistrationRequest {
                aggregator_id: batch.aggregator_id.clone(),
                kind: batch.kind,
                keys: agg.registered_keys().clone(),
                time_base: TimeBase::unix(),
            })
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let verdicts = fusion
            .ingest(&session.session_id, batch.records)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        ingested += verdicts.iter().filter(|v| v.is_ok()).count();
    }

    let assembly = fusion
        .assemble_up_to(EpochTime::MAX)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    // Storage and evaluation, driven through the subscription machinery.
    let mut store = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Output(e.to_string()))?;
            SituationStore::create(dir.join("store.log"))
                .map_err(|e| CliError::Output(e.to_string()))?
        }
        None => SituationStore::in_memory(),
    };
    let subscription = store
        .subscribe(SituationQuery::all())
        .expect("the all-query is a filter");
    let scorer =
        BaselineScorer::new(config.scoring).map_err(|e| CliError::Config(e.to_string()))?;

    let situations = assembly.situations.len();
    let situation_records: usize = assembly.situations.iter().map(|s| s.record_count()).sum();
    let mut evaluated = 0usize;
    let mut score_sum = 0.0f64;
    for situation in assembly.situations {
        let stored_at = situation.window.end();
        store
            .put_situation(situation, stored_at)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        for delivered in subscription.drain() {
            let result = scorer.evaluate(
                &delivered.situation,
                &dict,
                HandoverDirection::VehicleToDriver,
            );
            score_sum += result.score;
            evaluated += 1;
            store
                .attach_evaluation(&delivered.situation.situation_id, result)
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    store.cancel(subscription.id());
    store.flush().map_err(|e| CliError::Output(e.to_string()))?;

    let delivered = sim.deliveries.len();
    assert_eq!(delivered, sim.emitted - sim.drops.len());
    assert_eq!(
        situation_records + assembly.unassigned,
        assembly.prepared_count,
        "record conservation across assembly"
    );
    assert_eq!(evaluated, situations, "every situation gets evaluated");

    let report = RunReport {
        scenario,
        seed,
        emitted: sim.emitted,
        dropped: sim.drops.len(),
        delivered,
        station_deliveries,
        agg_rejected,
        ingested,
        prepared: assembly.prepared_count,
        situations,
        situation_records,
        unassigned: assembly.unassigned,
        evaluated,
        mean_suitability: if evaluated > 0 {
            score_sum / evaluated as f64
        } else {
            0.0
        },
    };

    if let Some(dir) = out_dir {
        write_artifacts(dir, &report, &sim).map_err(|e| CliError::Output(e.to_string()))?;
    }
    Ok(report)
}

fn write_artifacts(dir: &Path, report: &RunReport, sim: &SimOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.txt"), report.render_text())?;

    let mut records = std::io::BufWriter::new(std::fs::File::create(dir.join("records.jsonl"))?);
    for d in &sim.deliveries {
        writeln!(records, "{}", d.record.to_json_line())?;
    }
    records.flush()?;

    let mut drops = std::io::BufWriter::new(std::fs::File::create(dir.join("drops.jsonl"))?);
    for d in &sim.drops {
        writeln!(drops, "{}", serde_json::to_string(d)?)?;
    }
    drops.flush()?;
    Ok(())
}
