//! The fusion wire protocol and TCP service loop.
//!
//! Line-delimited UTF-8 JSON over a stream transport, one message per line:
//!
//! - `{"t":"reg","agg":…,"kind":…,"keys":[…],"auth":…}` answered with
//!   `{"t":"reg_ok","session":…}` or `{"t":"reg_err","unknown":[…]}`. An
//!   optional `base` field selects the sender's time base
//!   (`unix_ms`/`its_2004_ms`/`gps_ms`, default unix).
//! - `{"t":"batch","session":…,"records":[…]}` answered with
//!   `{"t":"batch_ack","verdicts":[…]}`, one verdict code per record in
//!   batch order.
//! - Anything else, including unparseable lines, is answered with
//!   `{"t":"err","code":"bad-kind"}` and the connection stays open.
//!
//! Authentication is a deployment toggle: when the service is configured
//! with a shared token, registrations must present it in `auth`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use situ_core::{DataKey, DataRecord, EpochTime};

use crate::aggregate::AggregatorKind;
use crate::evaluate::{BaselineScorer, HandoverDirection, SituationScorer};
use crate::fuse::{FusionError, FusionService, RegistrationError, RegistrationRequest};
use crate::prepare::{TimeBase, TimeBaseKind};
use crate::store::{SituationQuery, SituationStore, StoreError};

#[derive(Debug, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
enum ClientMessage {
    Reg {
        agg: String,
        kind: AggregatorKind,
        keys: Vec<String>,
        #[serde(default)]
        auth: Option<String>,
        #[serde(default)]
        base: Option<TimeBaseKind>,
    },
    Batch {
        session: String,
        records: Vec<serde_json::Value>,
    },
}

#[derive(Debug, Serialize, PartialEq)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum ServerMessage {
    RegOk {
        session: String,
    },
    RegErr {
        unknown: Vec<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        code: Option<&'static str>,
    },
    BatchAck {
        verdicts: Vec<&'static str>,
    },
    Err {
        code: &'static str,
    },
}

/// Shared state behind the service lock: the fusion pipeline and the store.
pub struct ServerState {
    pub fusion: FusionService,
    pub store: SituationStore,
    pub auth_token: Option<String>,
    pub leap_offset_ms: u64,
    /// Assemble closed windows every N batches; 0 assembles only at shutdown.
    pub assemble_every_batches: usize,
    batches_since_assemble: usize,
}

impl ServerState {
    pub fn new(fusion: FusionService, store: SituationStore) -> Self {
        ServerState {
            fusion,
            store,
            auth_token: None,
            leap_offset_ms: 0,
            assemble_every_batches: 0,
            batches_since_assemble: 0,
        }
    }

    pub fn with_auth(mut self, token: Option<String>) -> Self {
        self.auth_token = token;
        self
    }

    /// Assemble everything ready before `up_to` and commit the situations.
    pub fn assemble_and_commit(
        &mut self,
        up_to: EpochTime,
        now: EpochTime,
    ) -> Result<usize, CommitError> {
        let output = self.fusion.assemble_up_to(up_to)?;
        let count = output.situations.len();
        for situation in output.situations {
            let stored_at = if situation.window.end() > EpochTime::ZERO {
                situation.window.end()
            } else {
                now
            };
            self.store.put_situation(situation, stored_at)?;
        }
        Ok(count)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CommitError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Dispatch one protocol line against the service state.
pub fn handle_line(state: &Mutex<ServerState>, line: &str) -> ServerMessage {
    let msg: ClientMessage = match serde_json::from_str(line) {
        Ok(m) => m,
        Err(_) => return ServerMessage::Err { code: "bad-kind" },
    };
    let mut state = state.lock().expect("service lock poisoned");
    match msg {
        ClientMessage::Reg {
            agg,
            kind,
            keys,
            auth,
            base,
        } => {
            if let Some(expected) = &state.auth_token {
                if auth.as_deref() != Some(expected.as_str()) {
                    return ServerMessage::RegErr {
                        unknown: Vec::new(),
                        code: Some("bad-auth"),
                    };
                }
            }
            // Keys that do not even parse cannot resolve in the dictionary;
            // the rejection lists them together with unresolved ones.
            let mut unknown: Vec<String> = Vec::new();
            let mut parsed = std::collections::BTreeSet::new();
            for k in &keys {
                match DataKey::new(k.clone()) {
                    Ok(key) => {
                        if state.fusion.dictionary().contains(&key) {
                            parsed.insert(key);
                        } else {
                            unknown.push(k.clone());
                        }
                    }
                    Err(_) => unknown.push(k.clone()),
                }
            }
            if !unknown.is_empty() {
                unknown.sort();
                return ServerMessage::RegErr {
                    unknown,
                    code: Some("unknown-keys"),
                };
            }
            let time_base = TimeBase::new(base.unwrap_or_default(), state.leap_offset_ms);
            let req = RegistrationRequest {
                aggregator_id: agg,
                kind,
                keys: parsed,
                time_base,
            };
            match state.fusion.register(req) {
                Ok(session) => ServerMessage::RegOk {
                    session: session.session_id,
                },
                Err(RegistrationError::EmptyKeySet) => ServerMessage::RegErr {
                    unknown: Vec::new(),
                    code: Some("empty-key-set"),
                },
                Err(RegistrationError::UnknownKeys(mut unknown)) => {
                    unknown.sort();
                    ServerMessage::RegErr {
                        unknown,
                        code: Some("unknown-keys"),
                    }
                }
            }
        }
        ClientMessage::Batch { session, records } => {
            let batch: Vec<Result<DataRecord, ()>> = records
                .into_iter()
                .map(|v| serde_json::from_value::<DataRecord>(v).map_err(|_| ()))
                .collect();
            match state.fusion.ingest_mixed(&session, batch) {
                Ok(verdicts) => {
                    let codes = verdicts.iter().map(|v| v.code()).collect();
                    state.batches_since_assemble += 1;
                    if state.assemble_every_batches > 0
                        && state.batches_since_assemble >= state.assemble_every_batches
                    {
                        state.batches_since_assemble = 0;
                        let window = state.fusion.config().window_ms;
                        let watermark = EpochTime::from_millis(
                            state
                                .fusion
                                .max_seen_start()
                                .millis()
                                .saturating_sub(2 * window),
                        );
                        if let Err(e) = state.assemble_and_commit(watermark, wall_clock()) {
                            eprintln!("assembly failed: {e}");
                        }
                    }
                    ServerMessage::BatchAck { verdicts: codes }
                }
                Err(FusionError::UnknownSession(_)) => ServerMessage::Err {
                    code: "unknown-session",
                },
                Err(_) => ServerMessage::Err { code: "internal" },
            }
        }
    }
}

fn wall_clock() -> EpochTime {
    let ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    EpochTime::from_millis(ms)
}

/// Serve connections until `shutdown` is set, then assemble and commit
/// whatever is still buffered and flush the log.
pub fn serve_loop(
    listener: TcpListener,
    state: Arc<Mutex<ServerState>>,
    shutdown: Arc<AtomicBool>,
) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    let mut handles = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _addr)) => {
                let state = state.clone();
                let shutdown = shutdown.clone();
                handles.push(std::thread::spawn(move || {
                    let _ = handle_connection(stream, &state, &shutdown);
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(e),
        }
    }
    for h in handles {
        let _ = h.join();
    }
    let mut state = state.lock().expect("service lock poisoned");
    if let Err(e) = state.assemble_and_commit(EpochTime::MAX, wall_clock()) {
        eprintln!("final assembly failed: {e}");
    }
    if let Err(e) = state.store.flush() {
        eprintln!("log flush failed: {e}");
    }
    Ok(())
}

fn handle_connection(
    stream: TcpStream,
    state: &Mutex<ServerState>,
    shutdown: &AtomicBool,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_millis(100)))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    // read_until keeps partially read bytes in the buffer across timeouts,
    // so a line split over several reads survives the shutdown polling.
    let mut line: Vec<u8> = Vec::new();
    loop {
        if shutdown.load(Ordering::SeqCst) {
            return Ok(());
        }
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => return Ok(()), // peer closed
            Ok(_) if !line.ends_with(b"\n") => continue,
            Ok(_) => {
                let text = String::from_utf8_lossy(&line);
                let trimmed = text.trim_end_matches(['\r', '\n']);
                if !trimmed.is_empty() {
                    let reply = handle_line(state, trimmed);
                    let encoded = serde_json::to_string(&reply)?;
                    writer.write_all(encoded.as_bytes())?;
                    writer.write_all(b"\n")?;
                    writer.flush()?;
                }
                line.clear();
            }
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Spawn the evaluator worker: it consumes the store's put-commit
/// subscription, scores each situation and attaches the result.
pub fn spawn_evaluator(
    state: Arc<Mutex<ServerState>>,
    scorer: BaselineScorer,
) -> std::io::Result<(std::thread::JoinHandle<()>, u64)> {
    let (handle_rx, sub_id) = {
        let mut st = state.lock().expect("service lock poisoned");
        let sub = st
            .store
            .subscribe(SituationQuery::all())
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let id = sub.id();
        (sub, id)
    };
    let dict = {
        let st = state.lock().expect("service lock poisoned");
        st.fusion.dictionary().clone()
    };
    let handle = std::thread::spawn(move || {
        while let Some(delivered) = handle_rx.recv() {
            let result = scorer.evaluate(
                &delivered.situation,
                &dict,
                HandoverDirection::VehicleToDriver,
            );
            let mut st = state.lock().expect("service lock poisoned");
            if let Err(e) = st
                .store
                .attach_evaluation(&delivered.situation.situation_id, result)
            {
                eprintln!("evaluation attach failed: {e}");
            }
        }
    });
    Ok((handle, sub_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuse::FusionConfig;
    use situ_core::dictionary::{default_dictionary, keys};
    use situ_core::{GeoArea, GeoPoint};

    fn state() -> Mutex<ServerState> {
        let area = GeoArea::circle(GeoPoint::from_degrees(49.0, 7.0).unwrap(), 90.0).unwrap();
        let fusion = FusionService::new(
            default_dictionary(),
            vec![area],
            None,
            FusionConfig::default(),
        )
        .unwrap();
        Mutex::new(ServerState::new(fusion, SituationStore::in_memory()))
    }

    fn encode(msg: &ServerMessage) -> String {
        serde_json::to_string(msg).unwrap()
    }

    #[test]
    fn registration_round_trip() {
        let state = state();
        let reply = handle_line(
            &state,
            &format!(
                "{{\"t\":\"reg\",\"agg\":\"dda-ego\",\"kind\":\"DDA\",\"keys\":[\"{}\"],\"auth\":null}}",
                keys::DRIVER_HEART_RATE
            ),
        );
        assert_eq!(
            encode(&reply),
            "{\"t\":\"reg_ok\",\"session\":\"sess-0001\"}"
        );
    }

    #[test]
    fn unknown_keys_listed_exactly() {
        let state = state();
        let reply = handle_line(
            &state,
            "{\"t\":\"reg\",\"agg\":\"dda\",\"kind\":\"DDA\",\
             \"keys\":[\"driver.mood\",\"driver.heart_rate_bpm\"],\"auth\":null}",
        );
        match reply {
            ServerMessage::RegErr { unknown, .. } => {
                assert_eq!(unknown, vec!["driver.mood".to_owned()]);
            }
            other => panic!("expected reg_err, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_and_unresolved_keys_are_listed_together() {
        let state = state();
        let reply = handle_line(
            &state,
            "{\"t\":\"reg\",\"agg\":\"dda\",\"kind\":\"DDA\",\
             \"keys\":[\"Driver.MOOD\",\"driver.zen\",\"driver.heart_rate_bpm\"],\"auth\":null}",
        );
        match reply {
            ServerMessage::RegErr { unknown, .. } => {
                assert_eq!(
                    unknown,
                    vec!["Driver.MOOD".to_owned(), "driver.zen".to_owned()]
                );
            }
            other => panic!("expected reg_err, got {other:?}"),
        }
    }

    #[test]
    fn empty_key_set_rejected() {
        let state = state();
        let reply = handle_line(
            &state,
            "{\"t\":\"reg\",\"agg\":\"dda\",\"kind\":\"DDA\",\"keys\":[],\"auth\":null}",
        );
        assert_eq!(
            reply,
            ServerMessage::RegErr {
                unknown: Vec::new(),
                code: Some("empty-key-set")
            }
        );
    }

    #[test]
    fn malformed_line_answers_bad_kind() {
        let state = state();
        for line in ["not json", "{\"t\":\"nope\"}", "{\"t\":\"reg\"}"] {
            let reply = handle_line(&state, line);
            assert_eq!(reply, ServerMessage::Err { code: "bad-kind" }, "{line}");
        }
    }

    #[test]
    fn batch_verdicts_preserve_order_and_length() {
        let state = state();
        handle_line(
            &state,
            &format!(
                "{{\"t\":\"reg\",\"agg\":\"dda\",\"kind\":\"DDA\",\"keys\":[\"{}\"],\"auth\":null}}",
                keys::DRIVER_HEART_RATE
            ),
        );
        let good = "{\"key\":\"driver.heart_rate_bpm\",\"value\":80.0,\"gen_ms\":100,\
                    \"valid_from_ms\":100,\"valid_dur_ms\":100,\"lat_e7\":490000000,\
                    \"lon_e7\":70000000,\"source\":\"dda\",\"quality\":\"measured\"}";
        let foreign = "{\"key\":\"env.noise_db\",\"value\":50.0,\"gen_ms\":100,\
                       \"valid_from_ms\":100,\"valid_dur_ms\":100,\"lat_e7\":490000000,\
                       \"lon_e7\":70000000,\"source\":\"eda\",\"quality\":\"measured\"}";
        let line = format!(
            "{{\"t\":\"batch\",\"session\":\"sess-0001\",\"records\":[{good},{foreign},17,{good}]}}"
        );
        let reply = handle_line(&state, &line);
        assert_eq!(
            reply,
            ServerMessage::BatchAck {
                verdicts: vec!["ok", "key-not-in-session", "malformed-record", "ok"]
            }
        );
    }

    #[test]
    fn batch_on_unknown_session() {
        let state = state();
        let reply = handle_line(
            &state,
            "{\"t\":\"batch\",\"session\":\"sess-9999\",\"records\":[]}",
        );
        assert_eq!(
            reply,
            ServerMessage::Err {
                code: "unknown-session"
            }
        );
    }

    #[test]
    fn auth_token_is_enforced_when_configured() {
        let state = state();
        state.lock().unwrap().auth_token = Some("hunter2".into());
        let no_auth = handle_line(
            &state,
            &format!(
                "{{\"t\":\"reg\",\"agg\":\"dda\",\"kind\":\"DDA\",\"keys\":[\"{}\"],\"auth\":\"wrong\"}}",
                keys::DRIVER_HEART_RATE
            ),
        );
        assert_eq!(
            no_auth,
            ServerMessage::RegErr {
                unknown: Vec::new(),
                code: Some("bad-auth")
            }
        );
        let with_auth = handle_line(
            &state,
            &format!(
                "{{\"t\":\"reg\",\"agg\":\"dda\",\"kind\":\"DDA\",\"keys\":[\"{}\"],\"auth\":\"hunter2\"}}",
                keys::DRIVER_HEART_RATE
            ),
        );
        assert!(matches!(with_auth, ServerMessage::RegOk { .. }));
    }
}
