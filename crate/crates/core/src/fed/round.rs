//! The round loop: broadcast, parallel local training, aggregation, and the
//! freeze decision.
//!
//! Freeze latency follows the notify-then-apply protocol: a freeze decided
//! after aggregation at round R takes effect for local training at round
//! R+1. The frozen encoder is dropped from client uplink starting at round
//! R+1 and from server downlink after the first post-freeze broadcast
//! (round R+2 onward), since every client already holds it.

use crate::data::{generate_silo, preprocess, PairedSample, SiloConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fed::{
    aggregate_fedavg, local_train, ClientRound, ClientState, FederationReport, RoundRecord,
    ServerState, TrainConfig,
};
use crate::freeze::{Decision, EncoderSnapshot, FreezeController, FreezeMode};
use crate::metrics::CostModel;
use crate::nn::{build_model, Group, GroupSel, ModelConfig, ParamSet};

fn broadcast(server: &ServerState, clients: &mut [ClientState], round: u32) -> u64 {
    let decoder_only = matches!(server.freeze_round(), Some(fr) if round > fr + 1);
    let sel = if decoder_only { GroupSel::Decoder } else { GroupSel::All };
    for client in clients.iter_mut() {
        if decoder_only {
            for layer in server.global_params.layers() {
                if layer.group == Group::Decoder {
                    *client.params.get_mut(&layer.id).unwrap() = layer.clone();
                }
            }
        } else {
            client.params = server.global_params.clone();
        }
    }
    server.global_params.encoded_size(sel)
}

/// Executes one full round and returns its audit record.
pub fn run_round(
    server: &mut ServerState,
    clients: &mut [ClientState],
    model: &ModelConfig,
    cfg: &TrainConfig,
    cost: &CostModel,
    exec: Execution,
) -> Result<RoundRecord> {
    if server.round >= cfg.rounds {
        return Err(Error::Contract(format!(
            "round {} already completed the configured {} rounds",
            server.round, cfg.rounds
        )));
    }
    if clients.is_empty() {
        return Err(Error::Empty("no clients"));
    }
    let round = server.round + 1;
    let frozen_aggregation = server.frozen();

    let bytes_downlink = broadcast(server, clients, round);
    let anchor = server.global_params.clone();

    // clients may train concurrently; results come back in client-id order
    let results: Vec<Result<(f64, crate::metrics::LedgerEntry)>> = exec.map_mut(clients, |c| {
        local_train(c, &anchor, model, cfg, round, cost)
    });
    let mut client_rounds = Vec::with_capacity(results.len());
    for (client, result) in clients.iter().zip(results) {
        let (train_loss, mut ledger) = result?;
        ledger.bytes_downlink = bytes_downlink;
        ledger.bytes_uplink = client.params.encoded_size(if client.freeze_mask.encoder {
            GroupSel::Decoder
        } else {
            GroupSel::All
        });
        client_rounds.push(ClientRound {
            client_id: client.client_id,
            train_loss,
            ledger,
        });
    }

    let refs: Vec<&ParamSet> = clients.iter().map(|c| &c.params).collect();
    let counts: Vec<u64> = clients.iter().map(|c| c.sample_count as u64).collect();
    server.global_params = aggregate_fedavg(&refs, &counts, frozen_aggregation)?;
    server.round = round;

    let mut froze_this_round = false;
    let (drift, rho_percent, consecutive_hits, frozen) = match &mut server.controller {
        Some(controller) => {
            if !controller.is_frozen() {
                let snapshot = EncoderSnapshot {
                    round,
                    layers: server.global_params.encoder_weights(),
                };
                if controller.observe_round(snapshot)? == Decision::FreezeNow {
                    froze_this_round = true;
                    for client in clients.iter_mut() {
                        client.freeze_mask.encoder = true;
                    }
                }
            }
            let record = controller
                .last_record()
                .filter(|r| r.round == round)
                .copied();
            (
                record.map(|r| r.drift),
                record.and_then(|r| r.rho_percent),
                controller.state().consecutive_hits,
                controller.is_frozen(),
            )
        }
        None => (None, None, 0, false),
    };

    Ok(RoundRecord {
        round,
        clients: client_rounds,
        drift,
        rho_percent,
        consecutive_hits,
        frozen,
        froze_this_round,
    })
}

/// Generates and preprocesses the silos, then runs the full federation.
pub fn run_federation(
    cfg: &TrainConfig,
    freezing: FreezeMode,
    silos: &[SiloConfig],
    model: &ModelConfig,
    cost: &CostModel,
    exec: Execution,
) -> Result<FederationReport> {
    let datasets: Vec<Vec<PairedSample>> = exec
        .map(silos, |silo| -> Result<Vec<PairedSample>> {
            let raw = generate_silo(silo)?;
            raw.iter()
                .map(|s| preprocess(s, (model.input_shape.1, model.input_shape.2)))
                .collect()
        })
        .into_iter()
        .collect::<Result<_>>()?;
    run_federation_prepared(cfg, freezing, datasets, model, cost, exec)
}

/// Runs the federation on already-preprocessed client datasets.
pub fn run_federation_prepared(
    cfg: &TrainConfig,
    freezing: FreezeMode,
    datasets: Vec<Vec<PairedSample>>,
    model: &ModelConfig,
    cost: &CostModel,
    exec: Execution,
) -> Result<FederationReport> {
    cfg.validate()?;
    model.validate()?;
    if model.input_shape.0 != 1 || model.output_channels() != 1 {
        return Err(Error::Config(
            "the federation pipeline drives single-channel image-to-image models".into(),
        ));
    }
    if datasets.len() != cfg.num_clients {
        return Err(Error::Config(format!(
            "num_clients is {} but {} client datasets were supplied",
            cfg.num_clients,
            datasets.len()
        )));
    }

    let global = build_model(model)?;
    let controller = match freezing {
        FreezeMode::Off => None,
        FreezeMode::Adaptive { tau, patience } => Some(FreezeController::new(tau, patience)?),
    };
    let mut server = ServerState::new(global.clone(), controller);
    let mut clients: Vec<ClientState> = datasets
        .into_iter()
        .enumerate()
        .map(|(id, data)| ClientState::new(id, global.clone(), cfg.learning_rate, data))
        .collect();

    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        rounds.push(run_round(
            &mut server,
            &mut clients,
            model,
            cfg,
            cost,
            exec,
        )?);
    }

    Ok(FederationReport {
        seed: cfg.seed,
        freeze_round: server.freeze_round(),
        rounds,
        final_params: server.global_params,
    })
}
