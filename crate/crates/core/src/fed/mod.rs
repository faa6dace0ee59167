//! Round-synchronous orchestration of simulated clients and one server:
//! local FedProx training, sample-weighted FedAvg aggregation, freeze
//! broadcast, and per-round bookkeeping.

mod aggregate;
mod eval;
mod round;
mod train;

pub use aggregate::aggregate_fedavg;
pub use eval::{evaluate_cases, CaseMetrics};
pub use round::{run_federation, run_federation_prepared, run_round};
pub use train::local_train;

use serde::{Deserialize, Serialize};

use crate::data::{AugmentSpec, PairedSample};
use crate::error::{Error, Result};
use crate::freeze::FreezeController;
use crate::metrics::LedgerEntry;
use crate::nn::{FreezeMask, OptimizerState, ParamSet};

/// Hyperparameters of one federated run. Defaults follow the reference
/// setup: 25 rounds, 1 local epoch, batch size 8, Adam at 1e-4, proximal
/// coefficient 3, threshold 5%, patience 3, 4 clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub rounds: u32,
    pub local_epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub prox_mu: f64,
    pub tau: f64,
    pub patience: u32,
    pub seed: u64,
    pub num_clients: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 25,
            local_epochs: 1,
            batch_size: 8,
            learning_rate: 1e-4,
            prox_mu: 3.0,
            tau: 5.0,
            patience: 3,
            seed: 42,
            num_clients: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0
            || self.local_epochs == 0
            || self.batch_size == 0
            || self.patience == 0
            || self.num_clients == 0
        {
            return Err(Error::Config(
                "rounds, local_epochs, batch_size, patience, num_clients must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.prox_mu < 0.0 {
            return Err(Error::Config("prox_mu must be non-negative".into()));
        }
        if !(self.tau > 0.0 && self.tau < 100.0) {
            return Err(Error::Config("tau must be in (0, 100)".into()));
        }
        Ok(())
    }
}

/// One simulated centre: its model replica, optimizer state, local data,
/// and the freeze mask it was last notified of.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub params: ParamSet,
    pub opt_state: OptimizerState,
    pub dataset: Vec<PairedSample>,
    pub sample_count: usize,
    pub freeze_mask: FreezeMask,
    pub augment: Option<AugmentSpec>,
}

impl ClientState {
    pub fn new(client_id: usize, params: ParamSet, learning_rate: f64, dataset: Vec<PairedSample>) -> Self {
        let opt_state = OptimizerState::new(&params, learning_rate);
        Self {
            client_id,
            sample_count: dataset.len(),
            params,
            opt_state,
            dataset,
            freeze_mask: FreezeMask::none(),
            augment: None,
        }
    }
}

#[derive(Debug)]
pub struct ServerState {
    pub global_params: ParamSet,
    pub round: u32,
    pub controller: Option<FreezeController>,
}

impl ServerState {
    pub fn new(global_params: ParamSet, controller: Option<FreezeController>) -> Self {
        Self {
            global_params,
            round: 0,
            controller,
        }
    }

    pub fn frozen(&self) -> bool {
        self.controller.as_ref().is_some_and(|c| c.is_frozen())
    }

    pub fn freeze_round(&self) -> Option<u32> {
        self.controller.as_ref().and_then(|c| c.state().freeze_round)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRound {
    pub client_id: usize,
    pub train_loss: f64,
    pub ledger: LedgerEntry,
}

/// Per-round audit row: client results plus the server's drift-log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub clients: Vec<ClientRound>,
    pub drift: Option<f64>,
    pub rho_percent: Option<f64>,
    pub consecutive_hits: u32,
    pub frozen: bool,
    pub froze_this_round: bool,
}

/// Outcome of a full federated run.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationReport {
    pub seed: u64,
    pub freeze_round: Option<u32>,
    pub rounds: Vec<RoundRecord>,
    pub final_params: ParamSet,
}

impl FederationReport {
    /// Zeroes measured wall times, leaving only the deterministic payload;
    /// used wherever reports are compared for reproducibility.
    pub fn zero_wall_times(&mut self) {
        for r in &mut self.rounds {
            for c in &mut r.clients {
                c.ledger.wall_ms = 0.0;
            }
        }
    }
}
