//! Server-side convergence monitor and freeze decision.
//!
//! Tracks the aggregated encoder between consecutive rounds: the drift is
//! the per-layer mean absolute weight difference averaged uniformly over
//! layers, and the relative percentage difference rho is the normalized
//! change between consecutive drift values. Once rho stays below the
//! threshold `tau` for `patience` consecutive rounds, the encoder is frozen
//! federation-wide; the latch never reverts.
//!
//! Rounds 1 and 2 never count toward patience: the drift needs two
//! snapshots and rho needs two drifts, so the first rho exists at round 3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorBuffer;

/// One row of the server's drift log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub round: u32,
    /// Mean absolute inter-round encoder weight difference.
    pub drift: f64,
    /// Relative percentage difference; `None` until two drifts exist.
    pub rho_percent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeState {
    pub tau: f64,
    pub patience: u32,
    pub consecutive_hits: u32,
    pub frozen: bool,
    pub freeze_round: Option<u32>,
}

/// Aggregated encoder weights at one round, in topology order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSnapshot {
    pub round: u32,
    pub layers: Vec<TensorBuffer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    FreezeNow,
}

/// Freezing policy selected for a federation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FreezeMode {
    Off,
    Adaptive { tau: f64, patience: u32 },
}

/// Mean absolute difference between corresponding encoder layers of two
/// consecutive snapshots: each layer's element-wise mean is computed first,
/// then layers are averaged uniformly regardless of tensor size.
pub fn encoder_drift(current: &EncoderSnapshot, previous: &EncoderSnapshot) -> Result<f64> {
    if current.layers.is_empty() {
        return Err(Error::Empty("encoder snapshot has no layers"));
    }
    if current.round != previous.round + 1 {
        return Err(Error::NonMonotoneRound {
            previous: previous.round,
            got: current.round,
        });
    }
    if current.layers.len() != previous.layers.len() {
        return Err(Error::SnapshotShape {
            index: current.layers.len().min(previous.layers.len()),
        });
    }
    let mut acc = 0.0;
    for (index, (cur, prev)) in current.layers.iter().zip(&previous.layers).enumerate() {
        if !cur.same_shape(prev) {
            return Err(Error::SnapshotShape { index });
        }
        let mut layer_sum = 0.0;
        for (a, b) in cur.data().iter().zip(prev.data()) {
            layer_sum += (a - b).abs();
        }
        acc += layer_sum / cur.len() as f64;
    }
    Ok(acc / current.layers.len() as f64)
}

/// Relative percentage difference between consecutive drift values,
/// `|d_cur - d_prev| / d_cur * 100`. A zero current drift means perfect
/// stasis and maps to 0 rather than dividing by zero.
pub fn rho_percent(drift_current: f64, drift_previous: f64) -> f64 {
    if drift_current == 0.0 {
        return 0.0;
    }
    (drift_current - drift_previous).abs() / drift_current * 100.0
}

/// Sample-size-weighted mean of per-client encoder weights; mirrors exactly
/// what the federation aggregator produces for the encoder partition.
pub fn encoder_mean_weights(
    client_encoders: &[Vec<TensorBuffer>],
    client_sizes: &[u64],
    round: u32,
) -> Result<EncoderSnapshot> {
    if client_encoders.is_empty() {
        return Err(Error::Empty("no client encoders to average"));
    }
    if client_encoders.len() != client_sizes.len() {
        return Err(Error::Contract(
            "client encoder and size lists differ in length".into(),
        ));
    }
    let total: u64 = client_sizes.iter().sum();
    if client_sizes.iter().any(|&n| n == 0) || total == 0 {
        return Err(Error::Contract("client sample counts must be positive".into()));
    }
    let n_layers = client_encoders[0].len();
    let mut layers: Vec<TensorBuffer> = client_encoders[0]
        .iter()
        .map(|t| TensorBuffer::zeros(t.shape()))
        .collect();
    for (enc, &size) in client_encoders.iter().zip(client_sizes) {
        if enc.len() != n_layers {
            return Err(Error::SnapshotShape { index: n_layers });
        }
        let weight = size as f64 / total as f64;
        for (index, (acc, t)) in layers.iter_mut().zip(enc).enumerate() {
            acc.add_scaled(t, weight)
                .map_err(|_| Error::SnapshotShape { index })?;
        }
    }
    Ok(EncoderSnapshot { round, layers })
}

/// Latching patience monitor fed one aggregated encoder snapshot per round.
#[derive(Debug, Clone)]
pub struct FreezeController {
    state: FreezeState,
    history: Vec<DriftRecord>,
    last_snapshot: Option<EncoderSnapshot>,
}

impl FreezeController {
    pub fn new(tau: f64, patience: u32) -> Result<Self> {
        if !(tau > 0.0 && tau < 100.0) {
            return Err(Error::Config(format!("tau must be in (0, 100), got {tau}")));
        }
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(Self {
            state: FreezeState {
                tau,
                patience,
                consecutive_hits: 0,
                frozen: false,
                freeze_round: None,
            },
            history: Vec::new(),
            last_snapshot: None,
        })
    }

    pub fn state(&self) -> &FreezeState {
        &self.state
    }

    pub fn history(&self) -> &[DriftRecord] {
        &self.history
    }

    pub fn is_frozen(&self) -> bool {
        self.state.frozen
    }

    /// Last computed drift record, if the controller has seen two snapshots.
    pub fn last_record(&self) -> Option<&DriftRecord> {
        self.history.last()
    }

    /// Feeds the post-aggregation encoder of a new round.
    ///
    /// Returns [`Decision::FreezeNow`] exactly once, on the round where the
    /// hit counter reaches the patience. Calling after the freeze fired is a
    /// contract violation, as is a non-consecutive round number.
    pub fn observe_round(&mut self, snapshot: EncoderSnapshot) -> Result<Decision> {
        if self.state.frozen {
            return Err(Error::Contract(
                "observe_round called on an already-frozen controller".into(),
            ));
        }
        let decision = match &self.last_snapshot {
            None => Decision::Continue,
            Some(previous) => {
                let drift = encoder_drift(&snapshot, previous)?;
                let rho = self
                    .history
                    .last()
                    .map(|prev| rho_percent(drift, prev.drift));
                self.history.push(DriftRecord {
                    round: snapshot.round,
                    drift,
                    rho_percent: rho,
                });
                match rho {
                    Some(r) if r < self.state.tau => {
                        self.state.consecutive_hits += 1;
                        if self.state.consecutive_hits == self.state.patience {
                            self.state.frozen = true;
                            self.state.freeze_round = Some(snapshot.round);
                            Decision::FreezeNow
                        } else {
                            Decision::Continue
                        }
                    }
                    Some(_) => {
                        self.state.consecutive_hits = 0;
                        Decision::Continue
                    }
                    None => Decision::Continue,
                }
            }
        };
        self.last_snapshot = Some(snapshot);
        Ok(decision)
    }
}
