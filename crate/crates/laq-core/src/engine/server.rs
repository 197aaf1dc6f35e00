//! Server side of the loop: holds θ, the running aggregate ∇, and every
//! worker's last committed quantization.

use crate::codec::{decode_innovation, WireMessage};

use super::EngineError;

/// One worker-to-server transmission. Quantized modes ship the bit-exact
/// wire message; exact modes (gd, lag, sgd) ship the raw innovation.
#[derive(Debug, Clone)]
pub enum Upload {
    Quantized(WireMessage),
    Exact {
        worker_id: u16,
        iteration: u32,
        delta: Vec<f64>,
    },
}

impl Upload {
    pub fn worker_id(&self) -> u16 {
        match self {
            Upload::Quantized(msg) => msg.worker_id,
            Upload::Exact { worker_id, .. } => *worker_id,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerState {
    /// Current parameters θ^k.
    pub params: Vec<f64>,
    /// Running aggregate ∇^{k−1} = Σ_m stored_m (up to rounding).
    pub aggregate: Vec<f64>,
    /// Per-worker stored quantizations Q_m(θ̂_m^{k−1}).
    pub stored: Vec<Vec<f64>>,
    pub iteration: usize,
}

impl ServerState {
    pub fn new(workers: usize, initial_params: Vec<f64>) -> Self {
        let dim = initial_params.len();
        ServerState {
            params: initial_params,
            aggregate: vec![0.0; dim],
            stored: vec![vec![0.0; dim]; workers],
            iteration: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }
}

/// Applies one round of messages: for every upload, decode δQ_m and refine
/// both the stored copy and the aggregate; then step `θ ← θ − α∇`.
///
/// Messages must arrive in ascending worker order with at most one per
/// worker, which pins the floating-point reduction order.
pub fn server_apply(
    server: &mut ServerState,
    messages: &[Upload],
    alpha: f64,
) -> Result<(), EngineError> {
    let mut last_id: Option<u16> = None;
    for message in messages {
        let id = message.worker_id();
        if let Some(prev) = last_id {
            if id <= prev {
                return Err(EngineError::DuplicateWorker {
                    worker_id: id,
                    iteration: server.iteration,
                });
            }
        }
        last_id = Some(id);
        if id as usize >= server.stored.len() {
            return Err(EngineError::UnknownWorker { worker_id: id });
        }

        let delta = match message {
            Upload::Quantized(msg) => {
                // Run the real byte path so the simulated channel is exactly
                // the wire format.
                let decoded = WireMessage::decode(&msg.encode())?;
                decode_innovation(&decoded.to_innovation()?)
            }
            Upload::Exact { delta, .. } => delta.clone(),
        };
        if delta.len() != server.dim() {
            return Err(EngineError::DimensionMismatch {
                expected: server.dim(),
                got: delta.len(),
            });
        }
        let stored = &mut server.stored[id as usize];
        for i in 0..delta.len() {
            stored[i] += delta[i];
            server.aggregate[i] += delta[i];
        }
    }

    for (theta, g) in server.params.iter_mut().zip(&server.aggregate) {
        *theta -= alpha * g;
    }
    server.iteration += 1;
    Ok(())
}
