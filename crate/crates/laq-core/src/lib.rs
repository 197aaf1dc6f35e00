//! Communication-efficient distributed gradient descent with lazily
//! aggregated quantized gradients.
//!
//! The crate simulates a parameter server and a set of workers that solve
//! `min_θ Σ_m f_m(θ)` by gradient descent while compressing the uplink
//! traffic in two complementary ways:
//!
//! * **Quantization** — each worker transmits a b-bit fixed-point encoding of
//!   its *gradient innovation* (the difference between the fresh local
//!   gradient and the quantization it last shipped), see [`codec`].
//! * **Lazy aggregation** — a worker skips the upload entirely whenever the
//!   innovation is small relative to recent parameter movement, see
//!   [`criterion`]; the server then reuses the stale gradient it already
//!   holds.
//!
//! [`engine`] drives the whole loop for six algorithm variants (`gd`, `qgd`,
//! `lag`, `laq`, `sgd`, `slaq`), [`losses`] and [`data`] supply the model
//! oracles and datasets, and [`metrics`] records telemetry (loss, uploads,
//! bits, Lyapunov values) and provides the convergence/communication
//! analyses. Every run is deterministic under its seed.

pub mod codec;
pub mod criterion;
pub mod data;
pub mod engine;
pub mod losses;
pub mod metrics;
