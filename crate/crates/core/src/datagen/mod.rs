//! Training and validation data: benchmark systems, RK4 discretization,
//! excitation signals, noise injection, dataset splitting and CSV persistence.

pub mod csvio;
pub mod dataset;
pub mod msd;
pub mod signals;
pub mod system;

pub use csvio::{export_csv, import_csv, parse_csv, write_csv};
pub use dataset::{
    build_nonminimal_state, nonminimal_dataset, simulate_nl, split_dataset, Dataset, NoiseSpec,
    Provenance, Record,
};
pub use msd::{msd_chain, MsdChain, MsdParams};
pub use signals::{chirp, chirp_series, multisine, snr_to_variance, ChirpSegment};
pub use system::{rk4_discretize, ContinuousSystem, Dims, DiscreteSystem, FnSystem, Rk4};
