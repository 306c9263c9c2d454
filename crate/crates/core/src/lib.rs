//! Monte Carlo simulation of mmWave 5G NR initial-access cell search.
//!
//! A base station sweeps SSBs over wide and narrow beams; UEs pick a receive
//! beam, measure, and report their best BS beam when it clears an SNR
//! threshold. The BS learns per-direction detection rates and reallocates the
//! next burst set's SSBs toward productive directions. Exhaustive and
//! iterative (hierarchical) searches are provided for comparison.
//!
//! ```
//! use beamsweep::{run_batch, Deployment, ScenarioConfig};
//!
//! let cfg = ScenarioConfig { n_ues: 5, ..Default::default() };
//! let reports = run_batch(&cfg, Deployment::Ring(50.0), 2, 7, 1).unwrap();
//! assert_eq!(reports.len(), 2);
//! ```

pub mod allocator;
pub mod antenna;
pub mod baselines;
pub mod bs_agent;
pub mod channel;
pub mod cli;
pub mod engine;
pub mod frame_timing;
pub mod metrics;
pub mod scenario;
pub mod ue_agent;
pub mod verify;

pub use allocator::{compute_weights, optimize_allocation, AllocError, SsbAllocation, WeightVector};
pub use antenna::{build_beambook, BeamBook, BeamError, BeamId};
pub use baselines::StrategyKind;
pub use bs_agent::BsError;
pub use channel::ChannelError;
pub use engine::{run_batch, run_trial, Deployment, TrialReport};
pub use frame_timing::PlanError;
pub use metrics::{MetricsError, MetricsTable};
pub use scenario::{load_config, parse_config, AllocationPolicy, ConfigError, ScenarioConfig, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Bs(#[from] BsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl Error {
    /// Process exit code: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
