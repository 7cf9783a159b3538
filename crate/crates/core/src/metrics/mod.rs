//! Efficiency metrics, population statistics and the design-grid oracle.

pub mod formulas;
pub mod rollout;
pub mod stats;
pub mod sweep;

pub use formulas::{cost_of_transport, froude_number, MetricsRecord, MIN_TRANSPORT_VELOCITY};
pub use rollout::{evaluate_episodes, metrics_header, metrics_table, EpisodeMetrics};
pub use stats::{lattice_histogram, population_stats, GenerationStats, Spread};
pub use sweep::{argmax_cell, grid_sweep, RewardSurface, SurfaceCell, SweepGrid, SURFACE_CSV_HEADER};
