//! Trace-driven simulator of a page-mapped SSD flash translation layer with
//! pluggable garbage-collection victim selection.

pub mod cli;
pub mod flash;
pub mod ftl;
pub mod heap;
pub mod metrics;
pub mod score;
pub mod strategy;
pub mod workload;

pub use flash::{BlockId, BlockMeta, Device, DeviceGeometry, Lpa, Ppa, Tick};
pub use ftl::{simulate, simulate_spec, Ftl, FtlConfig, SimError, VictimRecord};
pub use metrics::{export, SimReport};
pub use score::Score;
pub use strategy::{StrategySpec, VictimSelector};
pub use workload::{HotnessMap, WorkloadSpec, WriteRequest};
