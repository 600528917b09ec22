//! Simulator and design-space explorer for recommendation inference inside
//! an SSD: embedding lookups spread over flash channels, a pipelined MLP
//! engine, and a kernel-size search that trades FPGA resources against
//! pipeline balance.

pub mod error;
pub mod ev_engine;
pub mod kernel_search;
pub mod mlp_engine;
pub mod recmodel;
pub mod sim;
pub mod storage;
pub mod time;

pub use error::{Error, Result};
pub use time::SimTime;
