//! Configuration, sweep runners and CSV output behind the `map-replica`
//! command-line tool.

pub mod config;
pub mod run;
pub mod table;

pub use config::RunConfig;
pub use table::{Cell, Table};
