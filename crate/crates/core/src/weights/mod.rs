//! Weight stores, the MFDW file format and seeded initialization.

mod init;
pub mod mfdw;
mod store;

pub use init::{init_random, kaiming_bound, InitScheme, InitSpec};
pub use mfdw::{load, save, MfdwError};
pub use store::{WeightStore, WeightTensor};
