//! Bit-flip-aware key/value store over a simulated NVM data zone.
//!
//! Values are placed into the free bucket whose current content is most
//! similar to them: a k-means model clusters bucket contents, a dynamic
//! address pool keeps one free-list per cluster, and every write is
//! differential, so the flips a put costs are the Hamming distance between
//! the value and the bucket it lands in. Five in-place baseline encodings
//! are provided for comparison, along with workload generators, a phased
//! driver and CSV/JSON reporting.

pub mod bitvec;
pub mod encoders;
pub mod error;
pub mod ml;
pub mod nvm;
pub mod report;
pub mod store;
pub mod workload;

pub use bitvec::BitBuffer;
pub use error::{Error, Result};
