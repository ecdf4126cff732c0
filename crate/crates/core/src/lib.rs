//! Multi-user blind, secure and private information retrieval over prime
//! fields, with exact privacy audits.

pub mod error;
pub mod field;
pub mod harness;
pub mod privacy;
pub mod protocol;
pub mod rng;
pub mod scheme;
pub mod tensor;
pub mod transcript;

pub use error::{Error, Result};
pub use field::{FieldElement, FieldSpec};
pub use protocol::{retrieve, MessageDatabase, MessageStore, RetrievalOptions, Transcript};
pub use rng::SeedSchedule;
pub use scheme::{CandidateParams, RateReport, SchemeParams};
pub use tensor::{FieldMatrix, FieldVector, Tensor};
