//! Files in and out: WAV audio, corpus indexing, CSV / JSON artifacts with
//! provenance, and the binary containers used for cached tables and model
//! checkpoints.

pub mod cache;
pub mod checkpoint;
pub mod container;
pub mod corpus;
pub mod csv_out;
pub mod provenance;
pub mod wav;

pub use corpus::{CorpusEntry, CorpusIndex};
pub use provenance::Provenance;
pub use wav::{read_wav, write_wav};
