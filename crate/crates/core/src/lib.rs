pub mod beamspace;
pub mod channel;
pub mod error;
pub mod linalg;
pub mod mi;
pub mod precoding;
pub mod opgpa;
pub mod interference;
pub mod grouping;
pub mod harness;
