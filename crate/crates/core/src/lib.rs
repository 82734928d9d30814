pub mod chunkstore;
pub mod cli;
pub mod hash;
pub mod mphf;
pub mod netsim;
pub mod proof;
pub mod protocol;
