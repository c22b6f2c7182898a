pub mod adapternet;
pub mod consensus;
pub mod datasetpipe;
pub mod fingerprints;
pub mod metrics;
pub mod molstring;
pub mod par;
pub mod sampler;
