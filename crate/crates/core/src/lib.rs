pub mod link;
pub mod noma;
pub mod power;
pub mod psd;
pub mod beamform;
pub mod driver;
pub mod oracle;
pub mod harness;
