pub mod authority;
pub mod board;
pub mod crypto;
pub mod netsim;
pub mod properties;
pub mod scenarios;
