pub mod config;
pub mod experiments;
pub mod oracle_check;
pub mod results;
