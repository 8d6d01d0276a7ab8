pub mod backend;
pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod plan;
pub mod prompt;
pub mod protocol;
pub mod run;
pub mod sweep;
