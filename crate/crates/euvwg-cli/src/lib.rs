pub mod config;
pub mod export;
pub mod presets;
pub mod report;
pub mod run;
pub mod validate;
