//! Scenario runner for the qvl numerical laboratory.

pub mod generate;
pub mod random;
pub mod report;
pub mod run;
pub mod scenario;
pub mod suites;
