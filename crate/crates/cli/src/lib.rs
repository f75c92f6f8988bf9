//! Library surface of the scenario-runner CLI, exposed so integration and
//! acceptance tests can drive full runs in-process.

pub mod runner;
