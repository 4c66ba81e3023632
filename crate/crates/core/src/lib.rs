//! Market simulation and from-scratch reinforcement learning agents.
//!
//! The crate is organised bottom-up: [`market`] holds the closed-form
//! economic model, [`env`] wraps it as an episodic environment, [`nn`]
//! provides the small networks and optimizer, [`algos`] the learners and
//! baselines, [`stats`] the evaluation statistics, and [`harness`] the
//! train/eval/replicate/compare workflows driven by the CLI.

pub mod algos;
pub mod env;
pub mod harness;
pub mod market;
pub mod nn;
pub mod randomization;
pub mod seeding;
pub mod stats;
