//! Experiment harness for generating and scoring AI-teacher responses in
//! student-teacher dialogues.
//!
//! - [`corpus`]: dialogue datasets, statistics and seeded sampling
//! - [`promptkit`]: instruction templates, exemplar selection, prompt assembly
//! - [`backends`]: completion / embedding / ranker clients, retries, mocks
//! - [`runner`]: batch generation and the on-disk run store
//! - [`metrics`]: BERTScore-style matching, ranker ensembles, reports

pub mod backends;
pub mod corpus;
pub mod metrics;
pub mod parallel;
pub mod promptkit;
pub mod runner;
