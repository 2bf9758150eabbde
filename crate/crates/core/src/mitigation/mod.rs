//! Fairness interventions grouped by where they act on the learning pipeline.

pub mod inproc;
pub mod pre;
pub mod post;
