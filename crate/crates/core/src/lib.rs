//! Category-based access control: policy model, rule language, a
//! forward-chaining evaluator and an independent reference semantics.

pub mod authz;
pub mod config;
pub mod engine;
pub mod graph;
pub mod hierarchy;
pub mod model;
pub mod random;
pub mod rulelang;
