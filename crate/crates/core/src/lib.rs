//! Forecasting agents over prediction-market questions.

pub mod domain;
pub mod hierarchy;
pub mod http;
pub mod jsonl;
pub mod llm;
pub mod market;
pub mod metrics;
pub mod pipeline;
pub mod react;
pub mod tools;
