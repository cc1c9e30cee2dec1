pub mod benchmark;
pub mod evaluator;
pub mod gdsii;
pub mod geometry;
pub mod llm;
pub mod orchestrator;
pub mod sandbox;
