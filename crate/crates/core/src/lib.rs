//! Discrete-event simulator comparing a microservice deployment against a
//! monolith under a travel-booking workload.

pub mod builtins;
pub mod cli;
pub mod control;
pub mod platform;
pub mod resilience;
pub mod rng;
pub mod runner;
pub mod saga;
pub mod scenario;
pub mod sim;
pub mod telemetry;
pub mod traffic;
pub mod world;
