//! Numerical laboratory for sectional expansion of singular flows on
//! cylinder and solenoid-suspension models.

pub mod compound_linalg;
pub mod ergodic_stats;
pub mod field_library;
pub mod flow_engine;
pub mod suspension;
