//! RISC-V test-case mutation and differential execution.

pub mod config;
pub mod corpus;
pub mod difftest;
pub mod isa;
pub mod mutation;
pub mod similarity;
