//! Checks shared by the per-area test targets and the acceptance runner.
#![allow(dead_code)]

pub mod dp;
pub mod embed;
pub mod fuzz;
pub mod grad;
