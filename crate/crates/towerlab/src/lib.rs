//! Desk-scale laboratory for nice ordinal notations, stagewise towers of
//! trees, and the fast-growing modulus hierarchy.

pub mod cli;
pub mod formulas;
pub mod hierarchy;
pub mod machine;
pub mod nicety;
pub mod notation;
pub mod tower;
pub mod trees;
