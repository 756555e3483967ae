//! Planning for soft MITL tasks over weighted transition systems.

pub mod energy;
pub mod mitl;
pub mod planner;
pub mod product;
pub mod sim;
pub mod tba;
pub mod wts;
