//! Staged trees, interventional staged trees, and the polynomial ideals that
//! describe their models, together with the DAG machinery that feeds them.

pub mod graph;
pub mod polynomial;
pub mod staged_tree;
pub mod interventional;
pub mod ideals;
pub mod verify;
pub mod cli_io;
