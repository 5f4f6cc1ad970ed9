//! File formats, configuration, the external fine-model protocol and the
//! command-line front end.

pub mod cli;
pub mod config;
pub mod history;
pub mod msh;
pub mod protocol;
pub mod vtk;
