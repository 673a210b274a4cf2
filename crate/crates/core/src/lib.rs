//! Tiling engine: tile supersets, candidate graphs, a graph network that
//! scores candidate placements, and solvers that turn scores into tilings.

pub mod geom;
pub mod spatial;
pub mod tileset;
pub mod graph;
pub mod loss;
pub mod nn;
pub mod solve;
pub mod train;
pub mod io;
