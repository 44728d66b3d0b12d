pub mod cli;
pub mod dynamics;
pub mod field;
pub mod geometry;
pub mod potential;
pub mod scenario;
pub mod verify;
