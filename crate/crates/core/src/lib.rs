pub mod config;
pub mod deconvolve;
pub mod error;
pub mod gate;
pub mod image;
pub mod io;
pub mod mask;
pub mod normalize;
pub mod orient;
pub mod pipeline;
pub mod quantify;
pub mod segment;
pub mod stats;
pub mod synth;
