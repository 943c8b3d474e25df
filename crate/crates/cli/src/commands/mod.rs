pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod synth;
pub mod train;
