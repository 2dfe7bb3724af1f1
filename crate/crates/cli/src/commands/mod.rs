pub mod docred;
pub mod evaluate;
pub mod explain;
pub mod synth;
pub mod train;
