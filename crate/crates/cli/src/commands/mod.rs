pub mod diversity;
pub mod eval;
pub mod flops;
pub mod infer;
pub mod selftest;
pub mod synth;
