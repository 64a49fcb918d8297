pub mod backtest;
pub mod regress;
pub mod report;
pub mod score;
pub mod synth;
pub mod validate;
