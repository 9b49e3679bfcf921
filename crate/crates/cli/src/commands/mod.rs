pub mod enhance;
pub mod eval;
pub mod project;
pub mod simulate;
pub mod train;
