pub mod anchor;
pub mod gen;
pub mod process;
pub mod replay;
pub mod report;
pub mod simulate;
pub mod train;
