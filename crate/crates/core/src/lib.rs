pub mod bench;
pub mod lfr;
pub mod linalg;
pub mod sched;
pub mod train;
