mod evaluate;
mod explain;
mod serve;
mod train;

pub use evaluate::evaluate;
pub use explain::explain;
pub use serve::serve;
pub use train::{synth, train};
