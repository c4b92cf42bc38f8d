//! Second-level factor primitives and their entropy-weighted synthesis into
//! first-level scores.

mod primitives;
mod synthesis;

pub use primitives::*;
pub use synthesis::*;
