//! Plan producers: Sinkhorn projection, Hungarian assignment, Frank–Wolfe
//! and exhaustive permutation search.

mod exhaustive;
mod frank_wolfe;
mod hungarian;
mod sinkhorn;

pub use exhaustive::{exhaustive_min, MAX_EXHAUSTIVE_SIZE};
pub use frank_wolfe::{frank_wolfe_qap, round_plan, FwConfig, FwResult};
pub use hungarian::{assignment_cost, hungarian};
pub use sinkhorn::{sinkhorn, sinkhorn_backward, sinkhorn_backward_log, sinkhorn_log, SinkhornConfig};
