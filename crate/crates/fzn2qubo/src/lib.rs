//! fzn2qubo compiles finite-domain integer FlatZinc models into equivalent,
//! normalized QUBO problems, keeping a substitution forest so QUBO solutions
//! decode back to the original variables. Bundled exhaustive and annealing
//! solvers make the equivalence checkable end to end.

pub mod binarize;
pub mod canonicalize;
pub mod deinequalify;
pub mod format;
pub mod fzn;
pub mod ir;
pub mod pipeline;
pub mod propagate;
pub mod qubofy;
pub mod rat;
pub mod solve;
