pub mod avg_ham;
pub mod dfs;
pub mod dynamics;
pub mod linalg;
pub mod par;
pub mod qubit_ops;
pub mod sequences;
