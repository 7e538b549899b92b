pub mod bench;
pub mod bipartite;
pub mod cli;
pub mod clp;
pub mod cluster;
pub mod eap;
pub mod error;
pub mod gap;
pub mod hypergraph;
pub mod instance;
pub mod knapsack;
pub mod lp;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod rat;
pub mod rounding;
