//! Exact and statistical checks of the structural claims: memory demand structures,
//! the partition lattice, transition invariance, optimality preservation and return
//! equivalence.

pub mod invariance;
pub mod lattice;
pub mod mds;
pub mod optimality;
pub mod returns;
pub mod suite;

pub use invariance::{check_invariance_hdp, check_invariance_linproc, relation_partition, InvarianceReport, Relation};
pub use lattice::{partition_join, partition_meet, Partition};
pub use mds::{enumerate_mds, event_conditional, full_conditional, is_mds, MdsEnumeration, MdsMode, MdsQuery, Measure};
pub use optimality::{
    check_delay_optimality, check_has_optimality, history_optimal, markov_optimal, optimal_policy_set, MarkovOptimal,
    OptimalPolicySet, OptimalityReport, PolicyTree, StartOptimal,
};
pub use returns::{check_return_equivalence, ReturnReport, RETURN_TOLERANCE};
pub use suite::{run_suite, PropertyReport, Suite, SuiteOptions, SuiteReport};
