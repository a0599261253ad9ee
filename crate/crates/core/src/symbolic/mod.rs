//! Cartesian genetic programming over the operator library.

mod evolve;
mod genome;
mod operators;

pub use evolve::{
    evolve, evolve_activation_mask, mu_lambda, threshold_recovery_fitness, threshold_recovery_shape, EvolutionConfig, EvolutionResult,
    MaskResult, RECOVERY_GRID,
};
pub use genome::{
    decode_genome, run_program, structural_complexity, Address, CgpGenome, GenomeShape, Link, NodeGene, Program, ProgramNode, RunOutput,
    DEFAULT_LOOP_CAP,
};
pub use operators::{eval_operator, Arity, Category, Datum, Evaluated, Operator, OperatorContext, OperatorDef, FAULT_SENTINEL};
