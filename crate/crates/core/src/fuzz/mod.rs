//! Mutational fuzzing of seed gadgets by random instruction insertion.

mod mutate;
mod record;
mod tables;

pub use mutate::{
    mutate_function, record_rng, sample_for_entry, sample_insertion, InsertionOptions, MutationError, MutationParams,
    Mutator, DEFAULT_DIVERSITY, DEFAULT_IMMEDIATES,
};
pub use record::{Compiler, GadgetRecord, Insertion, Lineage, OptLevel, Status, StatusError};
pub use tables::{
    InsertionTables, InstructionEntry, InstructionTable, RegisterTable, Signature, Slot, TableError, Width,
    DEFAULT_TABLE,
};
