//! Knowledge editing for multi-hop question answering.
//!
//! Edited facts live in a dynamic knowledge graph ([`kg`]) that resolves
//! secondary edits on insert. Multi-hop questions are split into
//! sub-questions ([`decomposer`]); each sub-question is either answered from
//! the graph, when the entity and relation detectors ([`detectors`]) find a
//! confident match, or handed to a generation backend ([`backends`]). The
//! [`orchestrator`] runs that loop and [`eval`] scores it on MQuAKE-format
//! data.

pub mod backends;
pub mod cli;
pub mod decomposer;
pub mod detectors;
pub mod eval;
pub mod extraction;
pub mod http;
pub mod kg;
pub mod normalize;
pub mod orchestrator;
pub mod relations;
