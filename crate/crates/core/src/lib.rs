//! Finite-dimensional higher-order quantum processes.
//!
//! Morphisms of the concrete categories of linear maps, unitaries and
//! channels are dense complex matrices over flat lists of tensor factors
//! ([`tensor`]). On top of them the crate builds
//!
//! * membership tests and samplers for each category ([`category`]),
//! * no-pathing constraints, staircase witnesses and loop-safe contraction
//!   ([`pathing`]),
//! * supermaps given by an internal morphism and their verification
//!   ([`supermap`]),
//! * combs, single-party representable supermaps and the extraction of a
//!   comb from any slot ([`comb`]),
//! * black-box locally-applicable transformations and the counterexamples
//!   that are not slots ([`lat`]),
//! * a polycategorical composition engine that admits only one wire between
//!   any two terms ([`polycat`]),
//! * the quantum switch and its N-party generalization ([`switch`]),
//! * a deterministic fixture corpus ([`fixtures`]).

pub mod category;
pub mod comb;
pub mod error;
pub mod fixtures;
pub mod gates;
pub mod lat;
pub mod pathing;
pub mod polycat;
pub mod rng;
pub mod supermap;
pub mod switch;
pub mod tensor;

pub use category::{CategoryTag, ChoiMatrix};
pub use comb::{apply_comb, comb_to_internal, compose_combs, slot_to_comb, srep_apply, Comb, CombFamily, SrepSupermap};
pub use error::{Error, Result};
pub use lat::Lat;
pub use pathing::{PathConstraint, PathWitness};
pub use polycat::{NetworkSpec, PolyTerm};
pub use supermap::{verify, Arg, HigherObject, InternalSupermap, VerificationReport};
pub use switch::{build_n_switch, build_switch, Control, SwitchFamily};
pub use tensor::{Morphism, Tolerance, WireType, C64};
