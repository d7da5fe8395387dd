//! # postspec
//!
//! Specialisation of distributional word vectors with lexical constraints,
//! extended to the whole vocabulary.
//!
//! A constraint-driven post-processor (ATTRACT-REPEL, or retrofitting) only
//! moves the vectors of words that occur in synonym/antonym pairs. This crate
//! learns a global function from the original to the specialised vectors of
//! those *seen* words, linear or a deep feed-forward network, and applies it
//! to every *unseen* word, yielding a fully specialised space.
//!
//! The main entry points are:
//!
//! - [`embedding`]: loading, saving and normalising vector spaces;
//! - [`constraints`]: attract/repel pair sets, vocabulary filtering, the
//!   seen/unseen split and the hold-out filter;
//! - [`attract_repel`]: ATTRACT-REPEL fine-tuning and a retrofitting baseline;
//! - [`mapping`]: the linear and deep mappings, their objectives and training;
//! - [`pipeline`]: the full post-specialisation run;
//! - [`evaluation`]: Spearman's rho on word-similarity datasets and depth
//!   sweeps;
//! - [`cli`]: the `postspec` command-line front end.
//!
//! ```
//! use ndarray::array;
//! use postspec::constraints::ConstraintSet;
//! use postspec::attract_repel::{ar_specialise, ArConfig};
//! use postspec::embedding::EmbeddingSpace;
//!
//! let space = EmbeddingSpace::new(
//!     vec!["rich".into(), "wealthy".into(), "poor".into(), "table".into()],
//!     array![[1.0, 0.2], [0.1, 1.0], [0.9, 0.3], [0.5, 0.5]],
//! )?;
//! let (cs, _) = ConstraintSet::from_pairs([("rich", "wealthy")], [("rich", "poor")]);
//! let out = ar_specialise(&space, &cs, &ArConfig::default())?;
//! assert_eq!(out.space.vector("table"), space.vector("table"));
//! # Ok::<(), postspec::Error>(())
//! ```

pub mod attract_repel;
pub mod cli;
pub mod constraints;
pub mod embedding;
pub mod evaluation;
pub mod io;
pub mod mapping;
pub mod optim;
pub mod pipeline;
pub mod rng;

mod error;

pub use error::{Error, Result};
