//! Ranking items from binary ratings under a latent threshold model.
//!
//! Each item has a latent score, each user a latent threshold, and a user
//! rates an item 1 exactly when the score exceeds the threshold. The
//! [`tbs`] module recovers, from as few ratings as possible, the coarsest
//! ordering of items that all users' answers can justify; [`binseq`] scores
//! such orderings by their mean Spearman footrule; [`theory`] predicts that
//! score; [`harness`] runs seeded experiments and self-checks.

pub mod binseq;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod model;
pub mod tbs;
pub mod theory;

pub use binseq::{msf, BinSequence};
pub use distributions::BetaParams;
pub use error::{Error, Result};
pub use model::{sample_instance, Instance, QueryLedger};
pub use tbs::{run_tbs, Tbs};
