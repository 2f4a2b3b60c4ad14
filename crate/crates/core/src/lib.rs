//! Core building blocks for entity reconciliation: the entity data model and
//! CSV loader, text normalization and blocking keys, the inverted-index
//! candidate retriever, per-field similarity scoring, and global scoring
//! models with match/no-match decision rules.

pub mod datamodel;
pub mod fieldscore;
pub mod globalscore;
pub mod index;
pub mod textproc;
