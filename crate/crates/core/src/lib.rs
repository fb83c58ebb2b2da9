//! Tools for SNACS adposition supersense annotation of Mandarin Chinese.
//!
//! - [`hierarchy`]: the 50-label supersense hierarchy and its queries.
//! - [`corpus`]: annotated documents, their TSV format, and validation.
//! - [`targets`]: coverb/localizer target identification.
//! - [`agreement`]: raw agreement and Cohen's kappa.
//! - [`alignment`]: English–Chinese adposition alignment and match rates.
//! - [`stats`]: identity rates, subhierarchy crosstabs, and inventories.

pub mod agreement;
pub mod alignment;
#[allow(clippy::tabs_in_doc_comments)]
pub mod corpus;
pub mod hierarchy;
pub mod stats;
pub mod targets;

pub use corpus::{
    parse_document, validate_document, write_document, AnnotatedDocument, Construal, Label,
    Language, Sentence, TargetAnnotation, TargetKind, Token,
};
pub use hierarchy::{Hierarchy, Subhierarchy, Supersense};
