//! Fact extraction and verification over mixed text and table evidence.
//!
//! The pipeline stages live in their own modules: [`corpus`] parsing,
//! [`linearizer`], [`retrieval`], [`embedding`], [`evidence`] selection,
//! [`graph`] construction, the [`reasoner`] network and [`metrics`].

pub mod corpus;
pub mod embedding;
pub mod evidence;
pub mod graph;
pub mod linearizer;
pub mod metrics;
pub mod reasoner;
pub mod retrieval;
pub mod text;
