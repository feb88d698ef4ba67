#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod llm;
pub mod app;
pub mod compiler;
pub mod routing;
pub mod diag;
pub mod eval;
pub mod geometry;
pub mod net;
pub mod rag;
pub mod xmlutil;
