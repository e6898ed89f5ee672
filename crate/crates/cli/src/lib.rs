//! Configuration, experiment catalog, runners and artifact writers behind the
//! `fermatlab` binary.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod config;
pub mod experiments;
pub mod output;
pub mod runner;
pub mod svg;
