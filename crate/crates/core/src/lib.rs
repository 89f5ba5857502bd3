//! Vulnerability detection for C/C++ source based on code gadgets.
//!
//! The pipeline lexes source files, builds a data-dependency graph, slices
//! around library/API key-point calls, assembles and labels code gadgets,
//! symbolizes and embeds them, and classifies them with a bidirectional LSTM.

pub mod calltable;
pub mod clex;
pub mod dataflow;
pub mod fixtures;
pub mod gadget;
pub mod symbolizer;
pub mod linalg;
pub mod vectorizer;
pub mod evalkit;
pub mod blstm;
pub mod pipeline;
pub mod synthetic;
