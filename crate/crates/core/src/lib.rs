//! Static detection of Android code obfuscation.
//!
//! The pipeline runs APK bytes through [`dex`] (container and DEX parsing into
//! a [`dex::SymbolTable`]), [`features`] (the 37 percentages), [`models`] (an
//! MLP detector plus random-forest tool and technique banks) and [`detector`]
//! (the decision rules). [`corpus`] scans whole app collections and builds
//! reports; [`synth`] generates labelled fixtures; [`cli`] wires it all to the
//! `obfscan` binary.

pub mod cli;
pub mod corpus;
pub mod detector;
pub mod dex;
pub mod features;
pub mod labels;
pub mod models;
pub mod synth;
