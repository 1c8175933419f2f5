//! Core library for gaze-assisted review of recorded exam sessions.
//!
//! Per-frame gaze predictions become points on a 2D gaze plot; region
//! queries on the plot map back to highlighted frame ranges; proctor and
//! model labelings are binary frame sequences whose positive intervals feed
//! a majority-vote reference and the human / ML / hybrid comparison.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod labeler;
pub mod pipeline;
pub mod region;
pub mod session;
pub mod sim;
pub mod store;
pub mod study;

pub use error::{Error, FieldError, Result};
