//! Real-time speech-to-viseme lip sync for 2D characters.
//!
//! Streaming 16 kHz audio is limited, turned into 28-dim MFCC/energy features at
//! 100 Hz, classified by a small LSTM that looks a few frames ahead, and filtered
//! down to a clean 24 fps sequence of 12 mouth shapes.

pub mod audio;
pub mod augment;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod filter;
pub mod model;
pub mod pipeline;
pub mod service;
pub mod viseme;

pub use error::{Error, Result};
