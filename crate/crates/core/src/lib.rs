//! Fusion toolkit for event-camera streams and global-shutter RGB frames.
//!
//! The crate covers the offline half of a DVS + RGB capture rig: decoding
//! the event stream, pairing exposure triggers, slicing events per frame,
//! accumulating and rendering event frames, aligning the two views with a
//! homography, checking that alignment with Canny + ZNCC, rate/bandwidth
//! accounting and lens arithmetic. [`synth`] produces ground-truth scenes
//! for all of the above.

pub mod accumulate;
pub mod event_io;
pub mod image_io;
pub mod sync;
pub mod geometry;
pub mod verify;
pub mod optics;
pub mod rate;
pub mod synth;
pub mod pipeline;
