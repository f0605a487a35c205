//! Trajectory planning with signed-distance obstacle constraints for a
//! surface vessel.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bound;
pub mod csg;
pub mod dual;
pub mod error;
pub mod formulations;
pub mod geom;
pub mod harness;
pub mod nlp;
pub mod scenario;
pub mod sdist;
pub mod svg;
pub mod vessel;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use geom::{ConvexPolygon, Ellipse, HalfSpace, Point2, Pose2, Vec2};
