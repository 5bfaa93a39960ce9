//! Operational surface over `goldset-core`: a data-directory layout with a
//! labeling queue, the `goldset` command line, and an HTTP API.

pub mod api;
pub mod cli;
pub mod error;
pub mod ops;
pub mod sim;
pub mod workspace;

pub use error::{ErrorKind, ServiceError};
pub use workspace::{Batch, Clock, LabelTask, TaskStatus, Workspace};
