//! Command line and HTTP front end for motion transfer.

pub mod pipeline;
pub mod service;
