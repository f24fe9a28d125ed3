//! File formats, training-corpus assembly and thread configuration around
//! [`epgd_core`].

pub mod corpus;
pub mod io;
pub mod prior_file;
pub mod threads;

pub use io::{load_image, save_image, ImageIoError};
pub use prior_file::{load_prior, save_prior, PriorFileError};
