pub mod cells;
pub mod decompose;
pub mod dim;
pub mod error;
pub mod hensel;
pub mod kgroup;
pub mod measure;
pub mod oracle;
pub mod padic;
pub mod par;
pub mod parse;
pub mod poly;
pub(crate) mod ser;

pub use error::{Error, Result};
