//! C ABI for `conpack`.
//!
//! Objects cross the boundary as opaque handles created by `cp_*_new` /
//! `cp_*_load` and released by the matching `cp_*_free`. Every fallible call
//! returns a [`CpStatus`]; on failure, [`cp_last_error_message`] describes
//! the error on the calling thread. Strings returned by the library are owned
//! by the caller and must be released with [`cp_string_free`].

mod handles;
mod status;

pub use handles::*;
pub use status::*;
