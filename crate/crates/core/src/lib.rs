//! Modeling and post-processing for a source-independent quantum random
//! number generator built on a passive-basis polarization receiver.
//!
//! The crate covers the whole chain from photons to tested random bits:
//!
//! * [`model`]: analytic click probabilities of the four threshold detectors
//!   under weak coherent illumination, and the counts they imply;
//! * [`montecarlo`]: a pulse-level simulator of the same receiver that emits
//!   click tallies and raw Z-basis bits;
//! * [`security`]: finite-key bound on the phase error and the number of
//!   extractable bits;
//! * [`extractor`]: Toeplitz hashing of raw bits into final bits;
//! * [`stattests`]: a battery of statistical randomness tests;
//! * [`config`], [`io`] and [`pipeline`]: run configuration, file formats and
//!   the end-to-end orchestration used by the `siqrng` command.
//!
//! ```
//! use siqrng::model::{expected_tally, SystemModel};
//!
//! let tally = expected_tally(&SystemModel::reference(36.58))?;
//! assert!((tally.n_h_s / 9.29e8 - 1.0).abs() < 0.03);
//! # Ok::<(), siqrng::Error>(())
//! ```

pub mod bits;
pub mod config;
mod error;
pub mod extractor;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod pipeline;
pub mod security;
pub mod stattests;

pub use bits::BitBuffer;
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/security.md")]
    mod security {}
    #[doc = include_str!("../../../book/src/montecarlo.md")]
    mod montecarlo {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/stattests.md")]
    mod stattests {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
