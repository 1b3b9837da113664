//! Spectral loci of polynomial oscillators.

pub mod error;
pub mod locus;
pub mod oscillator;
pub mod polyalg;
pub mod qes;
pub mod shooting;
pub mod spectrum;

pub use error::{Error, Result};
pub use oscillator::{Family, Problem};
pub use polyalg::CPoly;
pub use shooting::ShootOptions;

// The book's code blocks run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/shooting.md")]
    mod shooting {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/qes.md")]
    mod qes {}
    #[doc = include_str!("../../../book/src/loci.md")]
    mod loci {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
