//! Regularity, observability and controllability checks for networks of
//! descriptor subsystems, with a per-subsystem Kronecker reduction that
//! keeps the rank tests small. The guide lives in `book/`.

mod linalg;

pub mod analysis;
pub mod error;
pub mod kcf;
pub mod model;
pub mod oracle;
pub mod pencil;

pub use error::{Error, Result};
pub use linalg::{block_diag, hstack, to_complex, vstack};
pub use pencil::{Matrix, Pencil, ToleranceConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/pencils.md")]
    mod pencils {}
    #[doc = include_str!("../../../book/src/observability.md")]
    mod observability {}
    #[doc = include_str!("../../../book/src/controllability.md")]
    mod controllability {}
    #[doc = include_str!("../../../book/src/parametric.md")]
    mod parametric {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
