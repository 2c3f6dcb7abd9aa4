//! Multiparametric discrete-time conservative linear systems.
//!
//! A system is a tuple of block operators `G_k = [A_k B_k; C_k D_k]` with
//! transfer function `θ(z) = zD + zC (I − zA)⁻¹ zB`. The crate provides:
//!
//! * [`system`]: construction, evaluation, conservativity and the closely
//!   connected part;
//! * [`germ`]: sparse Taylor germs and their shift realizations;
//! * [`cascade`]: cascade connection and decomposition along an invariant
//!   subspace;
//! * [`factorization`]: multiplicity at the origin, linear-factor chains and
//!   the search for a nontrivial cascade factorization;
//! * [`agler`]: falsification of Agler–Schur membership on commuting
//!   contraction tuples;
//! * [`io`] and [`cli`]: JSON file formats and the `multisys` binary.
//!
//! ```
//! use multisys::cascade::cascade;
//! use multisys::factorization::{multiplicity, Multiplicity};
//! use multisys::system::random_conservative;
//!
//! let a2 = random_conservative(2, 2, 1, 1, 1).unwrap();
//! let a1 = random_conservative(2, 1, 1, 1, 2).unwrap();
//! let s = cascade(&a2, &a1).unwrap();
//! assert!(s.is_conservative(1e-9).is_conservative());
//! assert_eq!(multiplicity(&s, 5), Multiplicity::Order(2));
//! ```
//!
//! The guide in `book/` explains the constructions; its snippets run as
//! doc-tests of this crate.

pub mod agler;
pub mod cascade;
pub mod cli;
pub mod error;
pub mod factorization;
pub mod germ;
pub mod io;
pub mod linalg;
pub mod subspace;
pub mod system;

pub use error::{Error, Result};
pub use system::MultiSystem;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/conservativity.md")]
    mod conservativity {}
    #[doc = include_str!("../../../book/src/cascades.md")]
    mod cascades {}
    #[doc = include_str!("../../../book/src/factorization.md")]
    mod factorization {}
    #[doc = include_str!("../../../book/src/agler.md")]
    mod agler {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
