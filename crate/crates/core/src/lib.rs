//! Tests for dependence between groups of variables, with network assembly
//! under family-wise error control.
//!
//! A region is a [`panel::ComponentPanel`] of `n` observations by `q`
//! components. [`dependence`] tests a pair of regions by their maximum cross
//! correlation (Test I), the same on nodewise-regression residuals (Test II),
//! or by the correlation of first principal components (Test III).
//! [`network`] turns a scan over all pairs into an adjacency matrix, and
//! [`simulate`] and [`experiment`] reproduce size, power and network-recovery
//! studies.
//!
//! ```
//! use netblock::dependence::{pairwise_scan, TestMethod};
//! use netblock::network::identify_network;
//! use netblock::panel::RegionLayout;
//! use netblock::simulate::{make_region_cov, sample_mvn, Model};
//! use rand::SeedableRng;
//! use rand_chacha::ChaCha8Rng;
//!
//! let mut rng = ChaCha8Rng::seed_from_u64(5);
//! let cov = make_region_cov(Model::Independent, 12, &mut rng).unwrap();
//! let x = sample_mvn(&cov, 100, &mut rng).unwrap();
//! let layout = RegionLayout::anonymous(vec![4, 4, 4]).unwrap();
//! let panels = layout.split(x.data()).unwrap();
//!
//! let outcomes = pairwise_scan(&layout, &panels, 0.05, TestMethod::Test1).unwrap();
//! let net = identify_network(&outcomes, 3, 0.05).unwrap();
//! assert_eq!(net.outcomes.len(), 3);
//! ```

pub mod cli;
pub mod dependence;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod network;
pub mod null_dist;
pub mod panel;
pub mod preprocess;
pub mod simulate;
pub mod sparse;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/data.md")]
mod book_data {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/null.md")]
mod book_null {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/marginal.md")]
mod book_marginal {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/residual.md")]
mod book_residual {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/principal.md")]
mod book_principal {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/network.md")]
mod book_network {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/simulation.md")]
mod book_simulation {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
