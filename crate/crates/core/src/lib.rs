//! Optimal multimarginal Schrödinger bridges over discrete measures.
//!
//! Given `s` discrete probability measures and a pairwise ground cost, the
//! graph structure with the smallest entropic multimarginal transport cost is
//! a spanning tree, and it can be found as the minimum spanning tree of the
//! complete graph whose edge weights are bimarginal Schrödinger-bridge values
//! plus endpoint entropies.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`measures`] | discrete measures, entropy, GMM sampling, image ingestion |
//! | [`sinkhorn`] | log-domain bimarginal Sinkhorn, SB values, KL |
//! | [`oracle`] | dense multimarginal Sinkhorn used as a reference |
//! | [`trees`] | Prüfer codes, tree enumeration, tree-structured couplings |
//! | [`mst`] | edge weights, Prim and Borůvka, the end-to-end solver |
//! | [`cli`] | the `msbtree` command line |
//!
//! ```
//! use msbtree::measures::{DiscreteMeasure, MeasureCollection};
//! use msbtree::mst::{optimal_msb, CostSpec, SolverConfig};
//! use msbtree::sinkhorn::CostKind;
//!
//! let ms = MeasureCollection::new(vec![
//!     DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap(),
//!     DiscreteMeasure::uniform(vec![vec![0.5], vec![1.5]]).unwrap(),
//!     DiscreteMeasure::uniform(vec![vec![4.0], vec![5.0]]).unwrap(),
//! ])
//! .unwrap();
//! let result = optimal_msb(&ms, &CostSpec::Points(CostKind::SqEuclidean), &SolverConfig::new(1.0)).unwrap();
//! assert_eq!(result.tree.edges().len(), 2);
//! ```

pub mod cli;
pub mod error;
pub mod matrix;
pub mod measures;
pub mod mst;
pub mod oracle;
pub mod sinkhorn;
pub mod trees;

pub use error::{Error, Result};
pub use matrix::Matrix;
