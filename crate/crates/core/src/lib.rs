//! Analysis of designed experiments on separations signals in the frequency
//! domain.
//!
//! Each row of the data matrix is one sample's signal (a chromatogram, say).
//! The rows are Fourier transformed, a complex general linear model splits
//! the spectra into one effect matrix per design term, and permutation
//! F-tests give each term a p-value. Simultaneous component analysis of an
//! effect then yields scores and loadings; the loadings transform back to
//! the time axis for interpretation.
//!
//! ```
//! use fftasca::prelude::*;
//!
//! // Two groups of three samples, eight acquisitions each.
//! let labels = ["a", "a", "a", "b", "b", "b"];
//! let x = RealMatrix::from_rows(&(0..6)
//!     .map(|i| (0..8).map(|t| {
//!         let shift = if i < 3 { 0.0 } else { 1.0 };
//!         (t as f64 + 0.1 * i as f64).sin() + shift * (t == 3) as u8 as f64
//!     }).collect())
//!     .collect::<Vec<_>>())?;
//!
//! let spec = DesignSpec::new(vec![Factor::from_labels("Group", &labels)], vec![])?;
//! let design = encode(&spec)?;
//! let spectra = transform_rows(&x.to_complex())?;
//! let table = permutation_test(spectra.matrix(), &design, &PermutationOptions::new(200, 1))?;
//! assert!(table.p_value("Group").unwrap() <= 1.0);
//! # Ok::<(), fftasca::Error>(())
//! ```

pub mod asca;
pub mod design;
pub mod error;
pub mod glm;
pub mod io;
pub mod linalg;
pub mod preprocess;
pub mod spectral;
pub mod svg;
pub mod synth;

pub use error::{Error, ErrorKind, Result};

/// The types and functions most analyses need.
pub mod prelude {
    pub use crate::asca::{effect_to_time, fit_effect, loadings_to_time, real_scores, sca_fit, ScaModel};
    pub use crate::design::{encode, DesignMatrix, DesignSpec, Factor, Term};
    pub use crate::error::{Error, Result};
    pub use crate::glm::{
        fit, pcmr_permutation_test, permutation_test, zeros_to_missing, AnovaTable, GlmDecomposition, MissingMask,
        PermutationOptions,
    };
    pub use crate::linalg::{ComplexMatrix, RealMatrix};
    pub use crate::spectral::{inverse_rows, transform_rows, SpectrumMatrix};
}
