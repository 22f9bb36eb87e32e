//! Limiting objects: the Mittag-Leffler function, stable subordinators and
//! the FK process, Caputo-L1 and subordination solvers of the fractional
//! kinetics equation, and the FIN speed-measure chain in one dimension.

mod fin;
mod fke;
mod mittag_leffler;
mod stable;

pub use fin::{build_fin_chain, fin_msd, fin_semigroup, simulate_fin, FinChain, FinMode, FinSemigroup};
pub use fke::{fke_solve_l1, fke_spectral, fke_subordination, heat_semigroup, FkeSolution, Grid, L1Mode};
pub use mittag_leffler::{mittag_leffler, ml_integral, ml_series};
pub use stable::{sample_inverse_subordinator, sample_stable, simulate_fk};
