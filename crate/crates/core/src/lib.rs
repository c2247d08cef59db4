//! Exact constructions from metric Diophantine approximation.
//!
//! The crate covers dyadic covers for multiplicative approximation, volume-sum
//! dichotomies, counting shifted rational points near planar curves and a
//! Cantor-rectangle construction of inhomogeneous badly approximable points.

pub mod cantor;
pub mod cf;
pub mod cover;
pub mod curve;
pub mod dim;
pub mod enclosure;
pub mod psi;
pub mod rational;
pub mod series;

pub use cantor::{
    verify_witness, BadPair, CantorError, Construction, ConstructionParams, Descent, NodeStatus, RectNode, Refinement,
    Selector, Tree, WitnessCertificate,
};
pub use cf::{cf_convergents, construct_s1_member, CfExpansion, S1Member};
pub use cover::{
    check_cover_soundness, cover_cells, cover_tail, dyadic_decompose, s_volume_level, CoverError, CoverRect,
    Decomposition,
};
pub use curve::{
    count_near_curve, curve_cover_svolume, fit_counting_constant, CurveError, CurveFn, CurveSpec, NearCurveCount,
};
pub use dim::{box_count, cover_sum_criterion, BoxCounter, BoxDimReport, BoxInput, DimError, ScaleGrid};
pub use enclosure::{Enclosure, Monomial};
pub use psi::{ApproxFn, PsiError, PsiKind, PsiValue};
pub use rational::{nearest_int_dist, parse_pair, parse_rational, Rational, RationalPair};
pub use series::{classify_series, numerical_verdict, SeriesError, SeriesKind, Verdict};
