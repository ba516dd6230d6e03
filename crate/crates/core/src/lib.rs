//! Perturbation exponents, trace partitions and density flows of
//! one-dimensional cellular automata under shift-invariant measures.

pub mod catalog;
pub mod error;
pub mod fit;
pub mod flow;
pub mod measure;
pub mod oracle;
pub mod perturbation;
pub mod rng;
pub mod rule;
pub mod sturmian;
pub mod symbols;
pub mod trace_class;
pub mod velocity;

pub use error::{Error, Result};
pub use flow::{
    density_flow, entropy_f_estimate, entropy_shift, entropy_shift_smb, flow_at, verify_theorem1, verify_theorem2,
    DensityFlow, EntropyEstimate, FlowEstimate, FlowParams, Theorem, TheoremReport,
};
pub use measure::{LogMeasure, MeasureModel, MeasureSpec};
pub use perturbation::{
    average_exponents, bn_measure_estimate, classify, lyapunov_exact, lyapunov_sampled, lyapunov_star,
    ClassificationReport, ClassifyParams, LyapunovRecord, StabilityLabel,
};
pub use rule::{elementary_rule, identity_rule, make_rule, product_rule, shift_rule, LocalRule, Trace};
pub use sturmian::Rotation;
pub use symbols::{Alphabet, Symbol, Window};
pub use trace_class::{count_t_exact, DeltaFilter, TraceClassResult};
pub use velocity::VelocitySpec;
