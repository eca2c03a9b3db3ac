//! Robust primal-dual online algorithms for convex programming and welfare
//! maximization when the input mixes adversarial and stochastic steps.

pub mod check;
pub mod convex;
pub mod error;
pub mod harness;
pub mod instance;
pub mod oco;
pub mod ocp;
pub mod oracle;
pub mod vecops;
pub mod welfare;

pub use check::CheckResult;
pub use convex::{ConjugateValue, CostFunction, Family, ScalarCost, ScalarTerm};
pub use error::{Error, Result};
pub use instance::{AnyInstance, MixedInstance, Origin, Realization, Slot};
pub use oco::{Mutation, OcoState, RegretLedger};
pub use ocp::{FeasibleSet, LinearOracle, OcpRunTrace};
pub use welfare::{Request, WelfareTrace};
pub use oracle::{Method, OptReport};
pub use harness::{CheckGroup, RunConfig, RunReport, VerifyConfig, VerifyMatrix};
