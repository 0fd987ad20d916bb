//! Proxy-variable conditional independence testing for continuous data.
//!
//! Tests the causal null hypothesis X independent of Y given a latent U,
//! observed only through a proxy W with X independent of W given U. The
//! pipeline discretizes X and W so the estimated P(W~|X~) keeps full row
//! rank, estimates discrete conditionals by maximum likelihood, and checks
//! the residual of regressing the standardized P(y~|X~) on P(W~|X~)
//! against its chi-square null distribution.
//!
//! The crate also ships synthetic structural-causal-model generators and a
//! Monte-Carlo harness for level/power studies and discretization-error
//! curves.

pub mod citest;
pub mod discretization;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod numerics;
pub mod scm;

pub use citest::{
    decide, degrees_of_freedom, proxy_ci_test, test_statistic, Diagnostics, TestConfig, TestMode,
    TestResult,
};
pub use error::{Error, Result};
