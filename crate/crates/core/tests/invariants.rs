//! Property suites, each over 1000 generated cases.

mod support;

use support::properties;

const CASES: u32 = 1000;

#[test]
fn tie_kill_and_z_recursion() {
    properties::tie_kill_and_z_recursion(CASES).unwrap();
}

#[test]
fn ams_nesting_and_normalization() {
    properties::ams_nesting_and_normalization(CASES).unwrap();
}

#[test]
fn pcn_detailed_balance() {
    properties::pcn_detailed_balance(CASES).unwrap();
}

#[test]
fn mutation_stays_in_level_set() {
    properties::mutation_stays_in_level_set(CASES).unwrap();
}

#[test]
fn spline_interpolates() {
    properties::spline_interpolates(CASES).unwrap();
}

#[test]
fn nested_indicator_identity() {
    properties::nested_indicator_identity(CASES).unwrap();
}

#[test]
fn critical_level_monotone() {
    properties::critical_level_monotone(CASES).unwrap();
}

#[test]
fn budget_accounting() {
    properties::budget_accounting(CASES).unwrap();
}

#[test]
fn estimator_running_mean() {
    properties::estimator_running_mean(CASES).unwrap();
}

#[test]
fn rng_reproducible() {
    properties::rng_reproducible(CASES).unwrap();
}
