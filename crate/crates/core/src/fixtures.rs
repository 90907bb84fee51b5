//! Published parameter estimates shipped as configuration fixtures.
//!
//! `table1_*` are the unrestricted estimates, `table2_*` the estimates with
//! the Feller conditions imposed. The JSON sources live in `fixtures/` and
//! double as example configurations for the command-line tool.

use crate::cli_io::config::RawConfig;
use crate::model::PhysicalParams;
use crate::scalar::{rational_from_f64, Rational, Scalar};

pub const SOURCES: [(&str, &str); 6] = [
    ("table1_prop", include_str!("../fixtures/table1_prop.json")),
    ("table1_dep", include_str!("../fixtures/table1_dep.json")),
    (
        "table1_indep",
        include_str!("../fixtures/table1_indep.json"),
    ),
    ("table2_prop", include_str!("../fixtures/table2_prop.json")),
    ("table2_dep", include_str!("../fixtures/table2_dep.json")),
    (
        "table2_indep",
        include_str!("../fixtures/table2_indep.json"),
    ),
];

pub fn source(name: &str) -> &'static str {
    SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .unwrap_or_else(|| panic!("no fixture named {name}"))
}

pub fn raw(name: &str) -> RawConfig {
    serde_json::from_str(source(name)).expect("fixture parses")
}

/// Fixture `name` with every decimal literal converted by `conv`.
pub fn named_as<T: Scalar>(name: &str, conv: impl Fn(f64) -> T + Copy) -> PhysicalParams<T> {
    raw(name).model.build(conv).expect("fixture builds")
}

pub fn named(name: &str) -> PhysicalParams<f64> {
    raw(name).build().expect("fixture validates").model
}

/// Fixture `name` in exact rational arithmetic.
pub fn exact(name: &str) -> PhysicalParams<Rational> {
    named_as(name, |v| rational_from_f64(v).expect("finite literal"))
}

pub fn table1_proportional() -> PhysicalParams<f64> {
    named("table1_prop")
}

pub fn table1_dependent() -> PhysicalParams<f64> {
    named("table1_dep")
}

pub fn table1_independent() -> PhysicalParams<f64> {
    named("table1_indep")
}

pub fn table2_proportional() -> PhysicalParams<f64> {
    named("table2_prop")
}

pub fn table2_dependent() -> PhysicalParams<f64> {
    named("table2_dep")
}

pub fn table2_independent() -> PhysicalParams<f64> {
    named("table2_indep")
}

pub fn table1() -> Vec<(&'static str, PhysicalParams<f64>)> {
    SOURCES[..3].iter().map(|(n, _)| (*n, named(n))).collect()
}

pub fn table2() -> Vec<(&'static str, PhysicalParams<f64>)> {
    SOURCES[3..].iter().map(|(n, _)| (*n, named(n))).collect()
}

pub fn all() -> Vec<(&'static str, PhysicalParams<f64>)> {
    SOURCES.iter().map(|(n, _)| (*n, named(n))).collect()
}
