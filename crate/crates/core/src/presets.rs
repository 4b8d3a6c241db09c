//! Built-in demonstration problem, shared by tests and the CLI examples.

use crate::config::parse_spec_str;
use crate::problem::EquationSpec;

/// The checked-in demonstration spec file.
pub const CANONICAL_TOML: &str = include_str!("../../../configs/canonical.toml");

/// First-order problem with near-origin Laplace scales relative to the
/// symbol roots; neighbor differences are measurably flat on it.
pub const FLATNESS_K1_TOML: &str = include_str!("../../../configs/flatness_k1.toml");

/// Parse the demonstration problem. Panics only if the checked-in file is
/// broken, which the config tests would catch first.
pub fn canonical_spec() -> EquationSpec {
    parse_spec_str(CANONICAL_TOML).expect("canonical config parses").0
}

pub fn flatness_k1_spec() -> EquationSpec {
    parse_spec_str(FLATNESS_K1_TOML).expect("k1 config parses").0
}
