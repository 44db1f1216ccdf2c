//! Bundled block designs for the simulation presets (351 scans; columns
//! are stimulus regressors followed by a constant).

use std::path::Path;

use crate::bundle::Design;
use crate::error::Result;

const DESIGN_K5: &str = include_str!("../data/design_k5.csv");
const DESIGN_K13: &str = include_str!("../data/design_k13.csv");

/// The bundled design with `k` columns, if there is one.
pub fn for_k(k: usize) -> Option<Result<Design>> {
    let (name, text) = match k {
        5 => ("design_k5.csv", DESIGN_K5),
        13 => ("design_k13.csv", DESIGN_K13),
        _ => return None,
    };
    Some(Design::parse(Path::new(name), text))
}
