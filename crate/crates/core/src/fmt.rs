//! Stable numeric formatting for CSV/JSON artifacts.

/// Rounds to 12 significant digits and prints the shortest representation
/// of the rounded value, so artifacts are byte-stable across runs.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// Rounds to 12 significant digits, for JSON numbers.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}
