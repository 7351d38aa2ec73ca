//! Deterministic number rendering for text outputs.

/// Rounds to 6 significant digits and prints the shortest decimal that
/// round-trips, without exponent notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// Full-precision rendering (shortest round-trip form).
pub fn exact(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(102.760448), "102.76");
        assert_eq!(sig6(0.000032), "0.000032");
        assert_eq!(sig6(9.654750000001), "9.65475");
        assert_eq!(sig6(15.0), "15");
        assert_eq!(sig6(-0.0), "0");
        assert_eq!(sig6(1234567.0), "1234570");
    }
}
