//! Text output helpers shared by every on-disk format.

/// Seventeen significant digits in scientific notation: round-trips every
/// finite `f64` and is a valid JSON number.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON array of floats formatted with [`fmt_f64`].
pub fn fmt_f64_array(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| fmt_f64(x)).collect();
    format!("[{}]", parts.join(","))
}

/// JSON string literal for config echoes and labels.
pub fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_json() {
        for x in [0.0, -0.0, 1.0, 0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, f64::MAX] {
            let s = fmt_f64(x);
            let back: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn escapes_quotes() {
        assert_eq!(json_string("a\"b\\c"), r#""a\"b\\c""#);
    }
}
