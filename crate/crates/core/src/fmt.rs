//! Deterministic number formatting for report files.

/// Round a float to 6 significant digits.
///
/// A pure function of the input bits, so identical inputs always round (and
/// therefore serialize) identically.
pub fn sig6_f64(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - exp);
    (x * scale).round() / scale
}

/// Format a float rounded to 6 significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    format!("{}", sig6_f64(x))
}
