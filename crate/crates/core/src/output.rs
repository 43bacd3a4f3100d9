//! Plain-text output helpers shared by the CSV writers.

/// 17 significant digits in scientific notation; parses back to the same
/// `f64`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Joins already formatted fields into a `\n`-terminated CSV line.
pub fn csv_line<S: AsRef<str>>(fields: &[S]) -> String {
    let mut s = fields.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}
