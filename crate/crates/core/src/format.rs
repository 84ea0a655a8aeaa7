//! Text formatting shared by every CSV/JSON writer.

/// Fixed-point rendering with 17 significant digits.
///
/// Values whose magnitude needs more than 17 integer digits fall back to
/// scientific notation. Non-finite values render as `nan`, `inf` or `-inf`
/// (never produced by the solvers).
pub fn real17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return format!("{:.16}", 0.0);
    }
    let sci = format!("{:.16e}", x);
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .expect("scientific rendering always carries an exponent");
    if exp > 16 {
        return sci;
    }
    let decimals = (16 - exp) as usize;
    format!("{:.*}", decimals, x)
}
