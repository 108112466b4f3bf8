//! Fixed number formatting for machine-facing and human-facing tables.

/// Shortest-form rendering at 17 significant digits, matching C's `%.17g`.
pub fn fmt_g17(v: f64) -> String {
    fmt_g(v, 17)
}

/// C-style `%.{precision}g`.
pub fn fmt_g(v: f64, precision: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= p as i32 {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Four decimal places, as printed in the human-facing wide tables.
pub fn fmt_fixed4(v: f64) -> String {
    format!("{v:.4}")
}

/// Optional value; absent renders as an empty CSV field.
pub fn fmt_opt_g17(v: Option<f64>) -> String {
    v.map(fmt_g17).unwrap_or_default()
}
