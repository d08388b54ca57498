//! Fixed six-significant-digit number formatting used by every text output.

/// Formats `v` like C's `%g` with six significant digits, trailing zeros trimmed.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.5e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, v))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

/// Rounds `v` to six significant digits, for values stored in JSON outputs.
pub fn round6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.5e}", v).parse().expect("round-trips")
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".to_string()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig6(1.65), "1.65");
        assert_eq!(sig6(102400.0), "102400");
        assert_eq!(sig6(1234567.0), "1.23457e+06");
        assert_eq!(sig6(0.000012345678), "1.23457e-05");
        assert_eq!(sig6(0.0001), "0.0001");
        assert_eq!(sig6(-39.75), "-39.75");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
        assert_eq!(sig6(std::f64::consts::FRAC_PI_2), "1.5708");
        assert_eq!(sig6(-0.0), "0");
        assert_eq!(sig6(999999.5), "1e+06");
    }

    #[test]
    fn round6_is_idempotent() {
        for v in [1.0 / 3.0, 2.0f64.sqrt() * 1e7, -4.2e-9] {
            assert_eq!(round6(round6(v)), round6(v));
            assert_eq!(sig6(round6(v)), sig6(v));
        }
    }
}
