//! Fixed 12-significant-digit decimal output used by every numeric file.

pub const SIGNIFICANT_DIGITS: i32 = 12;

/// Formats `x` in plain decimal notation rounded to 12 significant digits,
/// with trailing zeros dropped.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // The exponent after rounding to 12 digits, so 9.99..96 counts as 1e1.
    let sci = format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, x);
    let exponent: i32 = sci[sci.find('e').expect("exponent marker") + 1..]
        .parse()
        .expect("integer exponent");
    let decimals = (SIGNIFICANT_DIGITS - 1 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        &s
    };
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(25.0), "25");
        assert_eq!(sig12(0.3934693402873666), "0.393469340287");
        assert_eq!(sig12(100.0), "100");
        assert_eq!(sig12(-1.5), "-1.5");
        assert_eq!(sig12(1e-15), "0.000000000000001");
        assert_eq!(sig12(9.9999999999996), "10");
    }

    proptest! {
        #[test]
        fn relative_error_bounded(x in -1e6f64..1e6) {
            let s = sig12(x);
            let back: f64 = s.parse().unwrap();
            prop_assert!((back - x).abs() <= 5.1e-12 * x.abs().max(1e-300), "{x} -> {s}");
        }
    }
}
