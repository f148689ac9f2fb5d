//! Deterministic numeric formatting for CSV output.
//!
//! Every float is printed with 12 significant digits, trailing zeros
//! trimmed, decimal point `.`, and a C-style two-digit exponent when the
//! magnitude leaves the decimal-friendly range. The function is a pure map
//! from the bit pattern, which is what makes byte-identical reruns a
//! testable contract.

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats with `SIGNIFICANT_DIGITS` significant digits, choosing decimal
/// or exponential notation the way `%g` does: decimal while the exponent
/// is in `[-4, SIGNIFICANT_DIGITS)`, exponential outside.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string(); // covers -0.0 as well
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }

    // `{:.11e}` rounds to 12 significant digits and normalizes to
    // `d.dddddddddddEexp`; split it into sign, digit run, and exponent.
    let formatted = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp_str) = formatted
        .split_once('e')
        .expect("float exponential form always contains 'e'");
    let exponent: i32 = exp_str.parse().expect("exponent is an integer");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), SIGNIFICANT_DIGITS);

    let sign = if negative { "-" } else { "" };
    let body = if (-4..SIGNIFICANT_DIGITS as i32).contains(&exponent) {
        place_decimal(&digits, exponent)
    } else {
        let head = trim_zeros(&digits);
        let mantissa = if head.len() == 1 {
            head.to_string()
        } else {
            format!("{}.{}", &head[..1], &head[1..])
        };
        format!("{mantissa}e{}{:02}", if exponent < 0 { '-' } else { '+' }, exponent.abs())
    };
    format!("{sign}{body}")
}

/// Renders a digit run as a plain decimal with the point after position
/// `exponent + 1`, trimming trailing fractional zeros.
fn place_decimal(digits: &str, exponent: i32) -> String {
    if exponent < 0 {
        let zeros = "0".repeat((-exponent - 1) as usize);
        let full = format!("{zeros}{digits}");
        format!("0.{}", trim_zeros(&full))
    } else {
        let point = exponent as usize + 1;
        let whole = &digits[..point];
        let frac = trim_zeros(&digits[point..]);
        if frac.is_empty() {
            whole.to_string()
        } else {
            format!("{whole}.{frac}")
        }
    }
}

fn trim_zeros(s: &str) -> &str {
    s.trim_end_matches('0')
}
