//! `%.17g`-style float formatting for CSV output.

/// Formats `v` with 17 significant digits, trailing zeros removed, using
/// scientific notation outside `[1e-4, 1e17)` like C's `%.17g`.
pub fn g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::g17;

    #[test]
    fn matches_c_printf() {
        assert_eq!(g17(0.0), "0");
        assert_eq!(g17(9.0), "9");
        assert_eq!(g17(-18.0), "-18");
        assert_eq!(g17(0.1), "0.10000000000000001");
        assert_eq!(g17(0.25), "0.25");
        assert_eq!(g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(g17(1.5e20), "1.5e+20");
        assert_eq!(g17(0.0001), "0.0001");
        assert_eq!(g17(123456.789), "123456.789");
    }

    #[test]
    fn round_trips() {
        for v in [0.1, 1.0 / 3.0, 2.0e-7, 6.02214076e23, -7.25, 0.012345678901234568] {
            assert_eq!(g17(v).parse::<f64>().unwrap(), v);
        }
    }
}
