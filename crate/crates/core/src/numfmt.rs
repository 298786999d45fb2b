//! Canonical decimal formatting for persisted floats.
//!
//! All reals written to bundles, score tables, and model files go through
//! [`fmt_f64`]: scientific notation with 17 significant digits, which is
//! enough to reproduce any finite f64 bit-exactly on parse. Using one fixed
//! formatter everywhere keeps repeated saves byte-identical.

/// Format a finite f64 with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    debug_assert!(x.is_finite(), "persisted floats must be finite");
    format!("{x:.16e}")
}

/// Parse a float previously written by [`fmt_f64`] (or any decimal literal).
pub fn parse_f64(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W: std::io::Write + ?Sized>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
}

/// Serialize to compact JSON with all floats in the canonical 17-digit form.
pub fn to_json_canonical<T: serde::Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(out).expect("serde_json emits utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_are_bit_exact() {
        let samples = [
            0.0,
            -0.0,
            1.0,
            -1.0,
            std::f64::consts::PI,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            f64::MAX,
            2.2250738585072014e-308,
            -9.869604401089358e16,
        ];
        for &x in &samples {
            let s = fmt_f64(x);
            let back = parse_f64(&s).unwrap();
            assert_eq!(x.to_bits(), back.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn formatting_is_deterministic() {
        assert_eq!(fmt_f64(0.5), fmt_f64(0.5));
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }
}
