//! Shared CSV/JSON helpers.

/// Format with 12 significant digits, trailing zeros trimmed.
///
/// Infinities print as `inf`/`-inf` so they survive a round trip through
/// the `lv_nH` JSON fields and CSV columns.
pub fn fmt_float(x: f64) -> String {
    const SIG: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..SIG).contains(&exp) {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let s = format!("{:.*e}", (SIG - 1) as usize, x);
        match s.split_once('e') {
            Some((mantissa, e)) => format!("{}e{}", trim_zeros(mantissa.to_string()), e),
            None => s,
        }
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Serde adapter for float lists where `+inf` is written as the string `"inf"`.
pub mod inf_list {
    use serde::de::{self, Deserializer};
    use serde::ser::{SerializeSeq, Serializer};
    use serde::Deserialize;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            if v.is_infinite() && *v > 0.0 {
                seq.serialize_element("inf")?;
            } else {
                seq.serialize_element(v)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| match e {
                Entry::Num(x) => Ok(x),
                Entry::Text(t) if matches!(t.as_str(), "inf" | "Infinity" | "+inf") => Ok(f64::INFINITY),
                Entry::Text(t) => Err(de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            })
            .collect()
    }

    /// Single-value variant of the same encoding.
    pub mod single {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            if v.is_infinite() && *v > 0.0 {
                s.serialize_str("inf")
            } else {
                s.serialize_f64(*v)
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            match Entry::deserialize(d)? {
                Entry::Num(x) => Ok(x),
                Entry::Text(t) if matches!(t.as_str(), "inf" | "Infinity" | "+inf") => Ok(f64::INFINITY),
                Entry::Text(t) => Err(de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_float;
    use proptest::prelude::*;

    #[test]
    fn formats() {
        assert_eq!(fmt_float(6.04), "6.04");
        assert_eq!(fmt_float(22.0), "22");
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_float(-1.5e-9), "-1.5e-9");
        assert_eq!(fmt_float(123456789012345.0), "1.23456789012e14");
    }

    proptest! {
        #[test]
        fn twelve_digits_survive(x in -1e9f64..1e9) {
            let back: f64 = fmt_float(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-11 * x.abs().max(1e-300));
        }
    }
}
