//! Serde adapter for `f64` fields that may hold `±∞` or NaN. JSON has no
//! such numbers, so they are written as the strings `"inf"`, `"-inf"` and
//! `"NaN"`; finite values stay plain numbers.

use serde::{de, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("NaN")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match Repr::deserialize(d)? {
        Repr::Num(x) => Ok(x),
        Repr::Text(t) => match t.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "NaN" => Ok(f64::NAN),
            other => Err(de::Error::custom(format!("expected a number, inf, -inf or NaN, got {other:?}"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct W {
        #[serde(with = "super")]
        x: f64,
    }

    #[test]
    fn round_trips_non_finite() {
        for x in [1.5, -0.0, f64::INFINITY, f64::NEG_INFINITY] {
            let j = serde_json::to_string(&W { x }).unwrap();
            let back: W = serde_json::from_str(&j).unwrap();
            assert_eq!(back.x, x, "{j}");
        }
        let j = serde_json::to_string(&W { x: f64::NAN }).unwrap();
        assert_eq!(j, r#"{"x":"NaN"}"#);
        assert!(serde_json::from_str::<W>(&j).unwrap().x.is_nan());
        assert!(serde_json::from_str::<W>(r#"{"x":"big"}"#).is_err());
    }
}
