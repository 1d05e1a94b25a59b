//! Deterministic number formatting for reports.

/// Rounds to 12 significant digits and prints the shortest decimal that
/// round-trips the rounded value.
pub fn sig(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{:.11e}", x).parse().unwrap_or(x);
    if rounded == 0.0 {
        return "0".into();
    }
    if rounded.abs() < 1e-4 || rounded.abs() >= 1e15 {
        return format!("{:e}", rounded);
    }
    format!("{}", rounded)
}

/// Rounds a value to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let r: f64 = format!("{:.11e}", x).parse().unwrap_or(x);
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Serializes `value` with every float rounded to 12 significant digits.
pub fn rounded_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    fn walk(v: serde_json::Value) -> serde_json::Value {
        use serde_json::Value;
        match v {
            Value::Number(n) if n.is_f64() => {
                let x = round12(n.as_f64().unwrap());
                serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
            }
            Value::Array(a) => Value::Array(a.into_iter().map(walk).collect()),
            Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, walk(v))).collect()),
            other => other,
        }
    }
    walk(serde_json::to_value(value).expect("serializable"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(sig(std::f64::consts::PI), "3.14159265359");
        assert_eq!(sig(-0.0), "0");
        assert_eq!(sig(1.0), "1");
        assert_eq!(sig(2f64.ln()), "0.69314718056");
    }
}
