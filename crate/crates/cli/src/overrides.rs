//! `--set key.path=value` overrides applied to the raw JSON config.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverrideError(pub String);

impl std::fmt::Display for OverrideError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for OverrideError {}

/// Parses `a.b.0.c=value`. The value is read as JSON when it parses as
/// JSON and taken as a plain string otherwise.
pub fn parse_override(text: &str) -> Result<Override, OverrideError> {
    let Some((key, raw)) = text.split_once('=') else {
        return Err(OverrideError(format!("override {text:?} is not of the form key=value")));
    };
    let key = key.trim();
    if key.is_empty() {
        return Err(OverrideError(format!("override {text:?} has an empty key")));
    }
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(OverrideError(format!("override key {key:?} has an empty segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(Override { path, value })
}

/// Writes the override into `root`, creating intermediate objects as
/// needed. Numeric segments index existing arrays.
pub fn apply_override(root: &mut Value, ov: &Override) -> Result<(), OverrideError> {
    let mut node = root;
    for (depth, seg) in ov.path.iter().enumerate() {
        let last = depth + 1 == ov.path.len();
        let here = ov.path[..=depth].join(".");
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.clone(), ov.value.clone());
                    return Ok(());
                }
                map.entry(seg.clone())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| OverrideError(format!("{here}: {seg:?} is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| OverrideError(format!("{here}: index {idx} out of range (length {len})")))?;
                if last {
                    *slot = ov.value.clone();
                    return Ok(());
                }
                slot
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                let Value::Object(map) = node else { unreachable!() };
                if last {
                    map.insert(seg.clone(), ov.value.clone());
                    return Ok(());
                }
                map.entry(seg.clone())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            _ => {
                return Err(OverrideError(format!("{here}: cannot descend into a scalar")));
            }
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_json_and_strings() {
        let o = parse_override("scf.density_tol=1e-8").unwrap();
        assert_eq!(o.path, ["scf", "density_tol"]);
        assert_eq!(o.value, json!(1e-8));
        assert_eq!(
            parse_override("system.preset=diatomic").unwrap().value,
            json!("diatomic")
        );
        assert_eq!(parse_override("levels=[4,6]").unwrap().value, json!([4, 6]));
        assert_eq!(parse_override("a=b=c").unwrap().value, json!("b=c"));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("=3").is_err());
        assert!(parse_override("a..b=3").is_err());
    }

    #[test]
    fn applies_into_nested_values() {
        let mut v = json!({"scf": {"max_iter": 5}, "levels": [4, 6]});
        apply_override(&mut v, &parse_override("scf.max_iter=9").unwrap()).unwrap();
        apply_override(&mut v, &parse_override("levels.1=8").unwrap()).unwrap();
        apply_override(&mut v, &parse_override("reference.n=16").unwrap()).unwrap();
        assert_eq!(
            v,
            json!({"scf": {"max_iter": 9}, "levels": [4, 8], "reference": {"n": 16}})
        );
        assert!(apply_override(&mut v, &parse_override("levels.5=1").unwrap()).is_err());
        assert!(apply_override(&mut v, &parse_override("levels.x=1").unwrap()).is_err());
        assert!(apply_override(&mut v, &parse_override("scf.max_iter.deep=1").unwrap()).is_err());
    }
}
