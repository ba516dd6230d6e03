//! Built-in rules and measure presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MeasureModel;
use crate::rule::{elementary_rule, identity_rule, product_rule, shift_rule, LocalRule};
use crate::sturmian::Rotation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub k: u32,
    pub r: usize,
    pub bipermutative: bool,
    /// Measure preset the fixture is usually run with.
    pub measure: String,
    pub description: String,
}

const POWERS: [u32; 3] = [1, 2, 3];

/// Every built-in rule name.
pub fn rule_names() -> Vec<String> {
    let mut names = vec!["identity".to_string(), "shift".to_string()];
    names.extend(POWERS.iter().skip(1).map(|d| format!("shift{d}")));
    names.extend((0..256).map(|c| format!("rule{c}")));
    names.extend(POWERS.iter().map(|r| format!("prod{r}")));
    names.extend(POWERS.iter().map(|r| format!("id_x_shift{r}")));
    names.extend(POWERS.iter().map(|r| format!("shift{r}_x_id")));
    names
}

fn shift_power(text: &str) -> Option<u32> {
    let d: u32 = if text == "shift" { 1 } else { text.strip_prefix("shift")?.parse().ok()? };
    (d >= 1).then_some(d)
}

/// Builds a catalog rule by name.
pub fn rule(name: &str) -> Result<LocalRule> {
    let unknown = || Error::InvalidRule(format!("unknown catalog rule `{name}`"));
    let name = name.trim();
    if name == "identity" || name == "id" {
        return identity_rule(2);
    }
    if let Some(code) = name.strip_prefix("rule") {
        let code: u32 = code.parse().map_err(|_| unknown())?;
        return elementary_rule(code).map(|r| r.with_label(format!("rule{code}")));
    }
    if let Some(r) = name.strip_prefix("prod") {
        let r: u32 = r.parse().map_err(|_| unknown())?;
        let rule = product_rule(&shift_rule(2, 1)?, &shift_rule(2, r as i64)?)?;
        return Ok(rule.with_label(name));
    }
    if let Some(rest) = name.strip_prefix("id_x_") {
        let d = shift_power(rest).ok_or_else(unknown)?;
        let rule = product_rule(&identity_rule(2)?, &shift_rule(2, d as i64)?)?;
        return Ok(rule.with_label(name));
    }
    if let Some(rest) = name.strip_suffix("_x_id") {
        let d = shift_power(rest).ok_or_else(unknown)?;
        let rule = product_rule(&shift_rule(2, d as i64)?, &identity_rule(2)?)?;
        return Ok(rule.with_label(name));
    }
    if let Some(d) = shift_power(name) {
        return shift_rule(2, d as i64).map(|r| r.with_label(name));
    }
    Err(unknown())
}

/// Every measure preset name.
pub fn measure_names() -> Vec<&'static str> {
    vec![
        "uniform",
        "bernoulli",
        "markov",
        "sturmian",
        "uniform_x_uniform",
        "uniform_x_sturmian",
        "sturmian_x_uniform",
    ]
}

/// Builds a measure preset; `uniform` adapts to the rule's alphabet size.
pub fn measure(name: &str, k: u32) -> Result<MeasureModel> {
    let binary = |m: MeasureModel| {
        if k == 2 {
            Ok(m)
        } else {
            Err(Error::InvalidMeasure(format!("preset `{name}` is binary, rule has k = {k}")))
        }
    };
    let u2 = || MeasureModel::uniform(2);
    let st = || MeasureModel::sturmian(Rotation::golden());
    match name.trim() {
        "uniform" => MeasureModel::uniform(k),
        "bernoulli" => binary(MeasureModel::bernoulli(vec![1.0 / 3.0, 2.0 / 3.0])?),
        "markov" => binary(MeasureModel::markov(vec![vec![0.9, 0.1], vec![0.1, 0.9]])?),
        "sturmian" => binary(st()),
        "uniform_x_uniform" => MeasureModel::product(vec![u2()?, u2()?]),
        "uniform_x_sturmian" => MeasureModel::product(vec![u2()?, st()]),
        "sturmian_x_uniform" => MeasureModel::product(vec![st(), u2()?]),
        other => Err(Error::InvalidMeasure(format!("unknown measure preset `{other}`"))),
    }
}

fn describe(name: &str) -> (String, &'static str) {
    if name == "identity" {
        return ("identity map".into(), "uniform");
    }
    if let Some(r) = name.strip_prefix("prod") {
        return (format!("shift x shift^{r} on pairs of bits"), "uniform_x_uniform");
    }
    if let Some(r) = name.strip_prefix("id_x_shift") {
        return (format!("identity x shift^{r}"), "uniform_x_sturmian");
    }
    if let Some(r) = name.strip_suffix("_x_id") {
        return (format!("{r} x identity"), "uniform_x_sturmian");
    }
    if let Some(c) = name.strip_prefix("rule") {
        return (format!("elementary rule {c}"), "uniform");
    }
    ("left shift power".into(), "uniform")
}

pub fn entries() -> Vec<CatalogEntry> {
    rule_names()
        .into_iter()
        .map(|name| {
            let r = rule(&name).expect("catalog names build");
            let (description, measure) = describe(&name);
            CatalogEntry {
                k: r.k(),
                r: r.radius(),
                bipermutative: r.is_bipermutative(),
                measure: measure.to_string(),
                description,
                name,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_present() {
        let all = entries();
        let find = |n: &str| all.iter().find(|e| e.name == n).unwrap();
        let p = find("prod2");
        assert_eq!((p.k, p.r), (4, 2));
        assert!(find("rule90").bipermutative);
        assert!(!find("rule204").bipermutative);
        assert_eq!(find("id_x_shift2").measure, "uniform_x_sturmian");
        assert_eq!(all.len(), 4 + 256 + 9);
        for name in measure_names() {
            let k = if name.contains("_x_") { 4 } else { 2 };
            assert_eq!(measure(name, k).unwrap().k(), k);
        }
        assert!(rule("nope").is_err());
        assert!(measure("bernoulli", 4).is_err());
    }
}
