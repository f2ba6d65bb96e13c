//! Built-in simulation scenarios and the TOML scenario format.
//!
//! A scenario fixes the failure law of each group and up to four censoring
//! variants. A scenario file looks like:
//!
//! ```toml
//! name = "my-scenario"
//! failure = ["exp(1)", "pwexp([0.5], [1, 2])"]
//! fractions = [0.5, 0.5]          # optional, equal by default
//!
//! [censoring]
//! equal_25 = ["uniform(1, 3)", "uniform(1, 3)"]
//! unequal_severe = ["min(uniform(0, 4), exp(0.9))", "uniform(0, 4)"]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::distribution::DistributionSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringVariant {
    /// About 25% censoring, same law in every group.
    #[serde(rename = "equal_25")]
    Equal25,
    /// About 50% censoring, same law in every group.
    #[serde(rename = "equal_50")]
    Equal50,
    /// Small differences between groups (roughly 40% vs 55%).
    UnequalMild,
    /// Large differences between groups (roughly 27% vs 55%).
    UnequalSevere,
}

impl CensoringVariant {
    pub const ALL: [CensoringVariant; 4] = [
        CensoringVariant::Equal25,
        CensoringVariant::Equal50,
        CensoringVariant::UnequalMild,
        CensoringVariant::UnequalSevere,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CensoringVariant::Equal25 => "equal_25",
            CensoringVariant::Equal50 => "equal_50",
            CensoringVariant::UnequalMild => "unequal_mild",
            CensoringVariant::UnequalSevere => "unequal_severe",
        }
    }
}

impl fmt::Display for CensoringVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CensoringVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        CensoringVariant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| {
                Error::Scenario(format!(
                    "unknown censoring variant `{s}`; expected equal_25, equal_50, unequal_mild or unequal_severe"
                ))
            })
    }
}

/// One fully specified data-generating mechanism.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub k: usize,
    pub failure: Vec<DistributionSpec>,
    pub censoring: Vec<DistributionSpec>,
    pub group_fractions: Vec<f64>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Scenario(format!("{}: at least 2 groups needed", self.name)));
        }
        if self.failure.len() != self.k || self.censoring.len() != self.k || self.group_fractions.len() != self.k {
            return Err(Error::Scenario(format!(
                "{}: failure, censoring and fractions must each list {} groups",
                self.name, self.k
            )));
        }
        if self.group_fractions.iter().any(|&f| !(f > 0.0)) || (self.group_fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Scenario(format!("{}: fractions must be positive and sum to 1", self.name)));
        }
        self.failure.iter().chain(&self.censoring).try_for_each(DistributionSpec::validate)
    }
}

/// A scenario with its censoring variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFamily {
    pub name: String,
    pub failure: Vec<DistributionSpec>,
    #[serde(default)]
    pub fractions: Option<Vec<f64>>,
    pub censoring: BTreeMap<CensoringVariant, Vec<DistributionSpec>>,
}

impl ScenarioFamily {
    pub fn k(&self) -> usize {
        self.failure.len()
    }

    pub fn variants(&self) -> Vec<CensoringVariant> {
        self.censoring.keys().copied().collect()
    }

    pub fn variant(&self, variant: CensoringVariant) -> Result<ScenarioSpec> {
        let censoring = self.censoring.get(&variant).ok_or_else(|| {
            Error::Scenario(format!("scenario {} has no {variant} censoring", self.name))
        })?;
        let k = self.k();
        let spec = ScenarioSpec {
            name: self.name.clone(),
            k,
            failure: self.failure.clone(),
            censoring: censoring.clone(),
            group_fractions: self.fractions.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The first `k` groups of this scenario.
    pub fn restricted(&self, name: &str, k: usize) -> Self {
        Self {
            name: name.into(),
            failure: self.failure[..k].to_vec(),
            fractions: None,
            censoring: self.censoring.iter().map(|(v, c)| (*v, c[..k].to_vec())).collect(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let family: Self = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        if family.censoring.is_empty() {
            return Err(Error::Scenario(format!("{}: no censoring variants given", family.name)));
        }
        for v in family.variants() {
            family.variant(v)?;
        }
        Ok(family)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

fn law(text: &str) -> DistributionSpec {
    DistributionSpec::parse(text).unwrap_or_else(|e| panic!("built-in law `{text}`: {e}"))
}

fn laws(texts: &[&str]) -> Vec<DistributionSpec> {
    texts.iter().map(|t| law(t)).collect()
}

fn family(name: &str, failure: Vec<DistributionSpec>, censoring: [(CensoringVariant, Vec<DistributionSpec>); 4]) -> ScenarioFamily {
    ScenarioFamily {
        name: name.into(),
        failure,
        fractions: None,
        censoring: censoring.into_iter().collect(),
    }
}

fn null(k: usize) -> ScenarioFamily {
    use CensoringVariant::*;
    let mild_first = law("min(exp(0.85), uniform(0, 10))");
    let mild: Vec<DistributionSpec> = (0..k)
        .map(|g| if g < 2 { mild_first.clone() } else { law("uniform(0, 10)") })
        .collect();
    let severe_all = laws(&[
        "min(exp(0.85), uniform(0, 10))",
        "min(exp(0.25), uniform(0, 10))",
        "uniform(0, 10)",
        "lognormal(1.5, 0.5)",
        "exp(1.5)",
    ]);
    family(
        &format!("null-{k}"),
        vec![law("loglogistic(1, 1)"); k],
        [
            (Equal25, vec![law("lognormal(1.1, 0.5)"); k]),
            (Equal50, vec![law("lognormal(0, 0.5)"); k]),
            (UnequalMild, mild),
            (UnequalSevere, severe_all[..k].to_vec()),
        ],
    )
}

fn scenario_d() -> ScenarioFamily {
    use CensoringVariant::*;
    let other = "pwexp([0.38, 1.02, 1.47], [1.5, 0.1, 0.5, 1])";
    family(
        "D-3",
        laws(&["pwexp([0.44, 1.05, 1.47], [0.5, 0.1, 1.5, 1])", other, other]),
        [
            (Equal25, vec![law("uniform(1.1, 3)"); 3]),
            (Equal50, vec![law("uniform(0.1, 2.1)"); 3]),
            (
                UnequalMild,
                laws(&["min(exp(0.5), uniform(0.5, 3.5))", "min(exp(0.5), uniform(0.5, 3.5))", "uniform(0.5, 3.5)"]),
            ),
            (
                UnequalSevere,
                laws(&["min(exp(0.3), uniform(0.5, 3.5))", "min(exp(0.5), uniform(0.5, 3.5))", "uniform(0.5, 3.5)"]),
            ),
        ],
    )
}

fn scenario_j2() -> ScenarioFamily {
    use CensoringVariant::*;
    let other = "pwexp([0.1, 0.45], [1, 1.7, 0.5])";
    family(
        "J2-3",
        laws(&["exp(1)", other, other]),
        [
            (Equal25, vec![law("exp(0.3)"); 3]),
            (Equal50, vec![law("exp(1)"); 3]),
            (
                UnequalMild,
                laws(&["min(exp(0.9), uniform(0, 4))", "min(exp(0.9), uniform(0, 4))", "uniform(0, 4)"]),
            ),
            (
                UnequalSevere,
                laws(&["min(exp(0.9), uniform(0, 4))", "min(exp(0.5), uniform(0, 4))", "uniform(0, 4)"]),
            ),
        ],
    )
}

/// Two-group scenario with equal censoring laws `equal` (25% then 50%) and
/// the unequal pair `min{U(a,b), Exp(theta_g)}`.
fn two_group(name: &str, failure: [DistributionSpec; 2], equal: [DistributionSpec; 2], ab: (f64, f64), theta: (f64, f64)) -> ScenarioFamily {
    use CensoringVariant::*;
    let u = DistributionSpec::Uniform { a: ab.0, b: ab.1 };
    let min_with = |rate: f64| DistributionSpec::MinOf(Box::new(u.clone()), Box::new(DistributionSpec::Exponential { rate }));
    let [e25, e50] = equal;
    family(
        name,
        failure.to_vec(),
        [
            (Equal25, vec![e25.clone(), e25]),
            (Equal50, vec![e50.clone(), e50]),
            (UnequalMild, vec![min_with(theta.0), min_with(theta.1)]),
            (UnequalSevere, vec![min_with(theta.0), u.clone()]),
        ],
    )
}

fn proportional_scenarios() -> Vec<ScenarioFamily> {
    use DistributionSpec::*;
    let ll = || LogLogistic { shape: 1.0, scale: 1.0 };
    let ln = |mu: f64| LogNormal { mu, sigma: 0.5 };
    let e = std::f64::consts::E;
    vec![
        two_group(
            "L",
            [Weibull { shape: 0.849, scale: 20.0 }, Weibull { shape: 0.849, scale: 10.0 }],
            [Weibull { shape: 5.0, scale: 24.0 }, Weibull { shape: 1.5, scale: 12.0 }],
            (0.0, 40.0),
            (0.025, 0.05),
        ),
        two_group(
            "M",
            [
                law("piecewise([0.5], [weibull(4, 1), weibull(2, 1.5)])"),
                law("piecewise([0.5], [weibull(2.2, 1), weibull(1.5, 1.5)])"),
            ],
            [Weibull { shape: 0.9, scale: 5.5 }, Weibull { shape: 0.35, scale: 3.4 }],
            (0.0, 4.5),
            (0.25, 0.14),
        ),
        two_group("N", [Lomax { shape: 0.5f64.exp(), scale: 1.0 }, ll()], [ln(0.75), ln(-0.1)], (0.0, 12.0), (1.5, 0.4)),
        two_group("O", [Lomax { shape: e, scale: 1.0 }, ll()], [ln(-0.6), ln(-1.8)], (0.0, 8.0), (2.0, 0.5)),
        two_group("P", [Lomax { shape: 1.0, scale: 1.0 / e }, ll()], [ln(0.6), ln(-0.5)], (0.0, 8.0), (2.0, 0.5)),
        two_group("Q", [Lomax { shape: e, scale: e }, ll()], [ln(0.7), ln(-0.15)], (0.0, 8.0), (0.9, 0.3)),
    ]
}

/// Every built-in scenario.
pub fn registry() -> Vec<ScenarioFamily> {
    let d = scenario_d();
    let j2 = scenario_j2();
    let mut out = vec![null(2), null(3), null(4), null(5)];
    out.push(d.restricted("D-2", 2));
    out.push(d);
    out.push(j2.restricted("J2-2", 2));
    out.push(j2);
    out.extend(proportional_scenarios());
    out
}

/// Built-in scenario by (case-insensitive) name.
pub fn lookup(name: &str) -> Result<ScenarioFamily> {
    let all = registry();
    let key = name.trim().to_ascii_lowercase();
    let names: Vec<String> = all.iter().map(|f| f.name.clone()).collect();
    all.into_iter()
        .find(|f| f.name.to_ascii_lowercase() == key)
        .ok_or_else(|| Error::Scenario(format!("unknown scenario `{name}`; available: {}", names.join(", "))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_valid() {
        let all = registry();
        assert_eq!(all.len(), 14);
        for f in &all {
            assert_eq!(f.variants(), CensoringVariant::ALL, "{}", f.name);
            for v in CensoringVariant::ALL {
                f.variant(v).unwrap();
            }
        }
    }

    #[test]
    fn lookup_lists_names_on_error() {
        assert_eq!(lookup("d-3").unwrap().k(), 3);
        let err = lookup("Z").unwrap_err().to_string();
        assert!(err.contains("null-3") && err.contains("Q"), "{err}");
    }

    #[test]
    fn d_groups_two_and_three_share_a_law() {
        let d = lookup("D-3").unwrap();
        assert_eq!(d.failure[1], d.failure[2]);
        assert_ne!(d.failure[0], d.failure[1]);
    }

    #[test]
    fn toml_round_trip() {
        for f in registry() {
            let back = ScenarioFamily::from_toml(&f.to_toml()).unwrap();
            assert_eq!(back.name, f.name);
            assert_eq!(back.censoring, f.censoring);
            for (a, b) in back.failure.iter().zip(&f.failure) {
                for t in [0.1, 0.5, 1.0, 3.0] {
                    assert!((a.survival(t) - b.survival(t)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn toml_errors() {
        let missing = "name = \"x\"\nfailure = [\"exp(1)\", \"exp(2)\"]\n[censoring]\n";
        assert!(ScenarioFamily::from_toml(missing).is_err());
        let mismatch = "name = \"x\"\nfailure = [\"exp(1)\", \"exp(2)\"]\n[censoring]\nequal_25 = [\"exp(1)\"]\n";
        assert!(ScenarioFamily::from_toml(mismatch).is_err());
        let bad_law = "name = \"x\"\nfailure = [\"exp(1)\", \"gamma(2)\"]\n[censoring]\nequal_25 = [\"exp(1)\", \"exp(1)\"]\n";
        assert!(ScenarioFamily::from_toml(bad_law).is_err());
    }

    #[test]
    fn variant_names() {
        for v in CensoringVariant::ALL {
            assert_eq!(v.name().parse::<CensoringVariant>().unwrap(), v);
        }
        assert!("equal".parse::<CensoringVariant>().is_err());
    }
}
