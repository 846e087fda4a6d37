//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [counterexample]
//! seed = 11
//! samples = 100000
//! ladder = 4, 16, 64
//! h_ladder = 1/256, 1/128
//! ```
//!
//! Section names are experiment names. `seed` and `samples` are required in
//! every section; every other key has a default listed in [`schema`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::wiener::Coupling;

/// Experiment sections in run order.
pub const EXPERIMENTS: [&str; 9] =
    ["isometry", "mollifier", "translate", "counterexample", "theorem21", "l1mode", "corollary42", "transport", "claw"];

const REQUIRED: [&str; 2] = ["seed", "samples"];

const COUPLING_KEYS: [(&str, &str); 3] = [("coupling", "mixture"), ("coupling_scale", "1"), ("coupling_power", "1")];

/// `(key, default)` pairs accepted by a section besides `seed` and
/// `samples`, followed by the reference default for `samples`.
pub fn schema(section: &str) -> Option<(&'static [(&'static str, &'static str)], &'static str)> {
    let s: (&[(&str, &str)], &str) = match section {
        "isometry" => (
            &[("steps", "64"), ("horizon", "1"), ("ladder", "4, 16"), ("paths", "1000"), ("identity_tolerance", "1e-12"), ("z_limit", "3")],
            "100000",
        ),
        "mollifier" => (
            &[("steps", "1024"), ("horizon", "1"), ("rho", "0.2, 0.1, 0.05"), ("tolerance", "1e-8"), ("mass_tolerance", "1e-6")],
            "100",
        ),
        "translate" => (
            &[
                ("sources", "transport, claw"),
                ("cells", "128"),
                ("steps", "2048"),
                ("horizon", "1/16"),
                ("h_ladder", "dyadic"),
                ("transport_ladder", "2, 8, 32"),
                ("claw_ladder", "2, 4, 8, 16"),
                ("ito_ladder", "1, 4, 16"),
                ("min_slope", "0.4"),
                ("uniformity", "1.5"),
            ],
            "1000",
        ),
        "counterexample" => (
            &[("which", "sine, spike"), ("ladder", "4, 16, 64"), ("steps", "1024"), ("tolerance", "0.03")],
            "100000",
        ),
        "theorem21" => (
            &[
                ("family", "weak_in_omega"),
                ("mode", "weak"),
                ("steps", "128"),
                ("horizon", "1"),
                ("ladder", "1, 2, 4, 8, 16"),
                ("rho", "0.2, 0.1, 0.05"),
                ("decomposition_n", "4"),
                ("max_slope", "-0.3"),
                ("max_ratio", "1/3"),
            ],
            "10000",
        ),
        "l1mode" => (
            &[
                ("steps", "64"),
                ("cells", "64"),
                ("ladder", "2, 4, 8, 16, 32"),
                ("mode", "strong"),
                ("p", "3"),
                ("factor", "4"),
                ("max_slope", "-0.3"),
                ("max_ratio", "1/3"),
            ],
            "2000",
        ),
        "corollary42" => (
            &[("steps", "128"), ("cells", "256"), ("ladder", "2, 32"), ("families", "spatial, temporal"), ("max_ratio", "1/4")],
            "10000",
        ),
        "transport" => (
            &[
                ("cells", "128"),
                ("steps", "5120"),
                ("horizon", "1/4"),
                ("refine", "4"),
                ("ladder", "2, 8, 32"),
                ("p", "3"),
                ("max_ratio", "1/3"),
                ("conservation_paths", "4"),
                ("conservation_tolerance", "1e-12"),
            ],
            "200",
        ),
        "claw" => (
            &[
                ("cells", "64"),
                ("steps", "2048"),
                ("horizon", "1/4"),
                ("refine", "2"),
                ("ladder", "2, 4, 8, 16"),
                ("bins", "16"),
                ("measure_replicas", "4"),
                ("max_ratio", "1/3"),
                ("mass_spread", "4"),
                ("shock_cells", "128"),
                ("shock_horizon", "1/2"),
                ("refinement_cells", "64, 128, 256"),
                ("refinement_ratio", "1.5"),
            ],
            "400",
        ),
        _ => return None,
    };
    Some(s)
}

fn uses_coupling(section: &str) -> bool {
    !matches!(section, "mollifier")
}

fn default_of(section: &str, key: &str) -> Option<&'static str> {
    let (keys, samples) = schema(section)?;
    if key == "samples" {
        return Some(samples);
    }
    keys.iter()
        .chain(if uses_coupling(section) { COUPLING_KEYS.iter() } else { [].iter() })
        .find(|(k, _)| *k == key)
        .map(|(_, d)| *d)
}

fn accepted(section: &str) -> Vec<&'static str> {
    let mut keys: Vec<&str> = REQUIRED.to_vec();
    if let Some((extra, _)) = schema(section) {
        keys.extend(extra.iter().map(|(k, _)| *k));
        if uses_coupling(section) {
            keys.extend(COUPLING_KEYS.iter().map(|(k, _)| *k));
        }
    }
    keys
}

/// One experiment section.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    entries: BTreeMap<String, String>,
}

impl Section {
    fn err(&self, key: &str, what: &str, raw: &str) -> Error {
        Error::Config(format!("key `{key}` in [{}] must be {what}, got `{raw}`", self.name))
    }

    /// The configured text for `key`, or its default.
    pub fn raw(&self, key: &str) -> Result<&str> {
        if let Some(v) = self.entries.get(key) {
            return Ok(v);
        }
        default_of(&self.name, key).ok_or_else(|| Error::Config(format!("key `{key}` has no default in [{}]", self.name)))
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    pub fn samples(&self) -> Result<usize> {
        self.usize("samples")
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| self.err(key, "a nonnegative integer", raw))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| self.err(key, "a nonnegative integer", raw))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let raw = self.raw(key)?;
        parse_number(raw).ok_or_else(|| self.err(key, "a number or fraction", raw))
    }

    pub fn str(&self, key: &str) -> Result<String> {
        Ok(self.raw(key)?.to_string())
    }

    pub fn list(&self, key: &str) -> Result<Vec<String>> {
        Ok(split_list(self.raw(key)?))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.raw(key)?;
        split_list(raw)
            .iter()
            .map(|s| parse_number(s).ok_or_else(|| self.err(key, "a list of numbers", raw)))
            .collect()
    }

    pub fn u32_list(&self, key: &str) -> Result<Vec<u32>> {
        let raw = self.raw(key)?;
        let v: Vec<u32> = split_list(raw)
            .iter()
            .map(|s| s.parse().map_err(|_| self.err(key, "a list of positive integers", raw)))
            .collect::<Result<_>>()?;
        if v.is_empty() || v.contains(&0) {
            return Err(self.err(key, "a list of positive integers", raw));
        }
        Ok(v)
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        Ok(self.u32_list(key)?.into_iter().map(|n| n as usize).collect())
    }

    pub fn coupling(&self) -> Result<Coupling> {
        match self.raw("coupling")? {
            "identity" => Ok(Coupling::Identity),
            "mixture" => Ok(Coupling::Mixture { scale: self.f64("coupling_scale")?, power: self.f64("coupling_power")? }),
            other => Err(self.err("coupling", "`mixture` or `identity`", other)),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }
}

fn split_list(raw: &str) -> Vec<String> {
    raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

/// Decimal or `a/b`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (b != 0.0).then_some(a / b);
    }
    s.parse().ok()
}

/// A validated configuration: the experiment sections in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan {
    pub sections: Vec<Section>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn override_seed(&mut self, seed: u64) {
        for s in &mut self.sections {
            s.set("seed", seed);
        }
    }
}

pub fn parse_config(text: &str) -> Result<Plan> {
    let mut plan = Plan::default();
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {lineno}: unterminated section header")))?
                .trim();
            if schema(name).is_none() {
                return Err(Error::Config(format!(
                    "line {lineno}: unknown section [{name}]; accepted: {}",
                    EXPERIMENTS.join(", ")
                )));
            }
            if plan.section(name).is_some() {
                return Err(Error::Config(format!("line {lineno}: section [{name}] appears twice")));
            }
            plan.sections.push(Section { name: name.to_string(), entries: BTreeMap::new() });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = plan
            .sections
            .last_mut()
            .ok_or_else(|| Error::Config(format!("line {lineno}: key `{key}` outside any section")))?;
        let ok = accepted(&section.name);
        if !ok.contains(&key) {
            return Err(Error::Config(format!(
                "line {lineno}: unknown key `{key}` in [{}]; accepted: {}",
                section.name,
                ok.join(", ")
            )));
        }
        if section.entries.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config(format!("line {lineno}: duplicate key `{key}` in [{}]", section.name)));
        }
    }
    for s in &plan.sections {
        for key in REQUIRED {
            if !s.entries.contains_key(key) {
                let hint = match key {
                    "samples" => format!(" (reference value {})", default_of(&s.name, key).unwrap_or("?")),
                    _ => String::new(),
                };
                return Err(Error::Config(format!("missing required key `{key}` in [{}]{hint}", s.name)));
            }
        }
        s.seed()?;
        s.samples()?;
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_plan() {
        let p = parse_config("[isometry]\nseed = 1\nsamples = 200\n").unwrap();
        assert_eq!(p.len(), 1);
        let s = p.section("isometry").unwrap();
        assert_eq!(s.samples().unwrap(), 200);
        assert_eq!(s.usize("steps").unwrap(), 64);
        assert_eq!(s.coupling().unwrap(), Coupling::Mixture { scale: 1.0, power: 1.0 });
    }

    #[test]
    fn fractions_and_lists() {
        let p = parse_config("[translate]\nseed=1\nsamples=10\nh_ladder = 1/256, 1/128, 1/64, 1/32 # lags\n").unwrap();
        let v = p.sections[0].f64_list("h_ladder").unwrap();
        assert_eq!(v, vec![1.0 / 256.0, 1.0 / 128.0, 1.0 / 64.0, 1.0 / 32.0]);
        assert_eq!(p.sections[0].f64("horizon").unwrap(), 1.0 / 16.0);
    }

    #[test]
    fn rejections() {
        let dup = parse_config("[claw]\nseed=1\nseed=2\nsamples=3\n").unwrap_err();
        assert!(dup.to_string().contains("duplicate key `seed`"));
        let neg = parse_config("[claw]\nseed=1\nsamples=-5\n").unwrap_err();
        assert!(neg.to_string().contains("`samples`"), "{neg}");
        let unknown = parse_config("[claw]\nseed=1\nsamples=3\nwidth=2\n").unwrap_err().to_string();
        assert!(unknown.contains("`width`") && unknown.contains("refinement_cells"), "{unknown}");
        let missing = parse_config("[theorem21]\nseed=1\n").unwrap_err().to_string();
        assert!(missing.contains("`samples`") && missing.contains("10000"), "{missing}");
        assert!(parse_config("[nope]\n").is_err());
        assert!(parse_config("seed = 1\n").is_err());
        assert!(parse_config("[claw]\nseed=1\nsamples=1\n[claw]\n").is_err());
        assert!(parse_config("[mollifier]\nseed=1\nsamples=1\ncoupling=identity\n").is_err());
        let bad = parse_config("[claw]\nseed=1\nsamples=1\nladder=2,0\n").unwrap();
        assert!(bad.sections[0].u32_list("ladder").is_err());
    }

    #[test]
    fn empty_config_is_empty_plan() {
        assert!(parse_config("# nothing\n\n").unwrap().is_empty());
    }

    #[test]
    fn every_default_parses() {
        for e in EXPERIMENTS {
            let (keys, samples) = schema(e).unwrap();
            assert!(samples.parse::<usize>().is_ok());
            for (k, d) in keys.iter() {
                assert!(!d.is_empty(), "{e}.{k}");
            }
        }
    }

    proptest! {
        #[test]
        fn fraction_parse(a in -1000i32..1000, b in 1i32..1000) {
            let v = parse_number(&format!("{a}/{b}")).unwrap();
            prop_assert_eq!(v, a as f64 / b as f64);
        }
    }
}
