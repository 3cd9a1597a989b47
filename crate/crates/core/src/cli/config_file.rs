//! Flat `key = value` configuration files.
//!
//! One pair per line, dotted keys, `#` starts a comment. Lists are comma
//! separated; stratum counts are `r1:r0` items.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{MisfitError, Result};
use crate::families::DensityFamily;
use crate::mixture_lik::AssumedMixing;
use crate::scenarios::{DispersionModel, GlmFamily, ScenarioConfig, ScenarioKind, WDesign};

/// Key/value pairs of a config file, sorted by key.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| MisfitError::Config(format!("line {}: expected `key = value`", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(MisfitError::Config(format!("line {}: empty key", no + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(MisfitError::Config(format!("line {}: duplicate key `{k}`", no + 1)));
        }
    }
    Ok(map)
}

/// SHA-256 of the sorted, whitespace-normalized pairs; independent of key
/// order, comments and blank lines.
pub fn digest(text: &str) -> Result<String> {
    let canonical: String = parse_pairs(text)?.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

struct Pairs {
    map: BTreeMap<String, String>,
}

impl Pairs {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| MisfitError::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.parse(key)?.ok_or_else(|| MisfitError::Config(format!("missing key `{key}`")))
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => float_list(key, &v).map(Some),
        }
    }
}

fn float_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(vec![]);
    }
    v.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| MisfitError::Config(format!("`{key}`: cannot parse `{x}`"))))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_true_mixing(p: &mut Pairs) -> Result<Option<DensityFamily>> {
    let Some(kind) = p.take("mixing.true.kind") else { return Ok(None) };
    let f = match kind.as_str() {
        "lognormal" => DensityFamily::LogNormal {
            log_mean: p.require("mixing.true.log_mean")?,
            log_sd: p.require("mixing.true.log_sd")?,
        },
        "gamma" => DensityFamily::Gamma { shape: p.require("mixing.true.shape")?, rate: p.require("mixing.true.rate")? },
        "normal" => DensityFamily::Normal { mean: p.require("mixing.true.mean")?, var: p.require("mixing.true.var")? },
        "exponential" => DensityFamily::Exponential { rate: p.require("mixing.true.rate")? },
        "atoms" => DensityFamily::DiscreteAtoms {
            points: p.list("mixing.true.points")?.ok_or_else(|| MisfitError::Config("missing `mixing.true.points`".into()))?,
            weights: p
                .list("mixing.true.weights")?
                .ok_or_else(|| MisfitError::Config("missing `mixing.true.weights`".into()))?,
        },
        other => return Err(MisfitError::Config(format!("`mixing.true.kind`: unknown family `{other}`"))),
    };
    Ok(Some(f))
}

fn true_mixing_pairs(f: &DensityFamily) -> Vec<(&'static str, String)> {
    match f {
        DensityFamily::LogNormal { log_mean, log_sd } => vec![
            ("mixing.true.kind", "lognormal".into()),
            ("mixing.true.log_mean", log_mean.to_string()),
            ("mixing.true.log_sd", log_sd.to_string()),
        ],
        DensityFamily::Gamma { shape, rate } => vec![
            ("mixing.true.kind", "gamma".into()),
            ("mixing.true.shape", shape.to_string()),
            ("mixing.true.rate", rate.to_string()),
        ],
        DensityFamily::Normal { mean, var } => vec![
            ("mixing.true.kind", "normal".into()),
            ("mixing.true.mean", mean.to_string()),
            ("mixing.true.var", var.to_string()),
        ],
        DensityFamily::Exponential { rate } => {
            vec![("mixing.true.kind", "exponential".into()), ("mixing.true.rate", rate.to_string())]
        }
        DensityFamily::DiscreteAtoms { points, weights } => vec![
            ("mixing.true.kind", "atoms".into()),
            ("mixing.true.points", join(points)),
            ("mixing.true.weights", join(weights)),
        ],
        // not accepted by the parser; written for completeness
        DensityFamily::Poisson { mean } => {
            vec![("mixing.true.kind", "poisson".into()), ("mixing.true.mean", mean.to_string())]
        }
        DensityFamily::NegativeBinomialMarginal { size, prob } => vec![
            ("mixing.true.kind", "negative_binomial".into()),
            ("mixing.true.size", size.to_string()),
            ("mixing.true.prob", prob.to_string()),
        ],
    }
}

fn assumed_name(m: AssumedMixing) -> &'static str {
    match m {
        AssumedMixing::Gamma => "gamma",
        AssumedMixing::GammaMeanShape => "gamma_mean_shape",
        AssumedMixing::LogNormal => "lognormal",
        AssumedMixing::Normal => "normal",
        AssumedMixing::PointMass => "point_mass",
    }
}

fn assumed_from(s: &str) -> Result<AssumedMixing> {
    [
        AssumedMixing::Gamma,
        AssumedMixing::GammaMeanShape,
        AssumedMixing::LogNormal,
        AssumedMixing::Normal,
        AssumedMixing::PointMass,
    ]
    .into_iter()
    .find(|m| assumed_name(*m) == s)
    .ok_or_else(|| MisfitError::Config(format!("`mixing.assumed.kind`: unknown family `{s}`")))
}

fn parse_counts(v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(',')
        .map(|item| {
            let bad = || MisfitError::Config(format!("`design.stratum_counts`: expected `r1:r0`, got `{item}`"));
            let (a, b) = item.trim().split_once(':').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

/// Parses and validates a config. Keys not given take the scenario's
/// defaults; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut p = Pairs { map: parse_pairs(text)? };
    let name: String = p.require("scenario.name")?;
    let kind = ScenarioKind::from_name(&name)
        .ok_or_else(|| MisfitError::Config(format!("`scenario.name`: unknown scenario `{name}`")))?;
    let mut c = ScenarioConfig::default_for(kind);
    if let Some(v) = p.parse("scenario.psi_star")? {
        c.psi_star = v;
    }
    if let Some(v) = p.parse("scenario.n")? {
        c.n = v;
    }
    if let Some(v) = p.parse("scenario.reps")? {
        c.reps = v;
    }
    if let Some(v) = p.parse("scenario.seed")? {
        c.seed = v;
    }
    if let Some(f) = parse_true_mixing(&mut p)? {
        c.true_mixing = f;
    }
    if let Some(v) = p.take("mixing.assumed.kind") {
        c.assumed_mixing = assumed_from(&v)?;
    }
    if let Some(v) = p.take("design.stratum_counts") {
        c.stratum_counts = if v.is_empty() || v == "none" { None } else { Some(parse_counts(&v)?) };
    }
    if let Some(v) = p.take("glm.family") {
        c.glm.family =
            GlmFamily::from_name(&v).ok_or_else(|| MisfitError::Config(format!("`glm.family`: unknown `{v}`")))?;
    }
    if let Some(v) = p.parse("glm.intercept")? {
        c.glm.intercept = v;
    }
    if let Some(v) = p.list("glm.lambda_star")? {
        c.glm.lambda_star = v;
    }
    if let Some(v) = p.take("glm.w_design") {
        c.glm.w_design =
            WDesign::from_name(&v).ok_or_else(|| MisfitError::Config(format!("`glm.w_design`: unknown `{v}`")))?;
    }
    if let Some(v) = p.parse("glm.rho")? {
        c.glm.rho = v;
    }
    if let Some(v) = p.take("glm.dispersion") {
        c.glm.dispersion = match v.as_str() {
            "fixed" => DispersionModel::Fixed {
                a: p.parse("glm.dispersion.a")?.unwrap_or(0.0),
                b: p.parse("glm.dispersion.b")?.unwrap_or(0.0),
            },
            "constant" => DispersionModel::Constant,
            "log_linear" => DispersionModel::LogLinear,
            other => return Err(MisfitError::Config(format!("`glm.dispersion`: unknown `{other}`"))),
        };
    }
    if let Some(v) = p.parse("glm.true_dispersion_slope")? {
        c.glm.true_dispersion_slope = v;
    }
    if let Some(v) = p.parse("rotation.probes")? {
        c.rotation.probes = v;
    }
    if let Some(v) = p.parse("rotation.perturbed")? {
        c.rotation.perturbed = v;
    }
    if let Some(v) = p.parse("rotation.concentration")? {
        c.rotation.concentration = v;
    }
    if let Some(v) = p.take("rotation.psi") {
        c.rotation.psi = if v.is_empty() || v == "none" {
            None
        } else {
            Some(v.parse().map_err(|_| MisfitError::Config(format!("`rotation.psi`: cannot parse `{v}`")))?)
        };
    }
    if let Some(v) = p.list("check.levels")? {
        c.check.levels = v;
    }
    if let Some(v) = p.parse("check.tol")? {
        c.check.tol = v;
    }
    if let Some(v) = p.parse("check.quadrature_level")? {
        c.check.quadrature_level = v;
    }
    if let Some(v) = p.parse("check.in_simulate")? {
        c.check.in_simulate = v;
    }
    if let Some(v) = p.list("orthogonalize.psi_grid")? {
        c.ortho.psi_grid = v;
    }
    if let Some(v) = p.list("orthogonalize.lambda0")? {
        c.ortho.lambda0 = v;
    }
    if let Some(k) = p.map.keys().next() {
        return Err(MisfitError::Config(format!("unknown key `{k}`")));
    }
    c.validate()?;
    Ok(c)
}

/// Writes every field of `c`, so that [`parse_config`] restores it exactly.
pub fn serialize_config(c: &ScenarioConfig) -> String {
    let mut out: Vec<(&str, String)> = vec![
        ("scenario.name", c.scenario.name().into()),
        ("scenario.psi_star", c.psi_star.to_string()),
        ("scenario.n", c.n.to_string()),
        ("scenario.reps", c.reps.to_string()),
        ("scenario.seed", c.seed.to_string()),
    ];
    out.extend(true_mixing_pairs(&c.true_mixing));
    out.push(("mixing.assumed.kind", assumed_name(c.assumed_mixing).into()));
    out.push((
        "design.stratum_counts",
        match &c.stratum_counts {
            None => "none".into(),
            Some(v) => v.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(","),
        },
    ));
    let g = &c.glm;
    out.push(("glm.family", g.family.name().into()));
    out.push(("glm.intercept", g.intercept.to_string()));
    out.push(("glm.lambda_star", join(&g.lambda_star)));
    out.push(("glm.w_design", g.w_design.name().into()));
    out.push(("glm.rho", g.rho.to_string()));
    match g.dispersion {
        DispersionModel::Fixed { a, b } => {
            out.push(("glm.dispersion", "fixed".into()));
            out.push(("glm.dispersion.a", a.to_string()));
            out.push(("glm.dispersion.b", b.to_string()));
        }
        DispersionModel::Constant => out.push(("glm.dispersion", "constant".into())),
        DispersionModel::LogLinear => out.push(("glm.dispersion", "log_linear".into())),
    }
    out.push(("glm.true_dispersion_slope", g.true_dispersion_slope.to_string()));
    out.push(("rotation.probes", c.rotation.probes.to_string()));
    out.push(("rotation.perturbed", c.rotation.perturbed.to_string()));
    out.push(("rotation.concentration", c.rotation.concentration.to_string()));
    out.push(("rotation.psi", c.rotation.psi.map_or("none".into(), |v| v.to_string())));
    out.push(("check.levels", join(&c.check.levels)));
    out.push(("check.tol", c.check.tol.to_string()));
    out.push(("check.quadrature_level", c.check.quadrature_level.to_string()));
    out.push(("check.in_simulate", c.check.in_simulate.to_string()));
    out.push(("orthogonalize.psi_grid", join(&c.ortho.psi_grid)));
    out.push(("orthogonalize.lambda0", join(&c.ortho.lambda0)));
    out.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_for_every_scenario() {
        for k in ScenarioKind::ALL {
            let c = ScenarioConfig::default_for(k);
            assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c, "{k:?}");
        }
        let mut c = ScenarioConfig::default_for(ScenarioKind::ExpPairsSymmetric);
        c.true_mixing = DensityFamily::Gamma { shape: 0.1 + 0.2, rate: 1.0 / 3.0 };
        c.ortho.lambda0 = vec![2.0, 0.7];
        assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
    }

    #[test]
    fn digest_ignores_order_comments_and_spacing() {
        let a = "scenario.name = normal_pairs\nscenario.n = 10\n";
        let b = "# comment\nscenario.n=10   # trailing\n\n  scenario.name =normal_pairs\n";
        assert_eq!(digest(a).unwrap(), digest(b).unwrap());
        assert_ne!(digest(a).unwrap(), digest("scenario.name = normal_pairs\nscenario.n = 11\n").unwrap());
    }

    #[test]
    fn bad_files_are_rejected() {
        for text in [
            "scenario.n = 3\n",
            "scenario.name = nope\n",
            "scenario.name = normal_pairs\nscenario.bogus = 1\n",
            "scenario.name = normal_pairs\nscenario.n = 0\n",
            "scenario.name = normal_pairs\nscenario.n = -4\n",
            "scenario.name = normal_pairs\nno equals sign\n",
            "scenario.name = normal_pairs\nscenario.name = normal_pairs\n",
            "scenario.name = poisson_two_group\ndesign.stratum_counts = 1:0\n",
        ] {
            assert!(parse_config(text).is_err(), "{text}");
        }
    }

    proptest! {
        #[test]
        fn floats_round_trip(psi in 0.01f64..100.0, mean in -5.0f64..5.0, var in 1e-3f64..10.0, seed in any::<u64>()) {
            let mut c = ScenarioConfig::default_for(ScenarioKind::NormalPairs);
            c.psi_star = psi;
            c.true_mixing = DensityFamily::Normal { mean, var };
            c.seed = seed;
            prop_assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
        }
    }
}
