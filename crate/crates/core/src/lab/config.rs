//! Suite configuration: a JSON document laid over per-suite defaults.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bsde::min_steps_for;

use super::report::Format;
use super::spec::{ClaimExpr, GeneratorSpec};
use super::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Equivalence,
    Divergence,
    Rotation,
}

impl SuiteKind {
    pub fn name(&self) -> &'static str {
        match self {
            SuiteKind::Equivalence => "equivalence",
            SuiteKind::Divergence => "divergence",
            SuiteKind::Rotation => "rotation",
        }
    }
}

impl std::str::FromStr for SuiteKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        match s {
            "equivalence" => Ok(SuiteKind::Equivalence),
            "divergence" => Ok(SuiteKind::Divergence),
            "rotation" => Ok(SuiteKind::Rotation),
            other => Err(LabError::Config(format!("unknown suite `{other}`"))),
        }
    }
}

/// Witness claims used when `claims` is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Witness {
    /// `n` in `I{W_T >= -n}` and `I{0 >= W_T >= -n}`; the 2-D pair uses `W^1 >= n`.
    pub level: f64,
    /// Mixing weight of the 2-D pair.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Final `|E_g - C_g|` allowed by the equivalence verdict.
    pub oracle: f64,
    /// Below this a gap counts as exact.
    pub exactness: f64,
    /// Choquet property checks.
    pub property: f64,
    /// Relative change allowed on the last doubling of a divergence gap.
    pub stability: f64,
    /// A divergence gap must exceed this multiple of the reference gap.
    pub divergence_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { oracle: 5e-3, exactness: 1e-12, property: 1e-10, stability: 0.2, divergence_factor: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub suite: SuiteKind,
    pub dimension: usize,
    pub horizon: f64,
    pub steps: Vec<usize>,
    pub generator: String,
    /// Linear driver whose gaps calibrate the divergence threshold.
    pub reference_generator: String,
    /// Claim specs; empty means the witness family.
    pub claims: Vec<String>,
    pub witness: Witness,
    /// Unit direction for the rotation suite.
    pub direction: Vec<f64>,
    pub tolerances: Tolerances,
    pub output: Option<String>,
    pub format: Format,
}

impl SuiteConfig {
    pub fn defaults(suite: SuiteKind, dimension: usize) -> Self {
        let dimension = if suite == SuiteKind::Rotation { 2 } else { dimension };
        let (generator, reference) = match (suite, dimension) {
            (SuiteKind::Equivalence, 1) => ("linear:0.3", "linear:0.3"),
            (SuiteKind::Equivalence, _) => ("linear2:0.2,0.4", "linear2:0.2,0.4"),
            (SuiteKind::Divergence, 1) => ("abs:0.5", "linear:0.5"),
            (SuiteKind::Divergence, _) => ("euclid:0.5", "linear2:0.2,0.4"),
            (SuiteKind::Rotation, _) => ("euclid:0.5", "linear2:0.2,0.4"),
        };
        let steps = match (suite, dimension) {
            (SuiteKind::Rotation, _) => vec![50, 100, 200, 400],
            (_, 1) => vec![100, 200, 400],
            _ => vec![50, 100, 200],
        };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            suite,
            dimension,
            horizon: 1.0,
            steps,
            generator: generator.to_string(),
            reference_generator: reference.to_string(),
            claims: if suite == SuiteKind::Rotation { vec!["ind(w1>=0)".into(), "coord(1)".into()] } else { Vec::new() },
            witness: Witness { level: 1.0, lambda: 0.5 },
            direction: vec![h, h],
            tolerances: Tolerances::default(),
            output: None,
            format: Format::Csv,
        }
    }

    /// Parses a JSON document; absent fields take the defaults for its
    /// `suite` and `dimension`.
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let overlay: Value = serde_json::from_str(text).map_err(|e| LabError::Config(format!("config: {e}")))?;
        let Value::Object(fields) = overlay else {
            return Err(LabError::Config("config must be a JSON object".into()));
        };
        let suite: SuiteKind = match fields.get("suite") {
            Some(Value::String(s)) => s.parse()?,
            Some(other) => return Err(LabError::Config(format!("`suite` must be a string, got {other}"))),
            None => return Err(LabError::Config("config needs a `suite` field".into())),
        };
        let dimension = match fields.get("dimension") {
            Some(v) => v.as_u64().ok_or_else(|| LabError::Config(format!("`dimension` must be 1 or 2, got {v}")))? as usize,
            None => 1,
        };
        let mut merged = serde_json::to_value(Self::defaults(suite, dimension)).expect("defaults serialize");
        merge(&mut merged, Value::Object(fields));
        let config: Self = serde_json::from_value(merged).map_err(|e| LabError::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn generator_spec(&self) -> Result<GeneratorSpec, LabError> {
        self.generator.parse()
    }

    pub fn reference_spec(&self) -> Result<GeneratorSpec, LabError> {
        self.reference_generator.parse()
    }

    /// Claim specs with the witness family filled in.
    pub fn claim_specs(&self) -> Vec<String> {
        if !self.claims.is_empty() {
            return self.claims.clone();
        }
        let n = self.witness.level;
        if self.dimension == 1 {
            vec![format!("sum(ind(w1>={}),ind(0>=w1>={}))", -n, -n)]
        } else {
            let l = self.witness.lambda;
            vec![format!("sum(scale({},ind(w1>={n})),scale({l},sum(ind(w1>={n}),ind(w2>=0))))", 1.0 - l)]
        }
    }

    pub fn claim_exprs(&self) -> Result<Vec<ClaimExpr>, LabError> {
        self.claim_specs().iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Config(m));
        if !(1..=2).contains(&self.dimension) {
            return bad(format!("dimension must be 1 or 2, got {}", self.dimension));
        }
        if self.suite == SuiteKind::Rotation && self.dimension != 2 {
            return bad("the rotation suite runs on a 2-D lattice".into());
        }
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.steps.is_empty() || self.steps[0] == 0 || self.steps.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("step ladder must be positive and strictly increasing, got {:?}", self.steps));
        }
        if !(self.witness.level > 0.0 && self.witness.level.is_finite()) {
            return bad(format!("witness level must be positive, got {}", self.witness.level));
        }
        if !(self.witness.lambda > 0.0 && self.witness.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.witness.lambda));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("oracle", t.oracle),
            ("exactness", t.exactness),
            ("property", t.property),
            ("stability", t.stability),
            ("divergence_factor", t.divergence_factor),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("tolerance `{name}` must be finite and >= 0, got {v}"));
            }
        }
        let claim_dim = if self.suite == SuiteKind::Rotation { 1 } else { self.dimension };
        for e in self.claim_exprs()? {
            if e.max_coordinate() > claim_dim {
                return bad(format!("claim `{e}` uses w{} on a {claim_dim}-dimensional state", e.max_coordinate()));
            }
        }
        if self.suite == SuiteKind::Rotation {
            let norm = self.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if self.direction.len() != 2 || (norm - 1.0).abs() > 1e-12 {
                return bad(format!("direction must be a unit vector in the plane, got {:?}", self.direction));
            }
        }
        let mut generators = vec![("generator", self.generator_spec()?)];
        if self.suite == SuiteKind::Divergence {
            let r = self.reference_spec()?;
            if !r.is_linear() {
                return bad(format!("reference generator `{r}` must be linear"));
            }
            generators.push(("reference_generator", r));
        }
        for (name, spec) in generators {
            let g = spec.build(self.dimension, self.horizon)?;
            let need = min_steps_for(g.lipschitz(), self.horizon);
            if self.steps[0] < need {
                return bad(format!("{name} `{spec}` needs N >= {need} for K sqrt(dt) <= 1/2; ladder starts at {}", self.steps[0]));
            }
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
