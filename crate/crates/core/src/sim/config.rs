//! Scenario files (TOML syntax, `.cfg` extension).
//!
//! Every key except `method` has a default mirroring the reference setup:
//! the reference quadratic on the reference path, a hexagon of scale 3,
//! 3000 steps and a start offset of (20, 20) from the source.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ring_consensus, CircularParams, Method, RankPolicy, Scenario};
use crate::error::{Error, Result};
use crate::field::{reference_path, OperatingBox, PathComponent, QuadraticField, Sinusoid, SourcePath};
use crate::formation::{make_hexagon, make_rectangle, FormationSpec, Topology};

pub const DEFAULT_STEPS: usize = 3000;
pub const DEFAULT_OFFSET: [f64; 2] = [20.0, 20.0];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub method: Option<String>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub field: Option<RawField>,
    pub formation: Option<RawFormation>,
    pub naive: Option<RawNaive>,
    pub composite: Option<RawComposite>,
    pub circular: Option<RawCircular>,
    pub initial: Option<RawInitial>,
    pub region: Option<RawRegion>,
    pub output: Option<RawOutput>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawField {
    pub q: Option<Vec<Vec<f64>>>,
    pub zeta: Option<Vec<f64>>,
    pub p: Option<f64>,
    pub path: Option<RawPath>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawPath {
    Named(String),
    Table(RawPathTable),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPathTable {
    pub offset: Option<f64>,
    pub drift: Option<f64>,
    pub terms: Option<Vec<RawSinusoid>>,
    /// One component per coordinate; overrides the shared keys.
    pub coordinates: Option<Vec<RawPathTable>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFormation {
    /// `hexagon`, `rectangle` or `explicit`.
    pub preset: Option<String>,
    pub scale: Option<f64>,
    pub neighbours: Option<Vec<Vec<usize>>>,
    pub positions: Option<Vec<Vec<f64>>>,
    pub displacements: Option<Vec<RawDisplacement>>,
    pub c: Option<f64>,
    pub phi_star: Option<f64>,
}

/// `x̂_ij = value` for `j ∈ N(i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDisplacement {
    pub i: usize,
    pub j: usize,
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNaive {
    pub alpha: Option<f64>,
    /// Radius of the noise ball.
    pub noise: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawComposite {
    pub alpha: Option<f64>,
    pub rank_policy: Option<RankPolicy>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCircular {
    pub agents: Option<usize>,
    pub radius: Option<f64>,
    pub omega: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub gain: Option<f64>,
    pub consensus: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    /// Start offset of the formation centroid (or circle centres) from `c(0)`.
    pub offset: Option<Vec<f64>>,
    /// Seeded uniform perturbation of the offset within this radius.
    pub jitter: Option<f64>,
    /// Explicit start positions; overrides `offset`.
    pub positions: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRegion {
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<String>,
    pub format: Option<OutputFormat>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// A validated scenario plus run settings.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub name: String,
    pub scenario: Scenario,
    pub steps: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    /// The file contents with command-line overrides applied.
    pub raw: RawConfig,
}

impl ScenarioConfig {
    pub fn with_overrides(&self, steps: Option<usize>, seed: Option<u64>) -> Result<Self> {
        let mut raw = self.raw.clone();
        if steps.is_some() {
            raw.steps = steps;
        }
        if seed.is_some() {
            raw.seed = seed;
        }
        build(&self.name, raw)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_config(&name, &text)
}

pub fn parse_config(name: &str, text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))?;
    build(name, raw)
}

/// Validates `raw`, reporting every problem found rather than the first.
pub fn build(name: &str, raw: RawConfig) -> Result<ScenarioConfig> {
    let mut errs = Vec::new();
    let field = build_field(raw.field.as_ref(), &mut errs);
    let dim = field.as_ref().map_or(2, |f| f.dim());
    let method_name = match raw.method.as_deref() {
        None => {
            errs.push("missing field `method` (one of composite, naive, circular)".into());
            None
        }
        Some(m @ ("composite" | "naive" | "circular")) => Some(m),
        Some(other) => {
            errs.push(format!(
                "method: unknown method `{other}` (expected composite, naive or circular)"
            ));
            None
        }
    };
    for (present, section, owner) in [
        (raw.naive.is_some(), "naive", "naive"),
        (raw.composite.is_some(), "composite", "composite"),
        (raw.circular.is_some(), "circular", "circular"),
    ] {
        if present && method_name.is_some_and(|m| m != owner) {
            errs.push(format!(
                "[{section}] given but method is `{}`",
                method_name.unwrap_or("")
            ));
        }
    }
    let steps = raw.steps.unwrap_or(DEFAULT_STEPS);
    let seed = raw.seed.unwrap_or(0);
    let region = build_region(raw.region.as_ref(), dim, &mut errs);

    let needs_formation =
        matches!(method_name, Some("composite")) || (matches!(method_name, Some("naive")) && raw.formation.is_some());
    let formation = if needs_formation {
        field
            .as_ref()
            .and_then(|f| build_formation(raw.formation.as_ref(), f, &mut errs))
    } else {
        if raw.formation.is_some() && method_name == Some("circular") {
            errs.push("[formation] is not used by the circular method".into());
        }
        None
    };

    let offset = initial_offset(raw.initial.as_ref(), dim, seed, &mut errs);
    let explicit_positions = raw
        .initial
        .as_ref()
        .and_then(|i| i.positions.as_ref())
        .map(|ps| vectors("initial.positions", ps, dim, &mut errs));

    let mut method = None;
    let mut initial = Vec::new();
    if let (Some(f), Some(m)) = (field.as_ref(), method_name) {
        let start = f.source(0) + &offset;
        match m {
            "naive" => {
                let n = raw.naive.clone().unwrap_or_default();
                let alpha = n.alpha.unwrap_or(1.0 / f.lipschitz());
                positive("naive.alpha", alpha, &mut errs);
                if alpha > 1.0 / f.lipschitz() * (1.0 + 1e-12) {
                    errs.push(format!("naive.alpha = {alpha} exceeds 1/L_f = {}", 1.0 / f.lipschitz()));
                }
                let noise = n.noise.unwrap_or(0.0);
                if !(noise >= 0.0 && noise.is_finite()) {
                    errs.push("naive.noise must be finite and ≥ 0".into());
                }
                method = Some(Method::Naive {
                    alpha,
                    noise_bound: noise,
                    seed,
                });
                initial = match (&explicit_positions, &formation) {
                    (Some(Some(ps)), _) => ps.clone(),
                    (_, Some(form)) => form.placed_at(&start),
                    _ => vec![start.clone()],
                };
            }
            "composite" => {
                let c = raw.composite.clone().unwrap_or_default();
                if let Some(form) = &formation {
                    let lf = f.lipschitz();
                    if let Ok((l_phi, _)) = form.lipschitz_pl_constants(lf) {
                        let alpha = c.alpha.unwrap_or(1.0 / (lf + l_phi));
                        positive("composite.alpha", alpha, &mut errs);
                        if alpha > 1.0 / (lf + l_phi) * (1.0 + 1e-12) {
                            errs.push(format!(
                                "composite.alpha = {alpha} exceeds 1/(L_f + L_phi) = {}",
                                1.0 / (lf + l_phi)
                            ));
                        }
                        method = Some(Method::Composite {
                            alpha,
                            policy: c.rank_policy.unwrap_or_default(),
                        });
                    }
                    initial = match &explicit_positions {
                        Some(Some(ps)) => {
                            if ps.len() != form.len() {
                                errs.push(format!(
                                    "initial.positions has {} entries, formation has {} agents",
                                    ps.len(),
                                    form.len()
                                ));
                            }
                            ps.clone()
                        }
                        _ => form.placed_at(&start),
                    };
                }
            }
            _ => {
                let c = raw.circular.clone().unwrap_or_default();
                if dim != 2 {
                    errs.push("the circular method needs a two-dimensional field".into());
                }
                let agents = c.agents.unwrap_or(6);
                if agents == 0 {
                    errs.push("circular.agents must be at least 1".into());
                }
                let consensus = match &c.consensus {
                    Some(rows) => matrix("circular.consensus", rows, &mut errs),
                    None => Some(ring_consensus(agents)),
                };
                if let Some(p) = consensus {
                    let params = CircularParams {
                        radius: c.radius.unwrap_or(3.0),
                        omega: c.omega.unwrap_or(1.0),
                        epsilon: c.epsilon.unwrap_or(0.5),
                        alpha: c.alpha.unwrap_or(1.0),
                        gain: c.gain.unwrap_or(1.0),
                        consensus: p,
                    };
                    if let Err(e) = params.validate(agents) {
                        errs.push(format!("circular: {e}"));
                    }
                    method = Some(Method::Circular(params));
                }
                initial = match &explicit_positions {
                    Some(Some(ps)) => ps.clone(),
                    _ => vec![start.clone(); agents],
                };
            }
        }
    }

    if let Some(r) = &region {
        if let Some(bad) = initial.iter().position(|x| !r.contains(x)) {
            errs.push(format!(
                "initial position of agent {bad} lies outside the operating region"
            ));
        }
    }

    let out = raw.output.clone().unwrap_or_default();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    Ok(ScenarioConfig {
        name: name.to_string(),
        scenario: Scenario {
            field: field.expect("validated"),
            formation,
            method: method.expect("validated"),
            initial,
            region: region.expect("validated"),
        },
        steps,
        seed,
        out_dir: PathBuf::from(out.dir.unwrap_or_else(|| format!("out/{name}"))),
        format: out.format.unwrap_or_default(),
        raw,
    })
}

fn positive(key: &str, v: f64, errs: &mut Vec<String>) {
    if !(v > 0.0) || !v.is_finite() {
        errs.push(format!("{key} must be positive and finite"));
    }
}

fn vector(key: &str, v: &[f64], dim: usize, errs: &mut Vec<String>) -> Option<DVector<f64>> {
    if v.len() != dim {
        errs.push(format!("{key} has length {}, expected {dim}", v.len()));
        return None;
    }
    if v.iter().any(|x| !x.is_finite()) {
        errs.push(format!("{key} has non-finite entries"));
        return None;
    }
    Some(DVector::from_row_slice(v))
}

fn vectors(key: &str, rows: &[Vec<f64>], dim: usize, errs: &mut Vec<String>) -> Option<Vec<DVector<f64>>> {
    let before = errs.len();
    let out: Vec<_> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| vector(&format!("{key}[{i}]"), r, dim, errs))
        .collect();
    (errs.len() == before).then_some(out)
}

fn matrix(key: &str, rows: &[Vec<f64>], errs: &mut Vec<String>) -> Option<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        errs.push(format!("{key} must be a non-empty rectangular matrix"));
        return None;
    }
    Some(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn reference_q() -> Vec<Vec<f64>> {
    vec![vec![2.66, -0.36], vec![-0.35, 1.74]]
}

fn build_field(raw: Option<&RawField>, errs: &mut Vec<String>) -> Option<QuadraticField> {
    let raw = raw.cloned().unwrap_or_default();
    let q_rows = raw.q.unwrap_or_else(reference_q);
    let q = matrix("field.q", &q_rows, errs)?;
    if q.nrows() != q.ncols() {
        errs.push(format!("field.q must be square, got {}x{}", q.nrows(), q.ncols()));
        return None;
    }
    let d = q.nrows();
    let zeta = match raw.zeta {
        Some(z) => vector("field.zeta", &z, d, errs)?,
        None if d == 2 => DVector::from_vec(vec![-1.28, 4.66]),
        None => {
            errs.push("missing field `field.zeta` (required when field.q is not 2x2)".into());
            return None;
        }
    };
    let p = raw.p.unwrap_or(6.26);
    let path = match raw.path {
        None => reference_path(),
        Some(RawPath::Named(n)) => match n.as_str() {
            "reference" => reference_path(),
            "static" => SourcePath::fixed_at_origin(),
            other => {
                errs.push(format!(
                    "field.path: unknown preset `{other}` (expected reference or static)"
                ));
                return None;
            }
        },
        Some(RawPath::Table(t)) => match &t.coordinates {
            Some(cs) => {
                if cs.len() != d {
                    errs.push(format!("field.path.coordinates has {} entries, expected {d}", cs.len()));
                    return None;
                }
                SourcePath::PerCoordinate(cs.iter().map(path_component).collect())
            }
            None => SourcePath::Shared(path_component(&t)),
        },
    };
    match QuadraticField::new(q, zeta, p, path) {
        Ok(f) => Some(f),
        Err(e) => {
            errs.push(format!("field: {e}"));
            None
        }
    }
}

fn path_component(t: &RawPathTable) -> PathComponent {
    PathComponent {
        offset: t.offset.unwrap_or(0.0),
        drift: t.drift.unwrap_or(0.0),
        terms: t
            .terms
            .iter()
            .flatten()
            .map(|s| Sinusoid {
                amplitude: s.amplitude,
                frequency: s.frequency,
                phase: s.phase,
            })
            .collect(),
    }
}

fn build_region(raw: Option<&RawRegion>, dim: usize, errs: &mut Vec<String>) -> Option<OperatingBox> {
    let raw = raw.cloned().unwrap_or_default();
    let lo = raw.lo.unwrap_or_else(|| vec![-60.0; dim]);
    let hi = raw.hi.unwrap_or_else(|| vec![90.0; dim]);
    let lo = vector("region.lo", &lo, dim, errs)?;
    let hi = vector("region.hi", &hi, dim, errs)?;
    match OperatingBox::new(lo, hi) {
        Ok(b) => Some(b),
        Err(e) => {
            errs.push(format!("region: {e}"));
            None
        }
    }
}

fn initial_offset(raw: Option<&RawInitial>, dim: usize, seed: u64, errs: &mut Vec<String>) -> DVector<f64> {
    let raw = raw.cloned().unwrap_or_default();
    let base = match raw.offset {
        Some(o) => vector("initial.offset", &o, dim, errs).unwrap_or_else(|| DVector::zeros(dim)),
        None if dim == 2 => DVector::from_row_slice(&DEFAULT_OFFSET),
        None => DVector::from_element(dim, DEFAULT_OFFSET[0]),
    };
    match raw.jitter {
        None => base,
        Some(r) if r >= 0.0 && r.is_finite() => {
            // rejection sampling in the unit ball keeps the draw portable
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = loop {
                let u = DVector::<f64>::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                if u.norm_squared() <= 1.0 {
                    break u;
                }
            };
            base + u * r
        }
        Some(_) => {
            errs.push("initial.jitter must be finite and ≥ 0".into());
            base
        }
    }
}

fn build_formation(
    raw: Option<&RawFormation>,
    field: &QuadraticField,
    errs: &mut Vec<String>,
) -> Option<FormationSpec> {
    let raw = raw.cloned().unwrap_or_default();
    let dim = field.dim();
    let preset = raw.preset.clone().unwrap_or_else(|| "hexagon".into());
    let scale = raw.scale.unwrap_or(3.0);
    let built = match preset.as_str() {
        "hexagon" | "rectangle" => {
            if dim != 2 {
                errs.push(format!(
                    "formation preset `{preset}` is two-dimensional but the field has dimension {dim}"
                ));
                return None;
            }
            if raw.neighbours.is_some() || raw.positions.is_some() || raw.displacements.is_some() {
                errs.push(format!(
                    "formation preset `{preset}` takes only `scale`, `c` and `phi_star`"
                ));
            }
            if preset == "hexagon" {
                make_hexagon(scale)
            } else {
                make_rectangle(scale)
            }
        }
        "explicit" => {
            let Some(lists) = raw.neighbours.clone() else {
                errs.push("missing field `formation.neighbours` for an explicit formation".into());
                return None;
            };
            let topo = match Topology::from_neighbour_lists(lists) {
                Ok(t) => t,
                Err(e) => {
                    errs.push(format!("formation: {e}"));
                    return None;
                }
            };
            match (&raw.positions, &raw.displacements) {
                (Some(ps), None) => {
                    let ps = vectors("formation.positions", ps, dim, errs)?;
                    if ps.len() != topo.len() {
                        errs.push(format!(
                            "formation.positions has {} entries, formation.neighbours has {}",
                            ps.len(),
                            topo.len()
                        ));
                        return None;
                    }
                    FormationSpec::from_positions(topo, &ps)
                }
                (None, Some(ds)) => {
                    let mut map = BTreeMap::new();
                    for (idx, d) in ds.iter().enumerate() {
                        if let Some(v) = vector(&format!("formation.displacements[{idx}].value"), &d.value, dim, errs) {
                            map.insert((d.i, d.j), v);
                        }
                    }
                    FormationSpec::new(topo, dim, map)
                }
                _ => {
                    errs.push("an explicit formation needs exactly one of `positions` or `displacements`".into());
                    return None;
                }
            }
        }
        other => {
            errs.push(format!(
                "formation.preset: unknown preset `{other}` (expected hexagon, rectangle or explicit)"
            ));
            return None;
        }
    };
    let form = match built {
        Ok(f) => f,
        Err(e) => {
            errs.push(format!("formation: {e}"));
            return None;
        }
    };
    let (mu_f, lf) = field.eigen_bounds();
    let c = raw.c.unwrap_or(2.0 / mu_f);
    if !(c > 1.0 / mu_f) {
        errs.push(format!("formation.c = {c} must exceed 1/mu_f = {}", 1.0 / mu_f));
    }
    if let Err(e) = form.lipschitz_pl_constants(lf) {
        errs.push(format!("formation: {e}"));
    }
    let phi_star = match raw.phi_star {
        Some(v) if v >= 0.0 => v,
        Some(_) => {
            errs.push("formation.phi_star must be ≥ 0".into());
            0.0
        }
        None => match form.phi_star_from_error_bound(lf, c, form.ideal_positions()) {
            Ok(v) => v,
            Err(e) => {
                errs.push(format!("formation: cannot derive phi_star ({e}); set it explicitly"));
                0.0
            }
        },
    };
    Some(form.with_constants(phi_star, c))
}
