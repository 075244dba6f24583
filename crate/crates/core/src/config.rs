//! Study configuration documents (TOML).
//!
//! ```toml
//! kind = "strong"
//! seed = 7
//! samples = 400
//!
//! [mesh]
//! levels = [3, 4, 5, 6, 7]   # h = length · 2^-level
//! reference = 9
//!
//! [noise]
//! kind = "power_decay"
//! rho = 2.0
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{PolynomialDrift, Scheme};
use crate::error::{Error, Result};
use crate::experiments::TestFunctional;
use crate::fem::{ErrorOperator, Mesh1D, MAX_JITTER};
use crate::noise::{CovarianceKind, CovarianceSpec, ImpliedBeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Strong,
    Weak,
    Moments,
    Operators,
    SplittingDt,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Strong => "strong",
            StudyKind::Weak => "weak",
            StudyKind::Moments => "moments",
            StudyKind::Operators => "operators",
            StudyKind::SplittingDt => "splitting_dt",
        }
    }

    fn is_monte_carlo(self) -> bool {
        !matches!(self, StudyKind::Operators)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    #[serde(default)]
    pub seed: u64,
    /// Monte-Carlo sample count `M`.
    #[serde(default = "defaults::samples")]
    pub samples: usize,
    /// Moment order `p` of strong errors.
    #[serde(default = "defaults::moment")]
    pub moment: f64,
    /// Final time `T`.
    #[serde(default = "defaults::one")]
    pub horizon: f64,
    /// Interval length `L`.
    #[serde(default = "defaults::one")]
    pub length: f64,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    /// Weak studies only.
    #[serde(default)]
    pub functional: Option<TestFunctional>,
    /// Operator studies only.
    #[serde(default)]
    pub operators: Option<OperatorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Tested levels, `h = L·2^{−level}`.
    #[serde(default = "defaults::levels")]
    pub levels: Vec<u32>,
    /// Reference level; defaults to two levels below the finest tested one.
    #[serde(default)]
    pub reference: Option<u32>,
    /// Relative node jitter in `[0, 1/6]`; zero keeps meshes uniform.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub jitter_seed: u64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { levels: defaults::levels(), reference: None, jitter: 0.0, jitter_seed: 0 }
    }
}

impl MeshConfig {
    pub fn reference_level(&self) -> u32 {
        self.reference
            .unwrap_or_else(|| self.levels.iter().copied().max().unwrap_or(0) + 2)
    }

    pub fn build(&self, length: f64, level: u32) -> Result<Mesh1D> {
        if self.jitter == 0.0 {
            Mesh1D::dyadic(length, level)
        } else {
            Mesh1D::jittered(length, 1 << level, self.jitter, self.jitter_seed ^ level as u64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    /// One step size for every level.
    Fixed,
    /// `dt = h^{2β}` per level, rounded down to a power of two.
    HSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "defaults::scheme")]
    pub scheme: Scheme,
    #[serde(default = "defaults::policy")]
    pub policy: DtPolicy,
    /// Step size under the fixed policy, `2^{−dt_level}`.
    #[serde(default = "defaults::dt_level")]
    pub dt_level: u32,
    /// Run the dt-halving probe (strong studies).
    #[serde(default = "defaults::yes")]
    pub probe: bool,
    /// Samples used by the probe; defaults to `max(samples/8, 16)`.
    #[serde(default)]
    pub probe_samples: Option<usize>,
    /// Tested step levels of a splitting-dt study, `dt = 2^{−level}`.
    #[serde(default = "defaults::dt_levels")]
    pub dt_levels: Vec<u32>,
    /// Reference step level of a splitting-dt study.
    #[serde(default = "defaults::dt_reference")]
    pub dt_reference: u32,
    /// Mesh level of a splitting-dt study.
    #[serde(default = "defaults::dt_study_mesh")]
    pub mesh_level: u32,
    /// Checkpoint every this many steps (moment studies, trajectories).
    #[serde(default = "defaults::stride")]
    pub checkpoint_stride: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            scheme: defaults::scheme(),
            policy: defaults::policy(),
            dt_level: defaults::dt_level(),
            probe: true,
            probe_samples: None,
            dt_levels: defaults::dt_levels(),
            dt_reference: defaults::dt_reference(),
            mesh_level: defaults::dt_study_mesh(),
            checkpoint_stride: defaults::stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    PowerDecay,
    White,
    Custom,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Joint exact convolutions (uniform meshes only).
    Exact,
    /// Shared projected increments with variance-matched scaling.
    Increment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "defaults::noise_family")]
    pub kind: NoiseFamily,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    /// Regularity index; required for custom noise, checked otherwise.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "defaults::k_trunc")]
    pub k_trunc: usize,
    #[serde(default = "defaults::coupling")]
    pub coupling: Coupling,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            kind: defaults::noise_family(),
            rho: None,
            q: None,
            beta: None,
            k_trunc: defaults::k_trunc(),
            coupling: defaults::coupling(),
        }
    }
}

impl NoiseConfig {
    pub fn spec(&self) -> Result<CovarianceSpec> {
        let path = |f: &str| format!("noise.{f}");
        match self.kind {
            NoiseFamily::PowerDecay => {
                let rho = self.rho.unwrap_or(2.0);
                CovarianceSpec::power_decay(rho, self.k_trunc).map_err(|e| Error::config(path("rho"), e.to_string()))
            }
            NoiseFamily::White => CovarianceSpec::white(self.k_trunc).map_err(|e| Error::config(path("kind"), e.to_string())),
            NoiseFamily::Zero => CovarianceSpec::zero(self.k_trunc).map_err(|e| Error::config(path("kind"), e.to_string())),
            NoiseFamily::Custom => {
                let q = self.q.clone().ok_or_else(|| Error::config(path("q"), "custom noise needs eigenvalues q"))?;
                let beta = self
                    .beta
                    .ok_or_else(|| Error::config(path("beta"), "custom noise needs its regularity index beta"))?;
                CovarianceSpec::new(CovarianceKind::Custom { q, beta }, self.k_trunc)
                    .map_err(|e| Error::config(path("q"), e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    /// `a_0, a_1, …`.
    #[serde(default = "defaults::allen_cahn")]
    pub coeffs: Vec<f64>,
    /// Growth exponent `K`.
    #[serde(default)]
    pub growth: Option<u32>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig { coeffs: defaults::allen_cahn(), growth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// `x0(ξ) = Σ_k c_k sin(kπξ/L)`, projected onto each mesh.
    #[serde(default = "defaults::initial_modes")]
    pub modes: Vec<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { modes: defaults::initial_modes() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    L2,
    Ritz,
    Semigroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorCase {
    pub s: f64,
    pub r: f64,
    pub projection: ProjectionKind,
    /// Time of the semigroup error operator.
    #[serde(default)]
    pub t: Option<f64>,
}

impl OperatorCase {
    pub fn operator(&self) -> ErrorOperator {
        match self.projection {
            ProjectionKind::L2 => ErrorOperator::L2Projection,
            ProjectionKind::Ritz => ErrorOperator::Ritz,
            ProjectionKind::Semigroup => ErrorOperator::Semigroup(self.t.unwrap_or(0.0)),
        }
    }

    /// `r − s`, the predicted order of the projection cases.
    pub fn expected_slope(&self) -> Option<f64> {
        (self.projection != ProjectionKind::Semigroup).then_some(self.r - self.s)
    }

    pub fn label(&self) -> String {
        let which = match self.projection {
            ProjectionKind::L2 => "l2".to_string(),
            ProjectionKind::Ritz => "ritz".to_string(),
            ProjectionKind::Semigroup => format!("semigroup_t{}", self.t.unwrap_or(0.0)),
        };
        format!("{which}_s{}_r{}", self.s, self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub cases: Vec<OperatorCase>,
    /// Spectral truncation; defaults to four times the finest mesh dimension.
    #[serde(default)]
    pub k_max: Option<usize>,
}

mod defaults {
    use super::*;

    pub fn samples() -> usize {
        400
    }
    pub fn moment() -> f64 {
        2.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn yes() -> bool {
        true
    }
    pub fn levels() -> Vec<u32> {
        vec![3, 4, 5, 6, 7]
    }
    pub fn scheme() -> Scheme {
        Scheme::SplittingExactFlow
    }
    pub fn policy() -> DtPolicy {
        DtPolicy::Fixed
    }
    pub fn dt_level() -> u32 {
        10
    }
    pub fn dt_levels() -> Vec<u32> {
        (4..=10).collect()
    }
    pub fn dt_reference() -> u32 {
        14
    }
    pub fn dt_study_mesh() -> u32 {
        6
    }
    pub fn stride() -> usize {
        1
    }
    pub fn noise_family() -> NoiseFamily {
        NoiseFamily::PowerDecay
    }
    pub fn k_trunc() -> usize {
        crate::noise::DEFAULT_K_TRUNC
    }
    pub fn coupling() -> Coupling {
        Coupling::Exact
    }
    pub fn allen_cahn() -> Vec<f64> {
        vec![0.0, 1.0, 0.0, -1.0]
    }
    pub fn initial_modes() -> Vec<f64> {
        vec![1.0, 0.5]
    }
}

/// Minimum Monte-Carlo sample count.
pub const MIN_SAMPLES: usize = 100;

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let cfg: StudyConfig = toml::from_str(text).map_err(|e| {
        let span = e.span().map(|s| format!(" (bytes {}..{})", s.start, s.end)).unwrap_or_default();
        Error::config("document", format!("{}{span}", e.message()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl StudyConfig {
    /// Default configuration of a study kind.
    pub fn new(kind: StudyKind) -> Self {
        StudyConfig {
            kind,
            seed: 0,
            samples: defaults::samples(),
            moment: defaults::moment(),
            horizon: 1.0,
            length: 1.0,
            mesh: MeshConfig::default(),
            time: TimeConfig::default(),
            noise: NoiseConfig::default(),
            drift: DriftConfig::default(),
            initial: InitialConfig::default(),
            functional: None,
            operators: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, reason: String| Err(Error::config(path, reason));
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad("length", format!("must be positive, got {}", self.length));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon", format!("must be positive, got {}", self.horizon));
        }
        if !(self.moment >= 1.0 && self.moment.is_finite()) {
            return bad("moment", format!("moment order must be at least 1, got {}", self.moment));
        }
        if self.kind.is_monte_carlo() && self.samples < MIN_SAMPLES {
            return bad("samples", format!("need at least {MIN_SAMPLES} samples, got {}", self.samples));
        }
        self.drift()?;
        let spec = self.noise.spec()?;
        self.check_beta(&spec)?;
        self.check_mesh()?;
        self.check_time()?;
        if self.initial.modes.iter().any(|c| !c.is_finite()) {
            return bad("initial.modes", "coefficients must be finite".into());
        }
        match (self.kind, &self.functional) {
            (StudyKind::Weak, None) => return bad("functional", "weak studies need a test functional".into()),
            (StudyKind::Weak, Some(f)) => f.validate().map_err(|e| Error::config("functional", e.to_string()))?,
            (_, Some(_)) => return bad("functional", "only weak studies take a test functional".into()),
            _ => {}
        }
        match (self.kind, &self.operators) {
            (StudyKind::Operators, None) => return bad("operators", "operator studies need [[operators.cases]]".into()),
            (StudyKind::Operators, Some(o)) if o.cases.is_empty() => {
                return bad("operators.cases", "at least one case is required".into())
            }
            (StudyKind::Operators, Some(o)) => {
                for (i, c) in o.cases.iter().enumerate() {
                    if c.projection == ProjectionKind::Semigroup && !(c.t.unwrap_or(0.0) > 0.0) {
                        return bad(&format!("operators.cases[{i}].t"), "semigroup cases need t > 0".into());
                    }
                }
            }
            (_, Some(_)) => return bad("operators", "only operator studies take operator cases".into()),
            _ => {}
        }
        if self.kind != StudyKind::Operators
            && self.noise.k_trunc < (1usize << self.finest_level()).saturating_sub(1)
        {
            return bad(
                "noise.k_trunc",
                format!(
                    "truncation {} leaves modes of the finest mesh (dimension {}) undriven",
                    self.noise.k_trunc,
                    (1usize << self.finest_level()) - 1
                ),
            );
        }
        Ok(())
    }

    fn finest_level(&self) -> u32 {
        match self.kind {
            StudyKind::SplittingDt => self.time.mesh_level,
            StudyKind::Operators | StudyKind::Moments => self.mesh.levels.iter().copied().max().unwrap_or(0),
            _ => self.mesh.reference_level(),
        }
    }

    /// Validated drift with its growth exponent.
    pub fn drift(&self) -> Result<PolynomialDrift> {
        let d = PolynomialDrift::new(&self.drift.coeffs).map_err(|e| Error::config("drift.coeffs", e.to_string()))?;
        let default_k = if self.kind == StudyKind::Weak { d.growth_exponent().max(2) } else { d.growth_exponent() };
        let k = self.drift.growth.unwrap_or(default_k);
        if self.kind == StudyKind::Weak && !(2..5).contains(&k) {
            return Err(Error::config(
                "drift.growth",
                format!("the weak-rate estimate requires growth exponent 2 ≤ K < 5, got K = {k}"),
            ));
        }
        d.with_growth_exponent(k).map_err(|e| Error::config("drift.growth", e.to_string()))
    }

    /// Regularity index β of the configured noise.
    pub fn beta(&self) -> Result<f64> {
        Ok(self.noise.spec()?.beta())
    }

    fn check_beta(&self, spec: &CovarianceSpec) -> Result<()> {
        let Some(claimed) = self.noise.beta else { return Ok(()) };
        if !(claimed > 0.0 && claimed <= 1.0) {
            return Err(Error::config("noise.beta", format!("must lie in (0, 1], got {claimed}")));
        }
        match spec.implied_beta() {
            Ok(ImpliedBeta::Attained(b)) if claimed > b + 1e-12 => Err(Error::config(
                "noise.beta",
                format!("claimed beta {claimed} exceeds the implied regularity {b}"),
            )),
            Ok(ImpliedBeta::Supremum(b)) if claimed >= b => Err(Error::config(
                "noise.beta",
                format!("claimed beta {claimed} must stay below the supremum {b}"),
            )),
            _ => Ok(()),
        }
    }

    fn check_mesh(&self) -> Result<()> {
        let m = &self.mesh;
        if !(0.0..=MAX_JITTER).contains(&m.jitter) {
            return Err(Error::config("mesh.jitter", format!("must lie in [0, {MAX_JITTER}], got {}", m.jitter)));
        }
        if self.kind == StudyKind::SplittingDt {
            return self.check_level("time.mesh_level", self.time.mesh_level);
        }
        if m.levels.len() < crate::experiments::MIN_FIT_LEVELS {
            return Err(Error::config(
                "mesh.levels",
                format!("need at least {} levels, got {}", crate::experiments::MIN_FIT_LEVELS, m.levels.len()),
            ));
        }
        let mut sorted = m.levels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != m.levels.len() {
            return Err(Error::config("mesh.levels", "levels must be distinct"));
        }
        for &l in &m.levels {
            self.check_level("mesh.levels", l)?;
        }
        if matches!(self.kind, StudyKind::Strong | StudyKind::Weak) {
            let r = m.reference_level();
            self.check_level("mesh.reference", r)?;
            // h_ref < min h / 2
            if r < sorted[sorted.len() - 1] + 2 {
                return Err(Error::config(
                    "mesh.reference",
                    format!("reference level {r} must be at least two levels finer than {}", sorted[sorted.len() - 1]),
                ));
            }
        }
        Ok(())
    }

    fn check_level(&self, path: &str, l: u32) -> Result<()> {
        if !(1..=14).contains(&l) {
            return Err(Error::config(path, format!("mesh level must lie in 1..=14, got {l}")));
        }
        Ok(())
    }

    fn check_time(&self) -> Result<()> {
        let t = &self.time;
        let divides = |level: u32| {
            let n = self.horizon * 2f64.powi(level as i32);
            (n - n.round()).abs() < 1e-9 * n.max(1.0)
        };
        if !(1..=24).contains(&t.dt_level) || !divides(t.dt_level) {
            return Err(Error::config(
                "time.dt_level",
                format!("dt = 2^-{} must divide the horizon {}", t.dt_level, self.horizon),
            ));
        }
        if t.checkpoint_stride == 0 {
            return Err(Error::config("time.checkpoint_stride", "must be positive"));
        }
        if matches!(t.probe_samples, Some(0)) {
            return Err(Error::config("time.probe_samples", "must be positive"));
        }
        if t.scheme == Scheme::SemiImplicit && self.noise.coupling == Coupling::Exact && self.noise.kind != NoiseFamily::Zero {
            return Err(Error::config(
                "time.scheme",
                "the semi-implicit scheme needs increment coupling (noise.coupling = \"increment\")",
            ));
        }
        if self.kind == StudyKind::SplittingDt {
            if t.dt_levels.len() < crate::experiments::MIN_FIT_LEVELS {
                return Err(Error::config("time.dt_levels", "need at least three step levels"));
            }
            for &l in &t.dt_levels {
                if l >= t.dt_reference {
                    return Err(Error::config(
                        "time.dt_levels",
                        format!("step level {l} must be coarser than the reference {}", t.dt_reference),
                    ));
                }
                if !divides(l) {
                    return Err(Error::config("time.dt_levels", format!("dt = 2^-{l} must divide the horizon")));
                }
            }
            if t.dt_reference > 24 {
                return Err(Error::config("time.dt_reference", "reference level must be at most 24"));
            }
        }
        if t.policy == DtPolicy::HSquared && !matches!(self.kind, StudyKind::Weak | StudyKind::Strong) {
            return Err(Error::config("time.policy", "h_squared applies to strong and weak studies"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, first 16 hex digits.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&canon);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_strong_document_gets_defaults() {
        let c = parse_config("kind = \"strong\"").unwrap();
        assert_eq!(c.horizon, 1.0);
        assert_eq!(c.samples, 400);
        assert_eq!(c.moment, 2.0);
        assert_eq!(c.mesh.reference_level(), 9);
        assert_eq!(c.drift().unwrap(), PolynomialDrift::allen_cahn());
    }

    #[test]
    fn rejects_expanding_cubic() {
        let e = parse_config("kind = \"strong\"\n[drift]\ncoeffs = [0.0, 1.0, 0.0, 1.0]").unwrap_err();
        assert!(e.to_string().contains("one-sided Lipschitz violated"), "{e}");
        assert!(matches!(e, Error::Config { ref path, .. } if path == "drift.coeffs"));
    }

    #[test]
    fn weak_study_rejects_k5() {
        let doc = "kind = \"weak\"\n[functional]\nkind = \"gaussian\"\n[drift]\ngrowth = 5";
        let e = parse_config(doc).unwrap_err();
        assert!(e.to_string().contains("2 ≤ K < 5"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("kind = \"strong\"\nsampels = 10").is_err());
        assert!(parse_config("kind = \"strong\"\n[mesh]\nlevel = [1]").is_err());
    }

    #[test]
    fn structural_checks() {
        assert!(parse_config("kind = \"strong\"\nsamples = 50").is_err());
        assert!(parse_config("kind = \"strong\"\n[mesh]\nlevels = [3,4,5]\nreference = 6").is_err());
        assert!(parse_config("kind = \"strong\"\n[noise]\nkind = \"power_decay\"\nrho = 2.0\nbeta = 1.0").is_ok());
        assert!(parse_config("kind = \"strong\"\n[noise]\nkind = \"white\"\nbeta = 0.5").is_err());
        assert!(parse_config("kind = \"weak\"").is_err());
        assert!(parse_config("kind = \"strong\"\n[noise]\nk_trunc = 64").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse_config("kind = \"strong\"").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
