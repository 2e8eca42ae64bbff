//! Solver configuration, validation and the flat `key=value` text format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::pd::{operator_norm_bound, operator_norm_bound_for};

/// Data fidelity penalty applied to the linearized brightness residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataTerm {
    L1,
    Quadratic,
    /// Reserved; no proximal operator is provided.
    Charbonnier,
    /// Reserved; no proximal operator is provided.
    Lorentzian,
}

/// Projection used for the TV dual variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvProjection {
    /// Clamp each component to `[-gamma, gamma]` (anisotropic TV).
    Componentwise,
    /// Project each per-pixel 2-vector onto the disc of radius `gamma`.
    Isotropic,
}

/// Median filtering applied to the flow after every warp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MedianMode {
    Off,
    /// One pass with the coarse window.
    Single,
    /// Two-stage iterated median (coarse window on a downsampled copy, fine
    /// window after upsampling).
    Iterated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PyramidLevels {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Primal step.
    pub tau: f64,
    /// Dual step.
    pub sigma: f64,
    /// Divide both steps by the operator norm bound `sqrt(8 + 8 max(phi)^2)`
    /// of the current linearization, so that `tau * sigma < 1` is enough
    /// for convergence. When false the steps are used as given.
    pub normalize_steps: bool,
    /// Over-relaxation.
    pub theta: f64,
    /// TV weight.
    pub gamma: f64,
    /// Weight of the edge-weighted divergence penalty.
    pub eta: f64,
    /// Perona-Malik contrast threshold on [0,1] intensities.
    pub kappa: f64,
    /// Blending ratio between warped-frame and first-frame derivatives.
    pub blend_r: f64,
    pub pyramid_spacing: f64,
    pub pyramid_levels: PyramidLevels,
    /// Upper bound applied to the automatic level count.
    pub pyramid_max_levels: usize,
    pub warps_per_level: usize,
    pub pd_max_iter: usize,
    /// Stop once the normalized residual error falls below this value.
    pub pd_tol: f64,
    pub median_mode: MedianMode,
    pub median_coarse: usize,
    pub median_fine: usize,
    pub wmf_enabled: bool,
    /// Standard deviation of the patch Gaussian.
    pub wmf_delta: f64,
    /// Search window half-width.
    pub wmf_radius: usize,
    pub wmf_patch_radius: usize,
    pub wmf_h: f64,
    pub data_term: DataTerm,
    pub tv_projection: TvProjection,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            sigma: 0.9,
            normalize_steps: true,
            theta: 1.0,
            gamma: 1.0,
            eta: 0.01,
            kappa: 1.0,
            blend_r: 0.5,
            pyramid_spacing: 2.0,
            pyramid_levels: PyramidLevels::Auto,
            pyramid_max_levels: 5,
            warps_per_level: 10,
            pd_max_iter: 100,
            pd_tol: 1e-4,
            median_mode: MedianMode::Iterated,
            median_coarse: 5,
            median_fine: 3,
            wmf_enabled: true,
            wmf_delta: 10.0,
            wmf_radius: 7,
            wmf_patch_radius: 2,
            wmf_h: 1.0,
            data_term: DataTerm::L1,
            tv_projection: TvProjection::Componentwise,
        }
    }
}

/// Non-fatal findings from [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigWarning {
    /// `tau * sigma * bound >= 1`: the step sizes do not satisfy the
    /// sufficient convergence condition for the primal-dual iteration.
    StepCondition {
        product: f64,
        norm_bound: f64,
        normalized: bool,
    },
}

impl fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigWarning::StepCondition {
                product,
                norm_bound,
                normalized,
            } => {
                write!(
                    f,
                    "tau*sigma*|K|^2 = {product:.4} >= 1 (|K|^2 <= {norm_bound}) for the configured steps"
                )?;
                if *normalized {
                    write!(f, "; they are divided by |K| at run time")
                } else {
                    write!(f, "; primal-dual convergence is not guaranteed")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckedConfig {
    pub config: SolverConfig,
    pub warnings: Vec<ConfigWarning>,
}

/// Validates `cfg` against the worst-case operator norm (edge weight 1).
pub fn validate_config(cfg: &SolverConfig) -> Result<CheckedConfig> {
    validate_config_with_bound(cfg, operator_norm_bound_for(1.0))
}

/// Validates `cfg`; `norm_bound` is an upper bound on the squared operator
/// norm used for the step-size warning.
pub fn validate_config_with_bound(cfg: &SolverConfig, norm_bound: f64) -> Result<CheckedConfig> {
    let bad = |msg: String| Err(Error::InvalidConfig(msg));
    let positive = [
        ("tau", cfg.tau),
        ("sigma", cfg.sigma),
        ("gamma", cfg.gamma),
        ("eta", cfg.eta),
        ("kappa", cfg.kappa),
        ("wmf_delta", cfg.wmf_delta),
        ("wmf_h", cfg.wmf_h),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return bad(format!("{name} must be positive, got {v}"));
        }
    }
    if !(0.0..=1.0).contains(&cfg.theta) {
        return bad(format!("theta must lie in [0, 1], got {}", cfg.theta));
    }
    if !(cfg.blend_r > 0.0 && cfg.blend_r < 1.0) {
        return bad(format!("blend_r must lie in (0, 1), got {}", cfg.blend_r));
    }
    if !(cfg.pyramid_spacing.is_finite() && cfg.pyramid_spacing > 1.0) {
        return bad(format!(
            "pyramid_spacing must exceed 1, got {}",
            cfg.pyramid_spacing
        ));
    }
    if cfg.pyramid_max_levels == 0 || cfg.pyramid_levels == PyramidLevels::Fixed(0) {
        return bad("pyramid level counts must be at least 1".into());
    }
    if cfg.warps_per_level == 0 || cfg.pd_max_iter == 0 {
        return bad("warps_per_level and pd_max_iter must be at least 1".into());
    }
    if !(cfg.pd_tol.is_finite() && cfg.pd_tol >= 0.0) {
        return bad(format!("pd_tol must be non-negative, got {}", cfg.pd_tol));
    }
    for (name, w) in [
        ("median_coarse", cfg.median_coarse),
        ("median_fine", cfg.median_fine),
    ] {
        if w < 3 || w % 2 == 0 {
            return bad(format!("{name} must be odd and >= 3, got {w}"));
        }
    }
    if cfg.wmf_radius == 0 || cfg.wmf_patch_radius == 0 {
        return bad("wmf_radius and wmf_patch_radius must be at least 1".into());
    }
    if matches!(cfg.data_term, DataTerm::Charbonnier | DataTerm::Lorentzian) {
        return bad(format!(
            "data_term {} has no proximal operator; use l1 or quadratic",
            cfg.data_term
        ));
    }

    let mut warnings = Vec::new();
    let product = cfg.tau * cfg.sigma * norm_bound;
    if product >= 1.0 {
        let w = ConfigWarning::StepCondition {
            product,
            norm_bound,
            normalized: cfg.normalize_steps,
        };
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok(CheckedConfig {
        config: cfg.clone(),
        warnings,
    })
}

impl fmt::Display for DataTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataTerm::L1 => "l1",
            DataTerm::Quadratic => "quadratic",
            DataTerm::Charbonnier => "charbonnier",
            DataTerm::Lorentzian => "lorentzian",
        })
    }
}

impl FromStr for DataTerm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(DataTerm::L1),
            "quadratic" => Ok(DataTerm::Quadratic),
            "charbonnier" => Ok(DataTerm::Charbonnier),
            "lorentzian" => Ok(DataTerm::Lorentzian),
            _ => Err(Error::InvalidConfig(format!("unknown data_term '{s}'"))),
        }
    }
}

impl fmt::Display for TvProjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TvProjection::Componentwise => "componentwise",
            TvProjection::Isotropic => "isotropic",
        })
    }
}

impl FromStr for TvProjection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "componentwise" => Ok(TvProjection::Componentwise),
            "isotropic" => Ok(TvProjection::Isotropic),
            _ => Err(Error::InvalidConfig(format!("unknown tv_projection '{s}'"))),
        }
    }
}

impl fmt::Display for MedianMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MedianMode::Off => "off",
            MedianMode::Single => "single",
            MedianMode::Iterated => "iterated",
        })
    }
}

impl FromStr for MedianMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(MedianMode::Off),
            "single" | "median" => Ok(MedianMode::Single),
            "iterated" => Ok(MedianMode::Iterated),
            _ => Err(Error::InvalidConfig(format!("unknown median_mode '{s}'"))),
        }
    }
}

impl fmt::Display for PyramidLevels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PyramidLevels::Auto => f.write_str("auto"),
            PyramidLevels::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for PyramidLevels {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(PyramidLevels::Auto);
        }
        s.parse().map(PyramidLevels::Fixed).map_err(|_| {
            Error::InvalidConfig(format!(
                "pyramid_levels must be 'auto' or a count, got '{s}'"
            ))
        })
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse '{value}' for {key}")))
}

impl SolverConfig {
    /// Step sizes actually used by the solver for edge weights `phi`.
    pub fn effective_steps(&self, phi: &ScalarField) -> (f64, f64) {
        if self.normalize_steps {
            let l = operator_norm_bound(phi).sqrt();
            (self.tau / l, self.sigma / l)
        } else {
            (self.tau, self.sigma)
        }
    }

    /// Sets one field by name from its textual value.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "tau" => self.tau = parse_value(key, value)?,
            "sigma" => self.sigma = parse_value(key, value)?,
            "normalize_steps" => self.normalize_steps = parse_value(key, value)?,
            "theta" => self.theta = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "eta" => self.eta = parse_value(key, value)?,
            "kappa" => self.kappa = parse_value(key, value)?,
            "blend_r" => self.blend_r = parse_value(key, value)?,
            "pyramid_spacing" => self.pyramid_spacing = parse_value(key, value)?,
            "pyramid_levels" => self.pyramid_levels = value.parse()?,
            "pyramid_max_levels" => self.pyramid_max_levels = parse_value(key, value)?,
            "warps_per_level" => self.warps_per_level = parse_value(key, value)?,
            "pd_max_iter" => self.pd_max_iter = parse_value(key, value)?,
            "pd_tol" => self.pd_tol = parse_value(key, value)?,
            "median_mode" => self.median_mode = value.parse()?,
            "median_coarse" => self.median_coarse = parse_value(key, value)?,
            "median_fine" => self.median_fine = parse_value(key, value)?,
            "wmf_enabled" => self.wmf_enabled = parse_value(key, value)?,
            "wmf_delta" => self.wmf_delta = parse_value(key, value)?,
            "wmf_radius" => self.wmf_radius = parse_value(key, value)?,
            "wmf_patch_radius" => self.wmf_patch_radius = parse_value(key, value)?,
            "wmf_h" => self.wmf_h = parse_value(key, value)?,
            "data_term" => self.data_term = value.parse()?,
            "tv_projection" => self.tv_projection = value.parse()?,
            other => return Err(Error::InvalidConfig(format!("unknown parameter '{other}'"))),
        }
        Ok(())
    }

    /// Applies a `key=value` assignment.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("expected key=value, got '{assignment}'"))
        })?;
        self.set_param(k, v)
    }

    /// Parses the flat config text format on top of the defaults. Blank
    /// lines and lines starting with `#` are ignored.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_text(text)?;
        Ok(cfg)
    }

    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_assignment(line)?;
        }
        Ok(())
    }

    /// Renders every field in the text format accepted by [`Self::from_kv_text`].
    pub fn to_kv_text(&self) -> String {
        let fields: [(&str, String); 24] = [
            ("tau", self.tau.to_string()),
            ("sigma", self.sigma.to_string()),
            ("normalize_steps", self.normalize_steps.to_string()),
            ("theta", self.theta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("eta", self.eta.to_string()),
            ("kappa", self.kappa.to_string()),
            ("blend_r", self.blend_r.to_string()),
            ("pyramid_spacing", self.pyramid_spacing.to_string()),
            ("pyramid_levels", self.pyramid_levels.to_string()),
            ("pyramid_max_levels", self.pyramid_max_levels.to_string()),
            ("warps_per_level", self.warps_per_level.to_string()),
            ("pd_max_iter", self.pd_max_iter.to_string()),
            ("pd_tol", self.pd_tol.to_string()),
            ("median_mode", self.median_mode.to_string()),
            ("median_coarse", self.median_coarse.to_string()),
            ("median_fine", self.median_fine.to_string()),
            ("wmf_enabled", self.wmf_enabled.to_string()),
            ("wmf_delta", self.wmf_delta.to_string()),
            ("wmf_radius", self.wmf_radius.to_string()),
            ("wmf_patch_radius", self.wmf_patch_radius.to_string()),
            ("wmf_h", self.wmf_h.to_string()),
            ("data_term", self.data_term.to_string()),
            ("tv_projection", self.tv_projection.to_string()),
        ];
        fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_parameters() {
        let c = SolverConfig::default();
        assert_eq!(c.tau, 1.0);
        assert_eq!(c.sigma, 0.9);
        assert_eq!(c.theta, 1.0);
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.eta, 0.01);
        assert_eq!(c.warps_per_level, 10);
        assert_eq!(c.pyramid_max_levels, 5);
        assert_eq!((c.median_coarse, c.median_fine), (5, 3));
        assert_eq!((c.wmf_delta, c.wmf_radius), (10.0, 7));
        assert_eq!(c.data_term, DataTerm::L1);
    }

    #[test]
    fn defaults_are_accepted_with_step_warning() {
        let checked = validate_config(&SolverConfig::default()).unwrap();
        assert_eq!(checked.config, SolverConfig::default());
        assert!(matches!(
            checked.warnings.as_slice(),
            [ConfigWarning::StepCondition { .. }]
        ));
    }

    #[test]
    fn step_condition_boundary() {
        let mut c = SolverConfig::default();
        c.tau = 0.25;
        c.sigma = 0.4;
        // 0.25 * 0.4 * 10 = 1 is not < 1
        let checked = validate_config_with_bound(&c, 10.0).unwrap();
        assert_eq!(checked.warnings.len(), 1);
        c.sigma = 0.39;
        assert!(validate_config_with_bound(&c, 10.0)
            .unwrap()
            .warnings
            .is_empty());
    }

    #[test]
    fn rejects_invalid_values() {
        let cases: [fn(&mut SolverConfig); 8] = [
            |c| c.tau = 0.0,
            |c| c.sigma = -1.0,
            |c| c.kappa = 0.0,
            |c| c.blend_r = 1.0,
            |c| c.blend_r = 0.0,
            |c| c.median_coarse = 4,
            |c| c.median_fine = 1,
            |c| c.data_term = DataTerm::Charbonnier,
        ];
        for mutate in cases {
            let mut c = SolverConfig::default();
            mutate(&mut c);
            assert!(validate_config(&c).is_err(), "{c:?}");
        }
    }

    #[test]
    fn effective_steps_scale_with_edge_weight() {
        let mut c = SolverConfig::default();
        let phi = ScalarField::filled(3, 3, 1.0);
        let (t, s) = c.effective_steps(&phi);
        assert!((t - 0.25).abs() < 1e-15 && (s - 0.225).abs() < 1e-15);
        let half = ScalarField::filled(3, 3, 0.5);
        let (t, _) = c.effective_steps(&half);
        assert!((t - 1.0 / 10f64.sqrt()).abs() < 1e-15);
        c.normalize_steps = false;
        assert_eq!(c.effective_steps(&phi), (1.0, 0.9));
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_config(&SolverConfig::default()).unwrap();
        let twice = validate_config(&once.config).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn kv_text_round_trip_and_overrides() {
        let mut c = SolverConfig::default();
        c.tau = 0.3;
        c.pyramid_levels = PyramidLevels::Fixed(3);
        c.median_mode = MedianMode::Single;
        c.tv_projection = TvProjection::Isotropic;
        c.normalize_steps = false;
        let parsed = SolverConfig::from_kv_text(&c.to_kv_text()).unwrap();
        assert_eq!(parsed, c);

        let text = "# comment\n\ntau = 0.5\nwmf_radius=4\n";
        let p = SolverConfig::from_kv_text(text).unwrap();
        assert_eq!(p.tau, 0.5);
        assert_eq!(p.wmf_radius, 4);
        assert!(SolverConfig::from_kv_text("nope=1").is_err());
        assert!(SolverConfig::from_kv_text("tau").is_err());
        assert!(SolverConfig::from_kv_text("tau=abc").is_err());
    }
}
