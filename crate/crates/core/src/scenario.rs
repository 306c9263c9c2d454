//! Experiment configuration and UE deployment.
//!
//! A [`ScenarioConfig`] is a flat JSON object whose keys are the field names
//! below. Missing keys take the defaults of the reference urban small-cell
//! setup (28 GHz, 1 GHz bandwidth, 150 m radius, 40 users, 64 SSBs per frame),
//! so an empty file describes the baseline experiment.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Maximum SSBs per burst set with 120 kHz subcarrier spacing.
pub const MAX_SSB_NUMEROLOGY_3: u32 = 64;

/// Lowest SSB Es/Iot at which NR cell detection is expected to work; UE
/// measurements below it are not recorded unless a floor is configured.
pub const SSB_DETECTION_FLOOR_DB: f64 = -6.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Validation(String),
}

/// How the BS turns learned weights into per-direction SSB counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AllocationPolicy {
    /// Exact optimum of the linear integer program (surplus to the argmax).
    OptimizedExact,
    /// Surplus apportioned proportionally to the weights (largest remainder).
    OptimizedProportional,
    /// Fixed number of SSBs in every narrow direction.
    Constant(u32),
}

impl AllocationPolicy {
    pub fn is_optimized(self) -> bool {
        !matches!(self, AllocationPolicy::Constant(_))
    }
}

impl fmt::Display for AllocationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AllocationPolicy::OptimizedExact => f.write_str("optimized-exact"),
            AllocationPolicy::OptimizedProportional => f.write_str("optimized-proportional"),
            AllocationPolicy::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl FromStr for AllocationPolicy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "optimized-exact" | "optimized" | "exact" => Ok(AllocationPolicy::OptimizedExact),
            "optimized-proportional" | "proportional" => Ok(AllocationPolicy::OptimizedProportional),
            other => {
                let c = other
                    .strip_prefix("constant:")
                    .or_else(|| other.strip_prefix("constant(").and_then(|r| r.strip_suffix(')')))
                    .ok_or_else(|| ConfigError::Parse(format!("unknown allocation policy `{other}`")))?;
                c.parse::<u32>()
                    .map(AllocationPolicy::Constant)
                    .map_err(|_| ConfigError::Parse(format!("bad constant allocation `{other}`")))
            }
        }
    }
}

impl TryFrom<String> for AllocationPolicy {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AllocationPolicy> for String {
    fn from(p: AllocationPolicy) -> String {
        p.to_string()
    }
}

/// Initial-access procedure driven by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Proposed,
    Exhaustive,
    Iterative,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Proposed => "proposed",
            Strategy::Exhaustive => "exhaustive",
            Strategy::Iterative => "iterative",
        })
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "proposed" => Ok(Strategy::Proposed),
            "exhaustive" => Ok(Strategy::Exhaustive),
            "iterative" => Ok(Strategy::Iterative),
            other => Err(ConfigError::Parse(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Beam gain model for a class of BS beams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModel {
    ArrayFactor,
    FlatSector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub cell_radius_m: f64,
    pub min_ue_radius_m: f64,
    pub n_ues: usize,
    /// Draw radii uniform in area instead of uniform in radius.
    pub uniform_area: bool,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub bs_tx_power_dbm: f64,
    pub ue_tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub noise_density_dbm_hz: f64,
    pub snr_th_db: f64,
    /// Minimum SNR for a UE to record a sample; `None` means the lower of
    /// [`SSB_DETECTION_FLOOR_DB`] and `snr_th_db`.
    pub detection_floor_db: Option<f64>,
    pub rho_th: f64,
    pub n_ssb_total: u32,
    pub d_bs_wb: usize,
    pub d_bs_nb: usize,
    pub d_ue: usize,
    pub pathloss_exponent: f64,
    /// Close-in reference loss at 1 m; `None` derives free-space loss from the carrier.
    pub pathloss_ref_db_at_1m: Option<f64>,
    /// Standard deviation of a static per-UE log-normal shadowing term (0 disables).
    pub shadowing_std_db: f64,
    pub bs_upa: [usize; 2],
    pub ue_upa: [usize; 2],
    /// Sub-aperture that sets the wide-beam gain.
    pub wide_subarray: [usize; 2],
    pub element_spacing_wavelengths: f64,
    /// Gain model of the BS narrow beams.
    pub gain_model: GainModel,
    pub wide_gain_model: GainModel,
    /// Gain outside a beam's sector or below its sidelobe floor, dBi.
    pub floor_gain_db: f64,
    pub max_sweep_cycles: usize,
    pub allocation_policy: AllocationPolicy,
    pub strategy: Strategy,
    pub ideal_feedback: bool,
    /// Route ρ ≤ ρ_th to optimization and ρ > ρ_th to a wide restart.
    pub invert_gate: bool,
    /// Count only UEs that found a receive beam but failed the threshold as misdetected.
    pub pmd_threshold_only: bool,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            cell_radius_m: 150.0,
            min_ue_radius_m: 5.0,
            n_ues: 40,
            uniform_area: false,
            carrier_freq_hz: 28e9,
            bandwidth_hz: 1e9,
            bs_tx_power_dbm: 30.0,
            ue_tx_power_dbm: 27.0,
            noise_figure_db: 6.0,
            noise_density_dbm_hz: -174.0,
            snr_th_db: 0.0,
            detection_floor_db: None,
            rho_th: 1.0,
            n_ssb_total: 64,
            d_bs_wb: 4,
            d_bs_nb: 16,
            d_ue: 4,
            pathloss_exponent: 3.19,
            pathloss_ref_db_at_1m: None,
            shadowing_std_db: 0.0,
            bs_upa: [8, 8],
            ue_upa: [2, 2],
            wide_subarray: [2, 2],
            element_spacing_wavelengths: 0.5,
            gain_model: GainModel::ArrayFactor,
            wide_gain_model: GainModel::FlatSector,
            floor_gain_db: -20.0,
            max_sweep_cycles: 10,
            allocation_policy: AllocationPolicy::OptimizedExact,
            strategy: Strategy::Proposed,
            ideal_feedback: true,
            invert_gate: false,
            pmd_threshold_only: false,
            trials: 1000,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn detection_floor_db(&self) -> f64 {
        self.detection_floor_db.unwrap_or(SSB_DETECTION_FLOOR_DB.min(self.snr_th_db))
    }

    /// SSB budget of each half of a first-cycle (wide + narrow) burst set.
    pub fn half_budget(&self) -> u32 {
        self.n_ssb_total / 2
    }

    pub fn narrow_per_sector(&self) -> usize {
        self.d_bs_nb / self.d_bs_wb.max(1)
    }

    /// Checks every structural invariant; the error names the first one violated.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Validation(m));
        let finite = [
            ("cell_radius_m", self.cell_radius_m),
            ("min_ue_radius_m", self.min_ue_radius_m),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("bs_tx_power_dbm", self.bs_tx_power_dbm),
            ("ue_tx_power_dbm", self.ue_tx_power_dbm),
            ("noise_figure_db", self.noise_figure_db),
            ("noise_density_dbm_hz", self.noise_density_dbm_hz),
            ("snr_th_db", self.snr_th_db),
            ("rho_th", self.rho_th),
            ("pathloss_exponent", self.pathloss_exponent),
            ("shadowing_std_db", self.shadowing_std_db),
            ("floor_gain_db", self.floor_gain_db),
            ("element_spacing_wavelengths", self.element_spacing_wavelengths),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        if !(self.min_ue_radius_m > 0.0 && self.min_ue_radius_m < self.cell_radius_m) {
            return fail(format!(
                "0 < min_ue_radius_m < cell_radius_m violated ({} vs {})",
                self.min_ue_radius_m, self.cell_radius_m
            ));
        }
        if self.carrier_freq_hz <= 0.0 || self.bandwidth_hz <= 0.0 {
            return fail("carrier_freq_hz and bandwidth_hz must be positive".into());
        }
        if self.pathloss_exponent <= 0.0 {
            return fail("pathloss_exponent must be positive".into());
        }
        if self.shadowing_std_db < 0.0 || self.rho_th < 0.0 {
            return fail("shadowing_std_db and rho_th must be non-negative".into());
        }
        if self.n_ssb_total == 0 || self.n_ssb_total > MAX_SSB_NUMEROLOGY_3 {
            return fail(format!(
                "n_ssb_total must lie in 1..={MAX_SSB_NUMEROLOGY_3} for 120 kHz subcarrier spacing, got {}",
                self.n_ssb_total
            ));
        }
        if self.d_bs_wb == 0 || self.d_bs_nb == 0 || self.d_ue == 0 {
            return fail("beam counts d_bs_wb, d_bs_nb, d_ue must be at least 1".into());
        }
        if self.d_bs_nb % self.d_bs_wb != 0 {
            return fail(format!(
                "d_bs_nb ({}) must be divisible by d_bs_wb ({})",
                self.d_bs_nb, self.d_bs_wb
            ));
        }
        if self.d_bs_nb as u32 > self.n_ssb_total {
            return fail(format!(
                "d_bs_nb ({}) exceeds n_ssb_total ({}): one SSB per direction is infeasible",
                self.d_bs_nb, self.n_ssb_total
            ));
        }
        if self.strategy != Strategy::Exhaustive
            && (self.half_budget() < self.d_bs_nb as u32 || self.half_budget() < self.d_bs_wb as u32)
        {
            return fail(format!(
                "half of n_ssb_total ({}) must cover every wide and narrow direction once",
                self.half_budget()
            ));
        }
        if let AllocationPolicy::Constant(c) = self.allocation_policy {
            if c == 0 || c as usize * self.d_bs_nb > self.n_ssb_total as usize {
                return fail(format!(
                    "constant({c}) needs 1 <= c and c * d_bs_nb <= n_ssb_total ({})",
                    self.n_ssb_total
                ));
            }
        }
        if self.d_bs_wb > 64 || self.d_bs_nb > 64 || self.d_ue > 64 {
            return fail("at most 64 beams per beam set are supported".into());
        }
        if self.bs_upa.contains(&0) || self.ue_upa.contains(&0) || self.wide_subarray.contains(&0) {
            return fail("array dimensions must be at least 1".into());
        }
        if self.element_spacing_wavelengths <= 0.0 {
            return fail("element_spacing_wavelengths must be positive".into());
        }
        if self.max_sweep_cycles == 0 {
            return fail("max_sweep_cycles must be at least 1".into());
        }
        Ok(())
    }
}

fn parse_value(text: &str) -> Result<Value, ConfigError> {
    if text.trim().is_empty() {
        return Ok(Value::Object(Default::default()));
    }
    let v: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if !v.is_object() {
        return Err(ConfigError::Parse("top level must be an object".into()));
    }
    Ok(v)
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(ConfigError::Override(key.to_string()));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| ConfigError::Override(key.to_string()))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Parses config text, applies `key=value` overrides (dotted paths), fills
/// defaults, and validates.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut v = parse_value(text)?;
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(ov.clone()))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_dotted(&mut v, key.trim(), value)?;
    }
    let cfg: ScenarioConfig =
        serde_json::from_value(v).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    load_config_with(path, &[])
}

pub fn load_config_with(
    path: impl AsRef<Path>,
    overrides: &[String],
) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, overrides)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UePlacement {
    pub ue_id: usize,
    pub radius_m: f64,
    /// Azimuth of the UE seen from the BS, degrees in [0, 360).
    pub azimuth_deg: f64,
    /// Rotation of the UE panel relative to the global reference, degrees in [0, 360).
    pub antenna_orientation_deg: f64,
}

fn draw_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..360.0)
}

/// Static uniform deployment over the annulus [min_ue_radius_m, cell_radius_m].
pub fn deploy_ues<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<UePlacement> {
    let (lo, hi) = (cfg.min_ue_radius_m, cfg.cell_radius_m);
    (0..cfg.n_ues)
        .map(|ue_id| {
            let radius_m = if cfg.uniform_area {
                rng.random_range(lo * lo..=hi * hi).sqrt()
            } else {
                rng.random_range(lo..=hi)
            };
            UePlacement {
                ue_id,
                radius_m,
                azimuth_deg: draw_angle(rng),
                antenna_orientation_deg: draw_angle(rng),
            }
        })
        .collect()
}

/// All UEs at one BS distance with uniform azimuths and orientations.
pub fn deploy_ues_ring<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    distance_m: f64,
    rng: &mut R,
) -> Result<Vec<UePlacement>, ConfigError> {
    if !(distance_m >= cfg.min_ue_radius_m && distance_m <= cfg.cell_radius_m) {
        return Err(ConfigError::Validation(format!(
            "ring distance {distance_m} m outside [{}, {}]",
            cfg.min_ue_radius_m, cfg.cell_radius_m
        )));
    }
    Ok((0..cfg.n_ues)
        .map(|ue_id| UePlacement {
            ue_id,
            radius_m: distance_m,
            azimuth_deg: draw_angle(rng),
            antenna_orientation_deg: draw_angle(rng),
        })
        .collect())
}
