//! UPA beam synthesis and per-azimuth gain lookup for the BS and UE beam sets.
//!
//! All patterns are evaluated in the horizontal plane (zero elevation). At
//! zero elevation the vertical elements of a panel add in phase, so a
//! `rows × cols` UPA behaves like a `cols`-element linear array scaled by
//! `rows`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{GainModel, ScenarioConfig};

#[derive(Debug, Error, PartialEq)]
pub enum BeamError {
    #[error("unknown beam {0}")]
    UnknownBeam(BeamId),
    #[error("inconsistent beam counts: {0}")]
    Counts(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpaGeometry {
    pub n_rows: usize,
    pub n_cols: usize,
    pub element_spacing_wavelengths: f64,
    pub boresight_deg: f64,
}

impl UpaGeometry {
    pub fn new(n_rows: usize, n_cols: usize, boresight_deg: f64) -> Self {
        UpaGeometry { n_rows, n_cols, element_spacing_wavelengths: 0.5, boresight_deg }
    }

    pub fn n_elements(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Peak array gain of a uniformly excited panel, dB.
    pub fn peak_gain_db(&self) -> f64 {
        10.0 * (self.n_elements() as f64).log10()
    }
}

/// Wraps an angle to [0, 360).
pub fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Signed angular difference `a - b` wrapped to [-180, 180).
pub fn diff_deg(a: f64, b: f64) -> f64 {
    (a - b + 180.0).rem_euclid(360.0) - 180.0
}

/// Array gain `|AF|² / N` in dB of a panel steered to `steer_deg`, seen at `azimuth_deg`.
///
/// The array factor is summed element by element; the value is unclamped, so
/// nulls can be very negative.
pub fn array_factor_gain(geometry: &UpaGeometry, steer_deg: f64, azimuth_deg: f64) -> f64 {
    let rel = diff_deg(azimuth_deg, geometry.boresight_deg).to_radians();
    let steer = diff_deg(steer_deg, geometry.boresight_deg).to_radians();
    let psi = 2.0 * PI * geometry.element_spacing_wavelengths * (rel.sin() - steer.sin());
    let (mut re, mut im) = (0.0, 0.0);
    for n in 0..geometry.n_cols {
        let phase = n as f64 * psi;
        re += phase.cos();
        im += phase.sin();
    }
    let rows = geometry.n_rows as f64;
    let af2 = rows * rows * (re * re + im * im);
    let g = af2 / geometry.n_elements() as f64;
    10.0 * g.max(1e-300).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamKind {
    BsWide,
    BsNarrow,
    Ue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeamId {
    pub kind: BeamKind,
    pub index: usize,
}

impl BeamId {
    pub const fn wide(index: usize) -> Self {
        BeamId { kind: BeamKind::BsWide, index }
    }
    pub const fn narrow(index: usize) -> Self {
        BeamId { kind: BeamKind::BsNarrow, index }
    }
    pub const fn ue(index: usize) -> Self {
        BeamId { kind: BeamKind::Ue, index }
    }
}

impl fmt::Display for BeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.kind {
            BeamKind::BsWide => "wb",
            BeamKind::BsNarrow => "nb",
            BeamKind::Ue => "ue",
        };
        write!(f, "{p}{}", self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub id: BeamId,
    pub center_deg: f64,
    /// Boresight of the panel that forms this beam (for UE beams, the beam center).
    pub sector_boresight_deg: f64,
    pub width_deg: f64,
}

impl Beam {
    /// Half-open membership `[center - w/2, center + w/2)`, so adjacent beams partition the circle.
    pub fn covers(&self, azimuth_deg: f64) -> bool {
        wrap_deg(azimuth_deg - (self.center_deg - self.width_deg / 2.0)) < self.width_deg
    }
}

#[derive(Debug, Clone)]
pub struct BeamBook {
    wide: Vec<Beam>,
    narrow: Vec<Beam>,
    ue: Vec<Beam>,
    pub narrow_model: GainModel,
    pub wide_model: GainModel,
    bs_panel: (usize, usize),
    wide_subarray: (usize, usize),
    ue_panel: (usize, usize),
    spacing: f64,
    pub floor_db: f64,
}

impl BeamBook {
    pub fn wide_beams(&self) -> &[Beam] {
        &self.wide
    }
    pub fn narrow_beams(&self) -> &[Beam] {
        &self.narrow
    }
    pub fn ue_beams(&self) -> &[Beam] {
        &self.ue
    }

    pub fn beams(&self) -> impl Iterator<Item = &Beam> {
        self.wide.iter().chain(&self.narrow).chain(&self.ue)
    }

    pub fn beam(&self, id: BeamId) -> Result<&Beam, BeamError> {
        let set = match id.kind {
            BeamKind::BsWide => &self.wide,
            BeamKind::BsNarrow => &self.narrow,
            BeamKind::Ue => &self.ue,
        };
        set.get(id.index).ok_or(BeamError::UnknownBeam(id))
    }

    pub fn wide_ids(&self) -> Vec<BeamId> {
        self.wide.iter().map(|b| b.id).collect()
    }
    pub fn narrow_ids(&self) -> Vec<BeamId> {
        self.narrow.iter().map(|b| b.id).collect()
    }

    /// Sector (wide beam index) whose span contains the narrow beam center.
    pub fn sector_of_narrow(&self, narrow: usize) -> usize {
        let c = self.narrow[narrow].center_deg;
        self.wide.iter().position(|w| w.covers(c)).unwrap_or(0)
    }

    pub fn narrow_in_sector(&self, sector: usize) -> Vec<usize> {
        (0..self.narrow.len()).filter(|&k| self.sector_of_narrow(k) == sector).collect()
    }

    fn panel(&self, beam: &Beam) -> UpaGeometry {
        let (r, c) = match beam.id.kind {
            BeamKind::BsNarrow => self.bs_panel,
            BeamKind::BsWide => self.wide_subarray,
            BeamKind::Ue => self.ue_panel,
        };
        UpaGeometry {
            n_rows: r,
            n_cols: c,
            element_spacing_wavelengths: self.spacing,
            boresight_deg: beam.sector_boresight_deg,
        }
    }

    fn model(&self, kind: BeamKind) -> GainModel {
        match kind {
            BeamKind::BsNarrow => self.narrow_model,
            BeamKind::BsWide => self.wide_model,
            BeamKind::Ue => GainModel::FlatSector,
        }
    }

    /// Gain in dBi of `id` toward `azimuth_deg`.
    ///
    /// BS beams take the global azimuth of the UE; UE beams take the
    /// azimuth of the BS in the UE's own (orientation-rotated) frame.
    pub fn beam_gain(&self, id: BeamId, azimuth_deg: f64) -> Result<f64, BeamError> {
        let beam = self.beam(id)?;
        let panel = self.panel(beam);
        let g = match self.model(id.kind) {
            GainModel::FlatSector => {
                if beam.covers(azimuth_deg) {
                    panel.peak_gain_db()
                } else {
                    self.floor_db
                }
            }
            GainModel::ArrayFactor => {
                if diff_deg(azimuth_deg, beam.sector_boresight_deg).abs() < 90.0 {
                    array_factor_gain(&panel, beam.center_deg, azimuth_deg).max(self.floor_db)
                } else {
                    self.floor_db
                }
            }
        };
        Ok(g)
    }
}

pub fn build_beambook(cfg: &ScenarioConfig) -> Result<BeamBook, BeamError> {
    if cfg.d_bs_wb == 0 || cfg.d_bs_nb == 0 || cfg.d_ue == 0 {
        return Err(BeamError::Counts("beam counts must be positive".into()));
    }
    if cfg.d_bs_nb % cfg.d_bs_wb != 0 {
        return Err(BeamError::Counts(format!(
            "{} narrow beams cannot be split over {} sectors",
            cfg.d_bs_nb, cfg.d_bs_wb
        )));
    }
    let tile = |n: usize, k: usize| (k as f64 + 0.5) * 360.0 / n as f64;
    let wide: Vec<Beam> = (0..cfg.d_bs_wb)
        .map(|k| {
            let c = tile(cfg.d_bs_wb, k);
            Beam { id: BeamId::wide(k), center_deg: c, sector_boresight_deg: c, width_deg: 360.0 / cfg.d_bs_wb as f64 }
        })
        .collect();
    let per_sector = cfg.d_bs_nb / cfg.d_bs_wb;
    let narrow = (0..cfg.d_bs_nb)
        .map(|k| Beam {
            id: BeamId::narrow(k),
            center_deg: tile(cfg.d_bs_nb, k),
            sector_boresight_deg: wide[k / per_sector].center_deg,
            width_deg: 360.0 / cfg.d_bs_nb as f64,
        })
        .collect();
    let ue = (0..cfg.d_ue)
        .map(|k| {
            let c = tile(cfg.d_ue, k);
            Beam { id: BeamId::ue(k), center_deg: c, sector_boresight_deg: c, width_deg: 360.0 / cfg.d_ue as f64 }
        })
        .collect();
    Ok(BeamBook {
        wide,
        narrow,
        ue,
        narrow_model: cfg.gain_model,
        wide_model: cfg.wide_gain_model,
        bs_panel: (cfg.bs_upa[0], cfg.bs_upa[1]),
        wide_subarray: (cfg.wide_subarray[0], cfg.wide_subarray[1]),
        ue_panel: (cfg.ue_upa[0], cfg.ue_upa[1]),
        spacing: cfg.element_spacing_wavelengths,
        floor_db: cfg.floor_gain_db,
    })
}

/// CSV `beam_id,azimuth_deg,gain_db` for every beam at `step_deg` resolution.
pub fn beam_pattern_csv(book: &BeamBook, step_deg: f64) -> String {
    let mut out = String::from("beam_id,azimuth_deg,gain_db\n");
    let steps = (360.0 / step_deg).round() as usize;
    for beam in book.beams() {
        for s in 0..steps {
            let az = s as f64 * step_deg;
            let g = book.beam_gain(beam.id, az).expect("beam from book");
            out.push_str(&format!("{},{},{:.4}\n", beam.id, az, g));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn book() -> BeamBook {
        build_beambook(&ScenarioConfig::default()).unwrap()
    }

    /// Closed-form |AF|²/N of a uniform linear array (Dirichlet kernel), rows added in phase.
    fn dirichlet_gain_db(rows: usize, cols: usize, rel_deg: f64, steer_deg: f64) -> f64 {
        let psi = PI * (rel_deg.to_radians().sin() - steer_deg.to_radians().sin());
        let n = cols as f64;
        let af = if psi.abs() < 1e-12 { n } else { (n * psi / 2.0).sin() / (psi / 2.0).sin() };
        10.0 * (rows as f64 * af * af / n).log10()
    }

    #[test]
    fn broadside_peaks() {
        let g8 = UpaGeometry::new(8, 8, 45.0);
        assert!((array_factor_gain(&g8, 45.0, 45.0) - 18.061799739838872).abs() < 1e-9);
        let g2 = UpaGeometry::new(2, 2, 0.0);
        assert!((array_factor_gain(&g2, 0.0, 0.0) - 6.020599913279624).abs() < 1e-9);
        // steered peaks are also 10·log10(N)
        assert!((array_factor_gain(&g8, 11.25, 11.25) - 18.061799739838872).abs() < 1e-9);
    }

    #[test]
    fn first_null_is_deep() {
        let g8 = UpaGeometry::new(8, 8, 0.0);
        let null = (0.25f64).asin().to_degrees();
        let g = array_factor_gain(&g8, 0.0, null);
        assert!(g <= 18.0618 - 30.0, "null gain {g}");
    }

    #[test]
    fn element_sum_matches_dirichlet_kernel() {
        let g8 = UpaGeometry::new(8, 8, 0.0);
        for rel in [-70.0, -33.0, -5.0, 3.0, 17.5, 40.0, 80.0] {
            for steer in [-33.75, -11.25, 0.0, 11.25, 33.75] {
                let a = array_factor_gain(&g8, steer, rel);
                let b = dirichlet_gain_db(8, 8, rel, steer);
                if b > -60.0 {
                    assert!((a - b).abs() < 1e-9, "rel {rel} steer {steer}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn default_book_layout() {
        let b = book();
        assert_eq!(b.wide_beams().len(), 4);
        assert_eq!(b.narrow_beams().len(), 16);
        assert_eq!(b.ue_beams().len(), 4);
        let wide: Vec<f64> = b.wide_beams().iter().map(|w| w.center_deg).collect();
        assert_eq!(wide, vec![45.0, 135.0, 225.0, 315.0]);
        for (k, nb) in b.narrow_beams().iter().enumerate() {
            assert_eq!(nb.center_deg, 11.25 + 22.5 * k as f64);
            assert_eq!(nb.width_deg, 22.5);
            assert_eq!(b.sector_of_narrow(k), k / 4);
            assert_eq!(nb.sector_boresight_deg, 45.0 + 90.0 * (k / 4) as f64);
        }
        assert!(b.wide_beams().iter().all(|w| w.width_deg == 90.0));
    }

    #[test]
    fn four_narrow_beams_align_with_sectors() {
        let cfg = ScenarioConfig { d_bs_nb: 4, ..Default::default() };
        let b = build_beambook(&cfg).unwrap();
        for (n, w) in b.narrow_beams().iter().zip(b.wide_beams()) {
            assert_eq!(n.center_deg, w.center_deg);
        }
    }

    #[test]
    fn indivisible_counts_rejected() {
        let cfg = ScenarioConfig { d_bs_nb: 15, ..Default::default() };
        assert!(matches!(build_beambook(&cfg), Err(BeamError::Counts(_))));
    }

    #[test]
    fn gain_examples() {
        let b = book();
        let g = b.beam_gain(BeamId::narrow(0), 11.25).unwrap();
        assert!((g - 18.0618).abs() < 1e-3);
        let g = b.beam_gain(BeamId::ue(0), 45.0).unwrap();
        assert!((g - 6.0206).abs() < 1e-3);
        assert_eq!(b.beam_gain(BeamId::wide(0), 225.0).unwrap(), -20.0);
        assert_eq!(b.beam_gain(BeamId::wide(0), 45.0).unwrap(), b.beam_gain(BeamId::ue(0), 45.0).unwrap());
        assert_eq!(b.beam_gain(BeamId::narrow(16), 0.0), Err(BeamError::UnknownBeam(BeamId::narrow(16))));
        // back hemisphere of the first sector panel
        assert_eq!(b.beam_gain(BeamId::narrow(0), 200.0).unwrap(), -20.0);
    }

    #[test]
    fn narrow_outgains_wide_at_center() {
        let b = book();
        for k in 0..16 {
            let c = b.narrow_beams()[k].center_deg;
            let sector = b.sector_of_narrow(k);
            assert!(b.beam_gain(BeamId::narrow(k), c).unwrap() > b.beam_gain(BeamId::wide(sector), c).unwrap());
        }
    }

    #[test]
    fn sectors_partition_circle() {
        let b = book();
        for i in 0..1440 {
            let az = i as f64 * 0.25;
            assert_eq!(b.wide_beams().iter().filter(|w| w.covers(az)).count(), 1, "{az}");
            assert_eq!(b.narrow_beams().iter().filter(|w| w.covers(az)).count(), 1, "{az}");
            assert_eq!(b.ue_beams().iter().filter(|w| w.covers(az)).count(), 1, "{az}");
        }
    }

    #[test]
    fn gain_is_periodic() {
        let b = book();
        for beam in b.beams() {
            for az in [0.0, 17.3, 91.0, 222.2, 359.9] {
                let g0 = b.beam_gain(beam.id, az).unwrap();
                let g1 = b.beam_gain(beam.id, az + 360.0).unwrap();
                assert!((g0 - g1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_model_for_narrow_beams() {
        let cfg = ScenarioConfig { gain_model: GainModel::FlatSector, ..Default::default() };
        let b = build_beambook(&cfg).unwrap();
        assert!((b.beam_gain(BeamId::narrow(1), 30.0).unwrap() - 18.0618).abs() < 1e-3);
        assert_eq!(b.beam_gain(BeamId::narrow(1), 50.0).unwrap(), -20.0);
    }

    #[test]
    fn pattern_dump_shape() {
        let csv = beam_pattern_csv(&book(), 0.25);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "beam_id,azimuth_deg,gain_db");
        assert_eq!(lines.len(), 1 + 24 * 1440);
        assert!(lines[1].starts_with("wb0,0,"));
    }
}
