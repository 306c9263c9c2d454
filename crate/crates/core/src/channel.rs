//! SSB-level link model: thermal noise, close-in pathloss, beam gains and
//! per-SSB Rayleigh fading.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::antenna::{diff_deg, wrap_deg, BeamBook, BeamError, BeamId, BeamKind};
use crate::scenario::{ScenarioConfig, UePlacement};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance {0} m is below the 1 m reference distance")]
    TooClose(f64),
    #[error(transparent)]
    Beam(#[from] BeamError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub pathloss_db: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
}

impl LinkBudget {
    /// Average SNR before fading, dB.
    pub fn mean_snr_db(&self) -> f64 {
        self.tx_power_dbm + self.tx_gain_db + self.rx_gain_db - self.pathloss_db - self.noise_power_dbm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingSample {
    pub power_gain_db: f64,
}

impl FadingSample {
    pub fn linear(&self) -> f64 {
        10f64.powf(self.power_gain_db / 10.0)
    }
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Receiver noise power `N0 + 10·log10(B) + NF`, dBm.
pub fn noise_power(cfg: &ScenarioConfig) -> f64 {
    cfg.noise_density_dbm_hz + 10.0 * cfg.bandwidth_hz.log10() + cfg.noise_figure_db
}

/// Free-space loss at 1 m for the carrier, dB.
pub fn free_space_ref_db(carrier_freq_hz: f64) -> f64 {
    20.0 * (4.0 * PI * carrier_freq_hz / SPEED_OF_LIGHT).log10()
}

/// Close-in reference model `PL(1 m) + 10·α·log10(d)`.
pub fn pathloss(cfg: &ScenarioConfig, distance_m: f64) -> Result<f64, ChannelError> {
    if !(distance_m >= 1.0) {
        return Err(ChannelError::TooClose(distance_m));
    }
    let reference = cfg
        .pathloss_ref_db_at_1m
        .unwrap_or_else(|| free_space_ref_db(cfg.carrier_freq_hz));
    Ok(reference + 10.0 * cfg.pathloss_exponent * distance_m.log10())
}

/// One Rayleigh block: unit-mean exponential power gain.
pub fn draw_fading<R: Rng + ?Sized>(rng: &mut R) -> FadingSample {
    let g: f64 = rng.sample(Exp1);
    FadingSample { power_gain_db: lin_to_db(g) }
}

/// Azimuth of the BS in the UE panel frame.
pub fn bs_azimuth_at_ue(placement: &UePlacement) -> f64 {
    wrap_deg(placement.azimuth_deg + 180.0 - placement.antenna_orientation_deg)
}

/// Downlink budget for a (BS beam, UE beam) pair toward `placement`.
pub fn link_budget(
    cfg: &ScenarioConfig,
    book: &BeamBook,
    bs_beam: BeamId,
    ue_beam: BeamId,
    placement: &UePlacement,
) -> Result<LinkBudget, ChannelError> {
    if bs_beam.kind == BeamKind::Ue || ue_beam.kind != BeamKind::Ue {
        return Err(BeamError::UnknownBeam(if ue_beam.kind != BeamKind::Ue { ue_beam } else { bs_beam }).into());
    }
    Ok(LinkBudget {
        tx_power_dbm: cfg.bs_tx_power_dbm,
        noise_power_dbm: noise_power(cfg),
        pathloss_db: pathloss(cfg, placement.radius_m)?,
        tx_gain_db: book.beam_gain(bs_beam, placement.azimuth_deg)?,
        rx_gain_db: book.beam_gain(ue_beam, bs_azimuth_at_ue(placement))?,
    })
}

/// Instantaneous SNR of one SSB, with a fresh fading draw.
pub fn ssb_snr<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    book: &BeamBook,
    bs_beam: BeamId,
    ue_beam: BeamId,
    placement: &UePlacement,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    let budget = link_budget(cfg, book, bs_beam, ue_beam, placement)?;
    Ok(budget.mean_snr_db() + draw_fading(rng).power_gain_db)
}

/// Probability that one Rayleigh-faded SSB reaches `threshold_db`: `exp(-γth/γ̄)`.
pub fn detection_probability(mean_snr_db: f64, threshold_db: f64) -> f64 {
    (-db_to_lin(threshold_db) / db_to_lin(mean_snr_db)).exp()
}

/// Mean linear SNR of every (BS beam, UE beam) pair for one static placement.
///
/// The engine draws fading on top of these values, which keeps the per-slot
/// work to a table lookup and one exponential draw.
#[derive(Debug, Clone)]
pub struct LinkTable {
    n_ue: usize,
    wide: Vec<f64>,
    narrow: Vec<f64>,
    uplink_delta_db: f64,
}

impl LinkTable {
    pub fn new(
        cfg: &ScenarioConfig,
        book: &BeamBook,
        placement: &UePlacement,
        shadowing_db: f64,
    ) -> Result<Self, ChannelError> {
        let n_ue = book.ue_beams().len();
        let base = cfg.bs_tx_power_dbm - pathloss(cfg, placement.radius_m)? - noise_power(cfg) - shadowing_db;
        let at_ue = bs_azimuth_at_ue(placement);
        let ue_gain: Vec<f64> = (0..n_ue)
            .map(|u| book.beam_gain(BeamId::ue(u), at_ue))
            .collect::<Result<_, _>>()?;
        let fill = |ids: Vec<BeamId>| -> Result<Vec<f64>, ChannelError> {
            let mut out = Vec::with_capacity(ids.len() * n_ue);
            for id in ids {
                let g = book.beam_gain(id, placement.azimuth_deg)?;
                out.extend(ue_gain.iter().map(|gu| db_to_lin(base + g + gu)));
            }
            Ok(out)
        };
        Ok(LinkTable {
            n_ue,
            wide: fill(book.wide_ids())?,
            narrow: fill(book.narrow_ids())?,
            uplink_delta_db: cfg.ue_tx_power_dbm - cfg.bs_tx_power_dbm,
        })
    }

    pub fn mean_lin(&self, bs_beam: BeamId, ue_beam: usize) -> f64 {
        let set = match bs_beam.kind {
            BeamKind::BsWide => &self.wide,
            _ => &self.narrow,
        };
        set[bs_beam.index * self.n_ue + ue_beam]
    }

    pub fn mean_db(&self, bs_beam: BeamId, ue_beam: usize) -> f64 {
        lin_to_db(self.mean_lin(bs_beam, ue_beam))
    }

    /// Mean SNR of the reciprocal UE→BS link on the same beam pair.
    pub fn uplink_mean_db(&self, bs_beam: BeamId, ue_beam: usize) -> f64 {
        self.mean_db(bs_beam, ue_beam) + self.uplink_delta_db
    }
}

/// Angle between the UE and the center of a BS beam; handy for alignment checks.
pub fn misalignment_deg(book: &BeamBook, bs_beam: BeamId, placement: &UePlacement) -> Result<f64, BeamError> {
    Ok(diff_deg(placement.azimuth_deg, book.beam(bs_beam)?.center_deg).abs())
}
