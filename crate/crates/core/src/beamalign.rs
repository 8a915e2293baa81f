//! DSRC-assisted beam alignment.
//!
//! Successive DSRC frames give an angular power profile of the dominating
//! propagation path. The shift between two profiles predicts where the path
//! has moved, and the mmWave beam is steered by correlating its cone pattern
//! with the shifted profile. The 802.15.3c-style baseline instead probes
//! every codebook beam in the sector.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::rfmodel::{cone_gain, wrap_degrees, BeamConfig, Direction, RfError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("profile grids differ")]
    GridMismatch,
    #[error("angular grid: {0}")]
    InvalidGrid(&'static str),
    #[error("profile has no strictly positive cell")]
    NoDominantPath,
    #[error("profile power must be finite and non-negative")]
    InvalidPower,
    #[error("candidate grid is empty")]
    EmptyCandidates,
    #[error("non-finite angular shift")]
    NonFiniteShift,
    #[error("unknown alignment scheme `{0}`")]
    UnknownScheme(String),
    #[error("alignment timing: {0}")]
    InvalidTiming(&'static str),
    #[error(transparent)]
    Rf(#[from] RfError),
}

/// Uniform azimuth x elevation sampling grid, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularGrid {
    pub az_start_deg: f64,
    pub az_step_deg: f64,
    pub n_az: usize,
    pub el_start_deg: f64,
    pub el_step_deg: f64,
    pub n_el: usize,
}

impl AngularGrid {
    /// Full azimuth circle at zero elevation.
    pub fn azimuth_ring(step_deg: f64) -> Self {
        let n_az = (360.0 / step_deg).round() as usize;
        Self {
            az_start_deg: -180.0,
            az_step_deg: step_deg,
            n_az,
            el_start_deg: 0.0,
            el_step_deg: 1.0,
            n_el: 1,
        }
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.az_step_deg > 0.0) || !(self.el_step_deg > 0.0) {
            return Err(AlignError::InvalidGrid("steps must be positive"));
        }
        if self.n_az == 0 || self.n_el == 0 {
            return Err(AlignError::InvalidGrid("grid must have at least one cell"));
        }
        let el_end = self.el_start_deg + self.el_step_deg * (self.n_el - 1) as f64;
        if self.el_start_deg < -90.0 || el_end > 90.0 {
            return Err(AlignError::InvalidGrid("elevation outside [-90, 90]"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_az * self.n_el
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (azimuth, elevation) of cell `index` in degrees. Cells are stored
    /// elevation-major.
    pub fn cell_deg(&self, index: usize) -> (f64, f64) {
        let el = index / self.n_az;
        let az = index % self.n_az;
        (
            self.az_start_deg + self.az_step_deg * az as f64,
            self.el_start_deg + self.el_step_deg * el as f64,
        )
    }
}

/// Sampled direction-to-power map taken from DSRC frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularProfile {
    grid: AngularGrid,
    power: Vec<f64>,
    timestamp: f64,
}

impl AngularProfile {
    pub fn new(grid: AngularGrid, power: Vec<f64>, timestamp: f64) -> Result<Self, AlignError> {
        grid.validate()?;
        if power.len() != grid.len() {
            return Err(AlignError::InvalidGrid("power length does not match grid"));
        }
        if power.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(AlignError::InvalidPower);
        }
        if !power.iter().any(|&p| p > 0.0) {
            return Err(AlignError::NoDominantPath);
        }
        Ok(Self {
            grid,
            power,
            timestamp,
        })
    }

    /// Single-path profile: a Gaussian lobe of angular spread `spread_deg`
    /// around the true direction, whose centre is perturbed by zero-mean
    /// noise of standard deviation `noise_deg` on each axis.
    pub fn single_path<R: Rng + ?Sized>(
        grid: AngularGrid,
        true_az_deg: f64,
        true_el_deg: f64,
        spread_deg: f64,
        noise_deg: f64,
        timestamp: f64,
        rng: &mut R,
    ) -> Result<Self, AlignError> {
        grid.validate()?;
        let (mut az, mut el) = (true_az_deg, true_el_deg);
        if noise_deg > 0.0 {
            let normal = Normal::new(0.0, noise_deg).map_err(|_| AlignError::InvalidPower)?;
            az += normal.sample(rng);
            el += normal.sample(rng);
        }
        let power = (0..grid.len())
            .map(|k| {
                let (c_az, c_el) = grid.cell_deg(k);
                let d_az = wrap_degrees(c_az - az);
                let d_el = c_el - el;
                (-(d_az * d_az + d_el * d_el) / (2.0 * spread_deg * spread_deg)).exp()
            })
            .collect();
        Self::new(grid, power, timestamp)
    }

    pub fn grid(&self) -> &AngularGrid {
        &self.grid
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    /// Index of the strongest cell, first one on ties.
    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.power.iter().enumerate() {
            if p > self.power[best] {
                best = k;
            }
        }
        best
    }

    pub fn peak_deg(&self) -> (f64, f64) {
        self.grid.cell_deg(self.peak_index())
    }
}

/// Signed angular displacement of the dominating path, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngularShift {
    pub d_azimuth: f64,
    pub d_elevation: f64,
}

impl AngularShift {
    pub fn new(d_azimuth: f64, d_elevation: f64) -> Result<Self, AlignError> {
        if !d_azimuth.is_finite() || !d_elevation.is_finite() {
            return Err(AlignError::NonFiniteShift);
        }
        Ok(Self {
            d_azimuth,
            d_elevation,
        })
    }

    pub fn from_degrees(d_az: f64, d_el: f64) -> Result<Self, AlignError> {
        Self::new(d_az.to_radians(), d_el.to_radians())
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.d_azimuth.to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        self.d_elevation.to_degrees()
    }
}

impl std::ops::Add for AngularShift {
    type Output = AngularShift;

    fn add(self, rhs: Self) -> Self {
        AngularShift {
            d_azimuth: self.d_azimuth + rhs.d_azimuth,
            d_elevation: self.d_elevation + rhs.d_elevation,
        }
    }
}

/// Shift of the dominating path between two successive profiles.
pub fn estimate_shift(
    prev: &AngularProfile,
    cur: &AngularProfile,
) -> Result<AngularShift, AlignError> {
    if prev.grid != cur.grid {
        return Err(AlignError::GridMismatch);
    }
    let (p_az, p_el) = prev.peak_deg();
    let (c_az, c_el) = cur.peak_deg();
    AngularShift::from_degrees(wrap_degrees(c_az - p_az), c_el - p_el)
}

/// Boresights tried by the correlation search, degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub az_deg: Vec<f64>,
    pub el_deg: Vec<f64>,
}

impl CandidateGrid {
    /// Every azimuth on a full circle, zero elevation.
    pub fn full_azimuth(step_deg: f64) -> Self {
        let n = (360.0 / step_deg).round() as usize;
        Self {
            az_deg: (0..n).map(|k| -180.0 + step_deg * k as f64).collect(),
            el_deg: vec![0.0],
        }
    }

    /// Azimuths within `half_span_deg` of `center_az_deg` on a grid anchored
    /// at integer multiples of `step_deg`.
    pub fn around(center_az_deg: f64, half_span_deg: f64, step_deg: f64) -> Self {
        let lo = ((center_az_deg - half_span_deg) / step_deg).ceil() as i64;
        let hi = ((center_az_deg + half_span_deg) / step_deg).floor() as i64;
        Self {
            az_deg: (lo..=hi).map(|k| k as f64 * step_deg).collect(),
            el_deg: vec![0.0],
        }
    }

    pub fn with_elevations(mut self, el_deg: Vec<f64>) -> Self {
        self.el_deg = el_deg;
        self
    }

    pub fn len(&self) -> usize {
        self.az_deg.len() * self.el_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How the candidate boresights of one alignment step are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CandidatePolicy {
    FullAzimuth {
        step_deg: f64,
    },
    /// A window around the predicted boresight (current boresight + shift).
    AroundPrediction {
        half_span_deg: f64,
        step_deg: f64,
    },
}

impl CandidatePolicy {
    pub fn resolve(&self, beam: &BeamConfig, shift: &AngularShift) -> CandidateGrid {
        match *self {
            CandidatePolicy::FullAzimuth { step_deg } => CandidateGrid::full_azimuth(step_deg),
            CandidatePolicy::AroundPrediction {
                half_span_deg,
                step_deg,
            } => {
                let predicted = beam.boresight().azimuth().to_degrees() + shift.azimuth_deg();
                CandidateGrid::around(predicted, half_span_deg, step_deg)
            }
        }
    }
}

impl Default for CandidatePolicy {
    fn default() -> Self {
        CandidatePolicy::FullAzimuth { step_deg: 1.0 }
    }
}

/// Correlation of a cone pattern pointed at `boresight` with the profile
/// translated by `shift`.
pub fn correlation(
    beam: &BeamConfig,
    profile: &AngularProfile,
    shift: &AngularShift,
) -> Result<f64, AlignError> {
    let grid = profile.grid();
    let mut score = 0.0;
    for (k, &p) in profile.power().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let (az, el) = grid.cell_deg(k);
        let el = (el + shift.elevation_deg()).clamp(-90.0, 90.0);
        let dir = Direction::from_degrees(az + shift.azimuth_deg(), el)?;
        score += p * cone_gain(beam, &dir);
    }
    Ok(score)
}

/// One convolution step: steer `beam` onto the profile's dominating path
/// after it has moved by `shift`. Beamwidth is left unchanged.
pub fn align_step(
    beam: &BeamConfig,
    profile: &AngularProfile,
    shift: &AngularShift,
    candidates: &CandidateGrid,
) -> Result<(BeamConfig, f64), AlignError> {
    if candidates.is_empty() {
        return Err(AlignError::EmptyCandidates);
    }
    let mut best: Option<(BeamConfig, f64)> = None;
    for &el in &candidates.el_deg {
        for &az in &candidates.az_deg {
            let trial = beam.with_boresight(Direction::from_degrees(az, el)?);
            let score = correlation(&trial, profile, shift)?;
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((trial, score));
            }
        }
    }
    Ok(best.expect("non-empty candidates"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepResult {
    pub beam_a: BeamConfig,
    pub beam_b: BeamConfig,
    pub gain_a: f64,
    pub gain_b: f64,
    pub total_shift: AngularShift,
}

/// First step re-steers A for B's motion, second step re-steers B for A's
/// motion. The reported total shift is the component-wise sum of both.
#[allow(clippy::too_many_arguments)]
pub fn two_step_alignment(
    beam_a: &BeamConfig,
    beam_b: &BeamConfig,
    shift_b_motion: &AngularShift,
    shift_a_motion: &AngularShift,
    profile_a: &AngularProfile,
    profile_b: &AngularProfile,
    policy: &CandidatePolicy,
) -> Result<TwoStepResult, AlignError> {
    let cand_a = policy.resolve(beam_a, shift_b_motion);
    let (new_a, gain_a) = align_step(beam_a, profile_a, shift_b_motion, &cand_a)?;
    let cand_b = policy.resolve(beam_b, shift_a_motion);
    let (new_b, gain_b) = align_step(beam_b, profile_b, shift_a_motion, &cand_b)?;
    Ok(TwoStepResult {
        beam_a: new_a,
        beam_b: new_b,
        gain_a,
        gain_b,
        total_shift: *shift_b_motion + *shift_a_motion,
    })
}

/// Sector searched by the exhaustive baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSector {
    pub center_az_deg: f64,
    pub span_deg: f64,
    /// Elevation span searched as well when set.
    pub elevation_span_deg: Option<f64>,
}

impl SearchSector {
    pub fn azimuth(center_az_deg: f64, span_deg: f64) -> Self {
        Self {
            center_az_deg,
            span_deg,
            elevation_span_deg: None,
        }
    }
}

/// Codebook size needed to tile `span_deg` with beams of width `w`.
pub fn probe_count(span_deg: f64, beamwidth_deg: f64) -> usize {
    // guard against 360/10 landing just above 36
    ((span_deg / beamwidth_deg) - 1e-9).ceil().max(1.0) as usize
}

/// Probe every codebook beam in the sector and keep the strongest.
pub fn exhaustive_alignment(
    beamwidth_deg: f64,
    sector: &SearchSector,
    profile: &AngularProfile,
) -> Result<(BeamConfig, usize), AlignError> {
    let n_az = probe_count(sector.span_deg, beamwidth_deg);
    let az_start = sector.center_az_deg - sector.span_deg / 2.0 + beamwidth_deg / 2.0;
    let elevations: Vec<f64> = match sector.elevation_span_deg {
        None => vec![0.0],
        Some(span) => {
            let n_el = probe_count(span, beamwidth_deg);
            let start = -span / 2.0 + beamwidth_deg / 2.0;
            (0..n_el)
                .map(|k| (start + beamwidth_deg * k as f64).clamp(-90.0, 90.0))
                .collect()
        }
    };
    let zero = AngularShift::default();
    let mut best: Option<(BeamConfig, f64)> = None;
    let mut probes = 0;
    for &el in &elevations {
        for k in 0..n_az {
            let az = az_start + beamwidth_deg * k as f64;
            let beam = BeamConfig::new(Direction::from_degrees(az, el)?, beamwidth_deg)?;
            let score = correlation(&beam, profile, &zero)?;
            probes += 1;
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((beam, score));
            }
        }
    }
    Ok((best.expect("at least one probe").0, probes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlignmentScheme {
    /// Exhaustive beam-level search of the sector.
    Baseline802_15_3c,
    /// DSRC-assisted alignment including the DSRC frame time.
    DsrcScheme1,
    /// DSRC-assisted alignment, mmWave probing time only.
    DsrcScheme2,
}

impl AlignmentScheme {
    pub const ALL: [AlignmentScheme; 3] = [
        AlignmentScheme::Baseline802_15_3c,
        AlignmentScheme::DsrcScheme1,
        AlignmentScheme::DsrcScheme2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AlignmentScheme::Baseline802_15_3c => "baseline",
            AlignmentScheme::DsrcScheme1 => "dsrc1",
            AlignmentScheme::DsrcScheme2 => "dsrc2",
        }
    }
}

impl fmt::Display for AlignmentScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlignmentScheme {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" | "802.15.3c" => Ok(AlignmentScheme::Baseline802_15_3c),
            "dsrc1" | "scheme1" => Ok(AlignmentScheme::DsrcScheme1),
            "dsrc2" | "scheme2" => Ok(AlignmentScheme::DsrcScheme2),
            other => Err(AlignError::UnknownScheme(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentTiming {
    pub t_probe: f64,
    pub t_dsrc_frame: f64,
    pub n_dsrc_frames: u32,
    pub t_slot: f64,
    pub sector_span_deg: f64,
    /// Probes spent verifying the DSRC-predicted beam.
    pub n_refine: u32,
    pub elevation_span_deg: Option<f64>,
}

impl Default for AlignmentTiming {
    fn default() -> Self {
        Self {
            t_probe: 20e-6,
            t_dsrc_frame: 400e-6,
            n_dsrc_frames: 2,
            t_slot: 10e-3,
            sector_span_deg: 360.0,
            n_refine: 3,
            elevation_span_deg: None,
        }
    }
}

impl AlignmentTiming {
    pub fn validate(&self) -> Result<(), AlignError> {
        let positive = [
            (self.t_probe, "t_probe must be positive"),
            (self.t_dsrc_frame, "t_dsrc_frame must be positive"),
            (self.t_slot, "t_slot must be positive"),
            (self.sector_span_deg, "sector_span_deg must be positive"),
        ];
        for (v, msg) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AlignError::InvalidTiming(msg));
            }
        }
        if self.n_dsrc_frames == 0 {
            return Err(AlignError::InvalidTiming("n_dsrc_frames must be positive"));
        }
        if self.n_refine == 0 {
            return Err(AlignError::InvalidTiming("n_refine must be positive"));
        }
        if self.sector_span_deg > 360.0 {
            return Err(AlignError::InvalidTiming("sector_span_deg above 360"));
        }
        if let Some(span) = self.elevation_span_deg {
            if !(span > 0.0 && span <= 180.0) {
                return Err(AlignError::InvalidTiming("elevation span outside (0, 180]"));
            }
        }
        Ok(())
    }

    pub fn baseline_probes(&self, beamwidth_deg: f64) -> usize {
        let az = probe_count(self.sector_span_deg, beamwidth_deg);
        match self.elevation_span_deg {
            Some(span) => az * probe_count(span, beamwidth_deg),
            None => az,
        }
    }

    /// Every scheme fits inside the slot at this beamwidth.
    pub fn fits_slot(&self, beamwidth_deg: f64) -> bool {
        AlignmentScheme::ALL
            .iter()
            .all(|&s| alignment_overhead(s, beamwidth_deg, self) <= self.t_slot)
    }
}

/// Time spent (re)aligning one link, seconds.
pub fn alignment_overhead(
    scheme: AlignmentScheme,
    beamwidth_deg: f64,
    timing: &AlignmentTiming,
) -> f64 {
    let refine = f64::from(timing.n_refine) * timing.t_probe;
    match scheme {
        AlignmentScheme::Baseline802_15_3c => {
            timing.baseline_probes(beamwidth_deg) as f64 * timing.t_probe
        }
        AlignmentScheme::DsrcScheme2 => refine,
        AlignmentScheme::DsrcScheme1 => {
            refine + f64::from(timing.n_dsrc_frames) * timing.t_dsrc_frame
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadRow {
    pub beamwidth_deg: f64,
    pub scheme: AlignmentScheme,
    pub overhead_s: f64,
    /// `(baseline - scheme) / baseline` in percent.
    pub gap_vs_baseline_pct: f64,
}

/// Overhead of every scheme at every beamwidth, sorted by beamwidth.
pub fn overhead_sweep(widths_deg: &[f64], timing: &AlignmentTiming) -> Vec<OverheadRow> {
    let mut widths = widths_deg.to_vec();
    widths.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(widths.len() * 3);
    for w in widths {
        let base = alignment_overhead(AlignmentScheme::Baseline802_15_3c, w, timing);
        for scheme in AlignmentScheme::ALL {
            let overhead = alignment_overhead(scheme, w, timing);
            rows.push(OverheadRow {
                beamwidth_deg: w,
                scheme,
                overhead_s: overhead,
                gap_vs_baseline_pct: (base - overhead) / base * 100.0,
            });
        }
    }
    rows
}

pub const OVERHEAD_CSV_HEADER: &str = "beamwidth_deg,scheme,overhead_s,gap_vs_baseline_pct";

pub fn write_overhead_csv<W: Write>(mut out: W, rows: &[OverheadRow]) -> io::Result<()> {
    writeln!(out, "{OVERHEAD_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.beamwidth_deg, r.scheme, r.overhead_s, r.gap_vs_baseline_pct
        )?;
    }
    Ok(())
}
