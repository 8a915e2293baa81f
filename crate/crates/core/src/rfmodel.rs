//! Link-level radio model for mmWave V2V pairs.
//!
//! Antennas are ideal cones: all radiated energy is spread uniformly over the
//! solid angle of the main lobe and nothing leaks outside it. Propagation is
//! free-space. Everything here is a pure function of immutable values.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Narrowest selectable beamwidth, degrees.
pub const MIN_BEAMWIDTH_DEG: u8 = 1;
/// Widest selectable beamwidth, degrees.
pub const MAX_BEAMWIDTH_DEG: u8 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RfError {
    #[error("elevation {0} rad outside [-pi/2, pi/2]")]
    ElevationOutOfRange(f64),
    #[error("non-finite angle")]
    NonFiniteAngle,
    #[error("beamwidth {0} deg outside (0, 360]")]
    InvalidBeamwidth(f64),
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("carrier frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("rf parameter `{0}` must be strictly positive")]
    NonPositiveParam(&'static str),
    #[error("link {0} is not active")]
    InactiveLink(usize),
    #[error("link index {index} out of range for {count} links")]
    LinkIndex { index: usize, count: usize },
    #[error("negative or non-finite sinr {0}")]
    InvalidSinr(f64),
    #[error("transmitter and receiver coincide")]
    CoincidentEndpoints,
    #[error("decision covers {got} links, geometry has {expected}")]
    DecisionLength { expected: usize, got: usize },
    #[error("beamwidth {0} deg not in the selectable set 1..=15")]
    BeamwidthNotSelectable(u8),
    #[error("decision has no active link")]
    NoActiveLink,
}

/// A pointing direction. Azimuth lives in [-pi, pi), elevation in [-pi/2, pi/2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self, RfError> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(RfError::NonFiniteAngle);
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&elevation) {
            return Err(RfError::ElevationOutOfRange(elevation));
        }
        Ok(Self {
            azimuth: wrap_angle(azimuth),
            elevation,
        })
    }

    /// Azimuth-only direction (zero elevation).
    pub fn horizontal(azimuth: f64) -> Result<Self, RfError> {
        Self::new(azimuth, 0.0)
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Result<Self, RfError> {
        Self::new(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [ce * ca, ce * sa, se]
    }

    /// Great-circle angle to `other`, radians in [0, pi].
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let u = self.unit_vector();
        let v = other.unit_vector();
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let cross_norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        cross_norm.atan2(dot)
    }
}

/// Wraps an angle into [-pi, pi).
pub fn wrap_angle(angle: f64) -> f64 {
    (angle + PI).rem_euclid(TAU) - PI
}

/// Wraps an angle in degrees into [-180, 180).
pub fn wrap_degrees(angle: f64) -> f64 {
    (angle + 180.0).rem_euclid(360.0) - 180.0
}

/// A steerable cone beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    boresight: Direction,
    beamwidth_deg: f64,
}

impl BeamConfig {
    pub fn new(boresight: Direction, beamwidth_deg: f64) -> Result<Self, RfError> {
        if !(beamwidth_deg > 0.0 && beamwidth_deg <= 360.0) {
            return Err(RfError::InvalidBeamwidth(beamwidth_deg));
        }
        Ok(Self {
            boresight,
            beamwidth_deg,
        })
    }

    pub fn boresight(&self) -> Direction {
        self.boresight
    }

    pub fn beamwidth_deg(&self) -> f64 {
        self.beamwidth_deg
    }

    pub fn with_boresight(&self, boresight: Direction) -> Self {
        Self {
            boresight,
            beamwidth_deg: self.beamwidth_deg,
        }
    }

    pub fn mainlobe_gain(&self) -> f64 {
        mainlobe_gain(self.beamwidth_deg.to_radians())
    }
}

/// In-cone gain of a cone of full opening angle `beamwidth` (radians).
pub fn mainlobe_gain(beamwidth: f64) -> f64 {
    2.0 / (1.0 - (beamwidth / 2.0).cos())
}

/// Cone gain for a beam of full width `beamwidth` (radians) seen at angular
/// offset `offset` (radians) from boresight.
pub fn cone_gain_at_offset(beamwidth: f64, offset: f64) -> f64 {
    if offset <= beamwidth / 2.0 {
        mainlobe_gain(beamwidth)
    } else {
        0.0
    }
}

pub fn cone_gain(beam: &BeamConfig, toward: &Direction) -> f64 {
    let offset = beam.boresight.angle_to(toward);
    cone_gain_at_offset(beam.beamwidth_deg.to_radians(), offset)
}

/// Free-space path gain `(c / (4 pi f d))^2`.
pub fn path_gain(distance_m: f64, carrier_freq: f64) -> Result<f64, RfError> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(RfError::NonPositiveDistance(distance_m));
    }
    if !(carrier_freq > 0.0) || !carrier_freq.is_finite() {
        return Err(RfError::NonPositiveFrequency(carrier_freq));
    }
    let ratio = SPEED_OF_LIGHT / (4.0 * PI * carrier_freq * distance_m);
    Ok(ratio * ratio)
}

pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Shannon capacity `B log2(1 + sinr)` in bit/s.
pub fn link_capacity(sinr_value: f64, bandwidth: f64) -> Result<f64, RfError> {
    if !(sinr_value >= 0.0) || !sinr_value.is_finite() {
        return Err(RfError::InvalidSinr(sinr_value));
    }
    Ok(bandwidth * (1.0 + sinr_value).log2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfParams {
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub tx_power: f64,
    pub noise_psd: f64,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            carrier_freq: 60e9,
            bandwidth: 2.16e9,
            tx_power: 0.01,
            // -174 dBm/Hz
            noise_psd: 10f64.powf(-174.0 / 10.0) * 1e-3,
        }
    }
}

impl RfParams {
    pub fn validate(&self) -> Result<(), RfError> {
        let fields = [
            ("carrier_freq", self.carrier_freq),
            ("bandwidth", self.bandwidth),
            ("tx_power", self.tx_power),
            ("noise_psd", self.noise_psd),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(RfError::NonPositiveParam(name));
            }
        }
        Ok(())
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn planar(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn sub(&self, other: &Vec3) -> Vec3 {
        Vec3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn add_scaled(&self, other: &Vec3, scale: f64) -> Vec3 {
        Vec3::new(
            self.x + other.x * scale,
            self.y + other.y * scale,
            self.z + other.z * scale,
        )
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        self.sub(other).norm()
    }

    /// Direction from `self` toward `target`.
    pub fn direction_to(&self, target: &Vec3) -> Result<Direction, RfError> {
        let d = target.sub(self);
        let horizontal = d.x.hypot(d.y);
        if horizontal == 0.0 && d.z == 0.0 {
            return Err(RfError::CoincidentEndpoints);
        }
        Direction::new(d.y.atan2(d.x), d.z.atan2(horizontal))
    }
}

/// Angle between two non-zero vectors, radians in [0, pi].
fn vector_angle(a: &Vec3, b: &Vec3) -> f64 {
    let cross = Vec3::new(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    );
    let dot = a.x * b.x + a.y * b.y + a.z * b.z;
    cross.norm().atan2(dot)
}

/// Endpoints and velocities of one directed V2V link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub tx_position: Vec3,
    pub rx_position: Vec3,
    pub tx_velocity: Vec3,
    pub rx_velocity: Vec3,
}

impl LinkGeometry {
    pub fn new(tx_position: Vec3, rx_position: Vec3) -> Result<Self, RfError> {
        Self::moving(tx_position, rx_position, Vec3::default(), Vec3::default())
    }

    pub fn moving(
        tx_position: Vec3,
        rx_position: Vec3,
        tx_velocity: Vec3,
        rx_velocity: Vec3,
    ) -> Result<Self, RfError> {
        let d = tx_position.distance(&rx_position);
        if !(d > 0.0) {
            return Err(RfError::CoincidentEndpoints);
        }
        Ok(Self {
            tx_position,
            rx_position,
            tx_velocity,
            rx_velocity,
        })
    }

    pub fn distance(&self) -> f64 {
        self.tx_position.distance(&self.rx_position)
    }

    /// Transmit boresight when the pair is perfectly aligned.
    pub fn tx_boresight(&self) -> Direction {
        self.tx_position
            .direction_to(&self.rx_position)
            .expect("validated endpoints")
    }

    pub fn rx_boresight(&self) -> Direction {
        self.rx_position
            .direction_to(&self.tx_position)
            .expect("validated endpoints")
    }
}

/// Transmit and receive beams of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBeams {
    pub tx: BeamConfig,
    pub rx: BeamConfig,
}

impl LinkBeams {
    /// Both ends pointed exactly at each other.
    pub fn aligned(link: &LinkGeometry, beamwidth_deg: f64) -> Result<Self, RfError> {
        Ok(Self {
            tx: BeamConfig::new(link.tx_boresight(), beamwidth_deg)?,
            rx: BeamConfig::new(link.rx_boresight(), beamwidth_deg)?,
        })
    }
}

/// Per-link activation and beamwidth choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BeamDecision {
    pub active: Vec<bool>,
    pub beamwidth_deg: Vec<u8>,
}

impl BeamDecision {
    pub fn new(active: Vec<bool>, beamwidth_deg: Vec<u8>) -> Result<Self, RfError> {
        if active.len() != beamwidth_deg.len() {
            return Err(RfError::DecisionLength {
                expected: active.len(),
                got: beamwidth_deg.len(),
            });
        }
        if let Some(&bad) = beamwidth_deg
            .iter()
            .find(|&&a| !(MIN_BEAMWIDTH_DEG..=MAX_BEAMWIDTH_DEG).contains(&a))
        {
            return Err(RfError::BeamwidthNotSelectable(bad));
        }
        if !active.iter().any(|&p| p) {
            return Err(RfError::NoActiveLink);
        }
        Ok(Self {
            active,
            beamwidth_deg,
        })
    }

    /// All links active at one beamwidth.
    pub fn uniform(n: usize, beamwidth_deg: u8) -> Result<Self, RfError> {
        Self::new(vec![true; n], vec![beamwidth_deg; n])
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&p| p).count()
    }

    /// Transmit powers implied by the activation vector.
    pub fn powers(&self, tx_power: f64) -> Vec<f64> {
        self.active
            .iter()
            .map(|&p| if p { tx_power } else { 0.0 })
            .collect()
    }
}

fn check_index(link_index: usize, count: usize) -> Result<(), RfError> {
    if link_index >= count {
        return Err(RfError::LinkIndex {
            index: link_index,
            count,
        });
    }
    Ok(())
}

/// SINR of link `link_index` with explicit beams and per-link transmit
/// powers; a zero power marks an inactive link.
pub fn sinr_with_beams(
    link_index: usize,
    powers: &[f64],
    beams: &[LinkBeams],
    links: &[LinkGeometry],
    params: &RfParams,
) -> Result<f64, RfError> {
    check_index(link_index, links.len())?;
    if powers.len() != links.len() || beams.len() != links.len() {
        return Err(RfError::DecisionLength {
            expected: links.len(),
            got: powers.len().min(beams.len()),
        });
    }
    if !(powers[link_index] > 0.0) {
        return Err(RfError::InactiveLink(link_index));
    }
    let me = &links[link_index];
    let my_beams = &beams[link_index];

    let direct = {
        let toward_rx = me.tx_position.direction_to(&me.rx_position)?;
        let toward_tx = me.rx_position.direction_to(&me.tx_position)?;
        powers[link_index]
            * cone_gain(&my_beams.tx, &toward_rx)
            * cone_gain(&my_beams.rx, &toward_tx)
            * path_gain(me.distance(), params.carrier_freq)?
    };

    let mut interference = 0.0;
    for (j, other) in links.iter().enumerate() {
        if j == link_index || !(powers[j] > 0.0) {
            continue;
        }
        let toward_victim = other.tx_position.direction_to(&me.rx_position)?;
        let toward_aggressor = me.rx_position.direction_to(&other.tx_position)?;
        let g_tx = cone_gain(&beams[j].tx, &toward_victim);
        if g_tx == 0.0 {
            continue;
        }
        let g_rx = cone_gain(&my_beams.rx, &toward_aggressor);
        if g_rx == 0.0 {
            continue;
        }
        let d = other.tx_position.distance(&me.rx_position);
        interference += powers[j] * g_tx * g_rx * path_gain(d, params.carrier_freq)?;
    }

    Ok(direct / (params.noise_power() + interference))
}

/// SINR of an active link when every link points its beams straight at its
/// partner with the decided beamwidth.
pub fn sinr(
    link_index: usize,
    decision: &BeamDecision,
    links: &[LinkGeometry],
    params: &RfParams,
) -> Result<f64, RfError> {
    check_index(link_index, links.len())?;
    if decision.len() != links.len() {
        return Err(RfError::DecisionLength {
            expected: links.len(),
            got: decision.len(),
        });
    }
    let beams = links
        .iter()
        .zip(&decision.beamwidth_deg)
        .map(|(l, &a)| LinkBeams::aligned(l, f64::from(a)))
        .collect::<Result<Vec<_>, _>>()?;
    sinr_with_beams(
        link_index,
        &decision.powers(params.tx_power),
        &beams,
        links,
        params,
    )
}

/// Sum of `B log2(1 + SINR)` over active links with aligned beams.
pub fn sum_capacity(
    decision: &BeamDecision,
    links: &[LinkGeometry],
    params: &RfParams,
) -> Result<f64, RfError> {
    let mut total = 0.0;
    for i in 0..links.len() {
        if decision.active[i] {
            total += link_capacity(sinr(i, decision, links, params)?, params.bandwidth)?;
        }
    }
    Ok(total)
}

/// Pairwise geometry of a link set, precomputed for repeated SINR
/// evaluation under aligned beams.
///
/// Entry `[j][i]` describes transmitter `j` as seen by receiver `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCoupling {
    /// Free-space gain from transmitter `j` to receiver `i`.
    pub path: Vec<Vec<f64>>,
    /// Angle at transmitter `j` between its boresight and receiver `i`.
    pub tx_offset: Vec<Vec<f64>>,
    /// Angle at receiver `i` between its boresight and transmitter `j`.
    pub rx_offset: Vec<Vec<f64>>,
    pub noise_power: f64,
    pub tx_power: f64,
    pub bandwidth: f64,
}

impl LinkCoupling {
    pub fn new(links: &[LinkGeometry], params: &RfParams) -> Result<Self, RfError> {
        params.validate()?;
        let n = links.len();
        let mut path = vec![vec![0.0; n]; n];
        let mut tx_offset = vec![vec![0.0; n]; n];
        let mut rx_offset = vec![vec![0.0; n]; n];
        for (j, tx_link) in links.iter().enumerate() {
            let tx_bore = tx_link.rx_position.sub(&tx_link.tx_position);
            for (i, rx_link) in links.iter().enumerate() {
                let toward_victim = rx_link.rx_position.sub(&tx_link.tx_position);
                let d = toward_victim.norm();
                path[j][i] = path_gain(d, params.carrier_freq)?;
                if i == j {
                    continue;
                }
                if d == 0.0 {
                    return Err(RfError::CoincidentEndpoints);
                }
                let rx_bore = rx_link.tx_position.sub(&rx_link.rx_position);
                let toward_aggressor = tx_link.tx_position.sub(&rx_link.rx_position);
                tx_offset[j][i] = vector_angle(&tx_bore, &toward_victim);
                rx_offset[j][i] = vector_angle(&rx_bore, &toward_aggressor);
            }
        }
        Ok(Self {
            path,
            tx_offset,
            rx_offset,
            noise_power: params.noise_power(),
            tx_power: params.tx_power,
            bandwidth: params.bandwidth,
        })
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    /// SINR with hard cones; `powers[j] == 0` switches link `j` off.
    pub fn sinr(&self, link_index: usize, powers: &[f64], widths_deg: &[f64]) -> f64 {
        let i = link_index;
        let wi = widths_deg[i].to_radians();
        let g_main = mainlobe_gain(wi);
        let signal = powers[i] * g_main * g_main * self.path[i][i];
        let mut interference = 0.0;
        for j in 0..self.len() {
            if j == i || powers[j] <= 0.0 {
                continue;
            }
            let g_tx = cone_gain_at_offset(widths_deg[j].to_radians(), self.tx_offset[j][i]);
            let g_rx = cone_gain_at_offset(wi, self.rx_offset[j][i]);
            interference += powers[j] * g_tx * g_rx * self.path[j][i];
        }
        signal / (self.noise_power + interference)
    }

    /// Sum capacity of a decision in bit/s.
    pub fn sum_capacity(&self, decision: &BeamDecision) -> f64 {
        let powers = decision.powers(self.tx_power);
        let widths: Vec<f64> = decision
            .beamwidth_deg
            .iter()
            .map(|&a| f64::from(a))
            .collect();
        self.sum_capacity_with_powers(&powers, &widths)
    }

    pub fn sum_capacity_with_powers(&self, powers: &[f64], widths_deg: &[f64]) -> f64 {
        (0..self.len())
            .filter(|&i| powers[i] > 0.0)
            .map(|i| self.bandwidth * (1.0 + self.sinr(i, powers, widths_deg)).log2())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn direction_wraps_azimuth_and_rejects_elevation() {
        let d = Direction::new(3.0 * PI / 2.0, 0.0).unwrap();
        assert!((d.azimuth() + PI / 2.0).abs() < 1e-12);
        let d = Direction::new(PI, 0.0).unwrap();
        assert_eq!(d.azimuth(), -PI);
        assert!(Direction::new(0.0, 1.6).is_err());
        assert!(Direction::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn isotropic_beam_has_unit_gain() {
        let beam = BeamConfig::new(Direction::horizontal(0.3).unwrap(), 360.0).unwrap();
        for az in [-3.0, -1.0, 0.0, 2.0, 3.1] {
            for el in [-1.5, 0.0, 0.7] {
                let g = cone_gain(&beam, &Direction::new(az, el).unwrap());
                assert_eq!(g, 1.0);
            }
        }
    }

    #[test]
    fn sixty_degree_cone() {
        let beam = BeamConfig::new(Direction::horizontal(0.0).unwrap(), 60.0).unwrap();
        let expected = 2.0 / (1.0 - 30f64.to_radians().cos());
        assert_eq!(
            cone_gain(&beam, &Direction::horizontal(0.0).unwrap()),
            expected
        );
        let off = Direction::from_degrees(40.0, 0.0).unwrap();
        assert_eq!(cone_gain(&beam, &off), 0.0);
    }

    #[test]
    fn beam_rejects_bad_width() {
        let b = Direction::horizontal(0.0).unwrap();
        assert!(BeamConfig::new(b, 0.0).is_err());
        assert!(BeamConfig::new(b, 360.5).is_err());
        assert!(BeamConfig::new(b, f64::NAN).is_err());
    }

    #[test]
    fn path_gain_values() {
        // oracle: 20 log10(4 pi d f / c)
        let oracle_db = |d: f64, f: f64| -20.0 * (4.0 * PI * d * f / 299_792_458.0).log10();
        let g1 = to_db(path_gain(1.0, 60e9).unwrap());
        assert!((g1 - oracle_db(1.0, 60e9)).abs() < 1e-9);
        assert!((g1 + 68.0).abs() < 0.1);
        let g10 = to_db(path_gain(10.0, 60e9).unwrap());
        assert!((g10 + 88.0).abs() < 0.1);
        let ratio = path_gain(2.0, 60e9).unwrap() / path_gain(1.0, 60e9).unwrap();
        assert!((ratio - 0.25).abs() < 1e-15);
        assert!(path_gain(0.0, 60e9).is_err());
        assert!(path_gain(-1.0, 60e9).is_err());
    }

    #[test]
    fn capacity_values() {
        assert_eq!(link_capacity(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(link_capacity(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(link_capacity(3.0, 10e6).unwrap(), 2e7);
        assert!(link_capacity(-0.1, 1.0).is_err());
    }

    fn pair(tx: (f64, f64), rx: (f64, f64)) -> LinkGeometry {
        LinkGeometry::new(Vec3::planar(tx.0, tx.1), Vec3::planar(rx.0, rx.1)).unwrap()
    }

    #[test]
    fn single_link_sinr_is_snr() {
        let params = RfParams::default();
        let links = [pair((0.0, 0.0), (20.0, 0.0))];
        let decision = BeamDecision::uniform(1, 5).unwrap();
        let g = mainlobe_gain(5f64.to_radians());
        let expected = params.tx_power * g * g * path_gain(20.0, params.carrier_freq).unwrap()
            / params.noise_power();
        let got = sinr(0, &decision, &links, &params).unwrap();
        assert!(rel(got, expected) < 1e-12);
    }

    #[test]
    fn disjoint_cones_do_not_interfere() {
        let params = RfParams::default();
        // one pair along x, one along y far away
        let links = [
            pair((0.0, 0.0), (20.0, 0.0)),
            pair((100.0, 50.0), (100.0, 80.0)),
        ];
        let decision = BeamDecision::uniform(2, 10).unwrap();
        for i in 0..2 {
            let alone = {
                let d = BeamDecision::new((0..2).map(|k| k == i).collect(), vec![10, 10]).unwrap();
                sinr(i, &d, &links, &params).unwrap()
            };
            assert_eq!(sinr(i, &decision, &links, &params).unwrap(), alone);
        }
    }

    #[test]
    fn inactive_link_is_an_error() {
        let params = RfParams::default();
        let links = [pair((0.0, 0.0), (20.0, 0.0)), pair((0.0, 5.0), (20.0, 5.0))];
        let d = BeamDecision::new(vec![true, false], vec![3, 3]).unwrap();
        assert_eq!(sinr(1, &d, &links, &params), Err(RfError::InactiveLink(1)));
    }

    #[test]
    fn coupling_table_matches_direct_evaluation() {
        let params = RfParams::default();
        let links = [
            pair((0.0, 0.0), (20.0, 0.3)),
            pair((-10.0, 0.5), (30.0, 0.0)),
            pair((5.0, -0.4), (40.0, 0.2)),
        ];
        let table = LinkCoupling::new(&links, &params).unwrap();
        let decision = BeamDecision::new(vec![true, true, true], vec![15, 9, 12]).unwrap();
        let powers = decision.powers(params.tx_power);
        let widths: Vec<f64> = decision.beamwidth_deg.iter().map(|&a| a as f64).collect();
        for i in 0..3 {
            let a = sinr(i, &decision, &links, &params).unwrap();
            let b = table.sinr(i, &powers, &widths);
            assert!(rel(a, b) < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn decision_validation() {
        assert!(BeamDecision::new(vec![false, false], vec![3, 3]).is_err());
        assert!(BeamDecision::new(vec![true], vec![0]).is_err());
        assert!(BeamDecision::new(vec![true], vec![16]).is_err());
        assert!(BeamDecision::new(vec![true], vec![1, 2]).is_err());
    }
}
