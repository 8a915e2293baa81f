use std::f64::consts::LN_2;

use crate::rfmodel::{
    mainlobe_gain, BeamDecision, LinkCoupling, MAX_BEAMWIDTH_DEG, MIN_BEAMWIDTH_DEG,
};

use super::GnnError;

/// Width of the sigmoid edge that replaces the hard cone boundary in the
/// training loss, radians.
pub const SOFT_CONE_TEMPERATURE: f64 = 0.05;

const WIDTH_SPAN: f64 = (MAX_BEAMWIDTH_DEG - MIN_BEAMWIDTH_DEG) as f64;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Continuous beamwidth in degrees, `1 + 14 sigma(o)`.
pub fn relaxed_width_deg(output: f64) -> f64 {
    f64::from(MIN_BEAMWIDTH_DEG) + WIDTH_SPAN * sigmoid(output)
}

/// Integer beamwidth decoded from one readout value.
pub fn decode_width(output: f64) -> u8 {
    let a = relaxed_width_deg(output).round();
    a.clamp(f64::from(MIN_BEAMWIDTH_DEG), f64::from(MAX_BEAMWIDTH_DEG)) as u8
}

fn mainlobe_derivative(w: f64) -> f64 {
    let c = 1.0 - (w / 2.0).cos();
    -(w / 2.0).sin() / (c * c)
}

/// Soft cone gain and its derivative in the width.
fn soft_gain(w: f64, offset: f64) -> (f64, f64) {
    let m = mainlobe_gain(w);
    let s = sigmoid((w / 2.0 - offset) / SOFT_CONE_TEMPERATURE);
    let dm = mainlobe_derivative(w);
    (
        m * s,
        dm * s + m * s * (1.0 - s) / (2.0 * SOFT_CONE_TEMPERATURE),
    )
}

/// Negative relaxed sum capacity (bit/s) with every link active, and its
/// gradient with respect to the raw readout values.
///
/// The intended link always sits on boresight, so its gain is the exact
/// mainlobe gain; only cross terms use the soft boundary.
pub fn relaxed_loss(coupling: &LinkCoupling, outputs: &[f64]) -> Result<(f64, Vec<f64>), GnnError> {
    let n = coupling.len();
    if outputs.len() != n {
        return Err(GnnError::Shape("one readout value per link"));
    }
    if coupling.bandwidth == 0.0 {
        return Ok((0.0, vec![0.0; n]));
    }
    let p = coupling.tx_power;
    let noise = coupling.noise_power;
    let bw = coupling.bandwidth;
    let w: Vec<f64> = outputs
        .iter()
        .map(|&o| relaxed_width_deg(o).to_radians())
        .collect();
    let mut d_w = vec![0.0; n];
    let mut loss = 0.0;
    for i in 0..n {
        let m = mainlobe_gain(w[i]);
        let signal = p * m * m * coupling.path[i][i];
        let d_signal_dwi = 2.0 * p * m * mainlobe_derivative(w[i]) * coupling.path[i][i];
        let mut interference = 0.0;
        // (j, d/dw_j, d/dw_i) per interferer
        let mut terms = Vec::with_capacity(n.saturating_sub(1));
        for j in 0..n {
            if j == i {
                continue;
            }
            let (gt, dgt) = soft_gain(w[j], coupling.tx_offset[j][i]);
            let (gr, dgr) = soft_gain(w[i], coupling.rx_offset[j][i]);
            let scale = p * coupling.path[j][i];
            interference += scale * gt * gr;
            terms.push((j, scale * dgt * gr, scale * gt * dgr));
        }
        let denom = noise + interference;
        let sinr = signal / denom;
        if !sinr.is_finite() {
            return Err(GnnError::NonFiniteLoss);
        }
        loss -= bw * (1.0 + sinr).log2();
        let c = -(bw / LN_2) / (1.0 + sinr);
        let d_sig = c / denom;
        let d_int = -c * sinr / denom;
        d_w[i] += d_sig * d_signal_dwi;
        for (j, dj, di) in terms {
            d_w[j] += d_int * dj;
            d_w[i] += d_int * di;
        }
    }
    let grad = outputs
        .iter()
        .zip(&d_w)
        .map(|(&o, &dw)| {
            let s = sigmoid(o);
            dw * (std::f64::consts::PI / 180.0) * WIDTH_SPAN * s * (1.0 - s)
        })
        .collect();
    Ok((loss, grad))
}

/// Widths from the readout, then greedy deactivation: repeatedly switch off
/// the link whose removal raises sum capacity the most, while that strictly
/// helps. Returns the decision and the capacity after each accepted step.
pub fn decode_decision(
    coupling: &LinkCoupling,
    outputs: &[f64],
) -> Result<(BeamDecision, Vec<f64>), GnnError> {
    let n = coupling.len();
    if outputs.len() != n {
        return Err(GnnError::Shape("one readout value per link"));
    }
    if outputs.iter().any(|o| o.is_nan()) {
        return Err(GnnError::NonFiniteLoss);
    }
    let widths: Vec<u8> = outputs.iter().map(|&o| decode_width(o)).collect();
    let mut active = vec![true; n];
    let mut decision = BeamDecision::new(active.clone(), widths.clone())?;
    let mut current = coupling.sum_capacity(&decision);
    let mut steps = vec![current];
    while decision.active_count() > 1 {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..n {
            if !active[k] {
                continue;
            }
            active[k] = false;
            let cand = BeamDecision::new(active.clone(), widths.clone())?;
            let cap = coupling.sum_capacity(&cand);
            active[k] = true;
            if cap > current && best.is_none_or(|(_, b)| cap > b) {
                best = Some((k, cap));
            }
        }
        let Some((k, cap)) = best else { break };
        active[k] = false;
        decision = BeamDecision::new(active.clone(), widths.clone())?;
        current = cap;
        steps.push(cap);
    }
    Ok((decision, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfmodel::{LinkGeometry, RfParams, Vec3};

    fn coupling(links: &[LinkGeometry]) -> LinkCoupling {
        LinkCoupling::new(links, &RfParams::default()).unwrap()
    }

    fn crowded() -> Vec<LinkGeometry> {
        vec![
            LinkGeometry::new(Vec3::planar(0.0, 0.0), Vec3::planar(20.0, 0.0)).unwrap(),
            LinkGeometry::new(Vec3::planar(5.0, 0.3), Vec3::planar(24.0, 0.2)).unwrap(),
            LinkGeometry::new(Vec3::planar(10.0, -0.2), Vec3::planar(30.0, 0.1)).unwrap(),
        ]
    }

    #[test]
    fn width_decoding_limits() {
        assert_eq!(decode_width(-1e9), 1);
        assert_eq!(decode_width(0.0), 8);
        assert_eq!(decode_width(1e9), 15);
        assert_eq!(decode_width(f64::NEG_INFINITY), 1);
    }

    #[test]
    fn single_link_loss_is_negative_capacity_and_narrower_helps() {
        let links = [LinkGeometry::new(Vec3::planar(0.0, 0.0), Vec3::planar(25.0, 0.0)).unwrap()];
        let c = coupling(&links);
        let (l0, g) = relaxed_loss(&c, &[0.3]).unwrap();
        let w = relaxed_width_deg(0.3);
        let expected = -c.sum_capacity_with_powers(&[c.tx_power], &[w]);
        assert!((l0 - expected).abs() <= 1e-9 * expected.abs());
        // wider beam, higher loss
        assert!(g[0] > 0.0);
        let (l1, _) = relaxed_loss(&c, &[-0.3]).unwrap();
        assert!(l1 < l0);
    }

    #[test]
    fn zero_bandwidth_gives_zero_loss() {
        let mut c = coupling(&crowded());
        c.bandwidth = 0.0;
        let (l, g) = relaxed_loss(&c, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relaxed_gradient_matches_central_differences() {
        let c = coupling(&crowded());
        let o = [0.4, -1.2, 2.0];
        let (_, g) = relaxed_loss(&c, &o).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let mut p = o;
            p[k] += h;
            let mut m = o;
            m[k] -= h;
            let fd =
                (relaxed_loss(&c, &p).unwrap().0 - relaxed_loss(&c, &m).unwrap().0) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-5 * g[k].abs().max(fd.abs()),
                "{k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn greedy_never_below_all_active_and_exhaustive_bound() {
        let c = coupling(&crowded());
        for o in [[0.0, 0.0, 0.0], [3.0, 3.0, 3.0], [-2.0, 1.0, 4.0]] {
            let (d, steps) = decode_decision(&c, &o).unwrap();
            let widths: Vec<u8> = o.iter().map(|&v| decode_width(v)).collect();
            let all = c.sum_capacity(&BeamDecision::new(vec![true; 3], widths.clone()).unwrap());
            let got = c.sum_capacity(&d);
            assert!(got >= all);
            assert!(steps.windows(2).all(|w| w[1] > w[0]));
            // best activation pattern for the same widths bounds greedy
            let mut best = 0.0f64;
            for mask in 1u32..8 {
                let act: Vec<bool> = (0..3).map(|i| mask >> i & 1 == 1).collect();
                best = best.max(c.sum_capacity(&BeamDecision::new(act, widths.clone()).unwrap()));
            }
            assert!(got <= best * (1.0 + 1e-12));
            assert!(d.active_count() >= 1);
        }
    }
}
