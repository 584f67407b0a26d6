//! Channel gains, SINR, exact and high-SINR capacity, and M/M/1 link delay.
//!
//! Gains are indexed `gains[(k, l)]`: the gain from the transmitter of active
//! link `k` into the receiver of active link `l`. The diagonal holds the
//! primary-link gains. All logarithms are natural, so capacities are in nats
//! per channel use.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DimensionError;
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error("gain matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("gain ({from}, {to}) = {value} is negative or not finite")]
    BadGain { from: usize, to: usize, value: f64 },
    #[error("primary gain of link {0} must be positive")]
    ZeroPrimaryGain(usize),
    #[error("noise power of link {link} is {value}, must be positive")]
    BadNoise { link: usize, value: f64 },
    #[error("power of link {link} is {value}, must be positive and finite")]
    BadPower { link: usize, value: f64 },
}

/// Gains and receiver noise for the active links of one slot.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(try_from = "ChannelRows", into = "ChannelRows")
)]
pub struct ChannelState {
    gains: DMatrix<f64>,
    noise: Vec<f64>,
}

/// Serialized form of [`ChannelState`]: row `k` holds the gains out of link
/// `k`'s transmitter.
#[cfg(feature = "serde")]
#[derive(Serialize, Deserialize)]
struct ChannelRows {
    gains: Vec<Vec<f64>>,
    noise: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<ChannelRows> for ChannelState {
    type Error = ChannelError;

    fn try_from(rows: ChannelRows) -> Result<Self, ChannelError> {
        let n = rows.gains.len();
        if let Some(bad) = rows.gains.iter().find(|r| r.len() != n) {
            return Err(ChannelError::NotSquare { rows: n, cols: bad.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |k, l| rows.gains[k][l]), rows.noise)
    }
}

#[cfg(feature = "serde")]
impl From<ChannelState> for ChannelRows {
    fn from(ch: ChannelState) -> Self {
        let n = ch.n_links();
        Self { gains: (0..n).map(|k| (0..n).map(|l| ch.gains[(k, l)]).collect()).collect(), noise: ch.noise }
    }
}

impl ChannelState {
    pub fn new(gains: DMatrix<f64>, noise: Vec<f64>) -> Result<Self, ChannelError> {
        let (rows, cols) = gains.shape();
        if rows != cols {
            return Err(ChannelError::NotSquare { rows, cols });
        }
        DimensionError::check("noise vector", rows, noise.len())?;
        for k in 0..rows {
            for l in 0..rows {
                let g = gains[(k, l)];
                if !(g.is_finite() && g >= 0.0) {
                    return Err(ChannelError::BadGain { from: k, to: l, value: g });
                }
            }
            if gains[(k, k)] <= 0.0 {
                return Err(ChannelError::ZeroPrimaryGain(k));
            }
        }
        if let Some((link, &value)) = noise.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
            return Err(ChannelError::BadNoise { link, value });
        }
        Ok(Self { gains, noise })
    }

    /// Row-major `n x n` gains with the same noise on every receiver.
    pub fn from_rows(rows: &[Vec<f64>], noise: f64) -> Result<Self, ChannelError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(ChannelError::NotSquare { rows: n, cols: bad.len() });
        }
        let gains = DMatrix::from_fn(n, n, |k, l| rows[k][l]);
        Self::new(gains, vec![noise; n])
    }

    pub fn n_links(&self) -> usize {
        self.noise.len()
    }

    pub fn gains(&self) -> &DMatrix<f64> {
        &self.gains
    }

    pub fn gain(&self, from: usize, to: usize) -> f64 {
        self.gains[(from, to)]
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    /// Same state with all interference gains removed.
    pub fn orthogonal(&self) -> Self {
        let n = self.n_links();
        let gains = DMatrix::from_fn(n, n, |k, l| if k == l { self.gains[(k, l)] } else { 0.0 });
        Self { gains, noise: self.noise.clone() }
    }

    /// `sigma_l + sum_{k != l} G_kl p_k`.
    pub fn interference_plus_noise(&self, power: &[f64], l: usize) -> f64 {
        power
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != l)
            .fold(self.noise[l], |acc, (k, &p)| acc + self.gains[(k, l)] * p)
    }

    pub fn sinr(&self, power: &[f64], l: usize) -> f64 {
        self.gains[(l, l)] * power[l] / self.interference_plus_noise(power, l)
    }

    /// Shannon rate `1/2 ln(1 + SINR)`.
    pub fn capacity_exact(&self, power: &[f64], l: usize) -> f64 {
        0.5 * math::ln_1p(self.sinr(power, l))
    }

    /// High-SINR rate in log-power coordinates,
    /// `-1/2 ln(sigma e^{-pt_l} / G_ll + sum_{k != l} G_kl e^{pt_k - pt_l} / G_ll)`,
    /// which equals `1/2 ln(SINR)`.
    pub fn capacity_approx(&self, log_power: &[f64], l: usize) -> f64 {
        let g_ll = self.gains[(l, l)];
        let mut inner = self.noise[l] * math::exp(-log_power[l]) / g_ll;
        for (k, &pk) in log_power.iter().enumerate() {
            if k != l {
                inner += self.gains[(k, l)] * math::exp(pk - log_power[l]) / g_ll;
            }
        }
        -0.5 * math::ln(inner)
    }
}

/// Transmit powers of the active links, kept alongside their logarithms.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PowerVector {
    power: Vec<f64>,
    log_power: Vec<f64>,
}

impl PowerVector {
    pub fn from_power(power: Vec<f64>) -> Result<Self, ChannelError> {
        if let Some((link, &value)) = power.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
            return Err(ChannelError::BadPower { link, value });
        }
        let log_power = power.iter().map(|&p| math::ln(p)).collect();
        Ok(Self { power, log_power })
    }

    pub fn from_log(log_power: Vec<f64>) -> Self {
        let power = log_power.iter().map(|&x| math::exp(x)).collect();
        Self { power, log_power }
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn log_power(&self) -> &[f64] {
        &self.log_power
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }
}

pub fn sinr(ch: &ChannelState, p: &PowerVector, l: usize) -> f64 {
    ch.sinr(p.power(), l)
}

pub fn capacity_exact(ch: &ChannelState, p: &PowerVector, l: usize) -> f64 {
    ch.capacity_exact(p.power(), l)
}

pub fn capacity_approx(ch: &ChannelState, p: &PowerVector, l: usize) -> f64 {
    ch.capacity_approx(p.log_power(), l)
}

/// Offered flow meets or exceeds the link capacity.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("capacity violation on link {link:?}: flow {flow} needs capacity above it, got {capacity}")]
pub struct CapacityViolation {
    pub link: Option<usize>,
    pub flow: f64,
    pub capacity: f64,
}

/// M/M/1 delay `d / (c - d)`.
pub fn link_delay(flow: f64, capacity: f64) -> Result<f64, CapacityViolation> {
    if capacity > flow {
        Ok(flow / (capacity - flow))
    } else {
        Err(CapacityViolation { link: None, flow, capacity })
    }
}

/// Sum of link delays; the error names the first saturated link.
pub fn total_delay(flows: &[f64], capacities: &[f64]) -> Result<f64, CapacityViolation> {
    assert_eq!(flows.len(), capacities.len(), "flow and capacity vectors differ in length");
    flows
        .iter()
        .zip(capacities)
        .enumerate()
        .try_fold(0.0, |acc, (l, (&d, &c))| {
            link_delay(d, c)
                .map(|t| acc + t)
                .map_err(|e| CapacityViolation { link: Some(l), ..e })
        })
}

/// Parameters of the random gain model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GainModel {
    /// Primary-link gain (diagonal).
    pub primary_gain: f64,
    /// Cross gains are drawn from `U(0, max_cross_gain]`.
    pub max_cross_gain: f64,
    pub noise: f64,
}

impl Default for GainModel {
    fn default() -> Self {
        Self { primary_gain: 1.0, max_cross_gain: 0.01, noise: 1e-5 }
    }
}

/// Gains for `n_links` simultaneously active links under the default model.
pub fn sample_gains<R: Rng + ?Sized>(rng: &mut R, n_links: usize) -> ChannelState {
    sample_gains_with(rng, n_links, &GainModel::default())
}

pub fn sample_gains_with<R: Rng + ?Sized>(rng: &mut R, n_links: usize, model: &GainModel) -> ChannelState {
    let mut gains = DMatrix::zeros(n_links, n_links);
    // row-major draw order keeps seeds stable if the matrix layout changes
    for k in 0..n_links {
        for l in 0..n_links {
            gains[(k, l)] = if k == l {
                model.primary_gain
            } else {
                model.max_cross_gain * (1.0 - rng.random::<f64>())
            };
        }
    }
    ChannelState { gains, noise: vec![model.noise; n_links] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_link(off: f64) -> ChannelState {
        ChannelState::from_rows(&[vec![1.0, off], vec![off, 1.0]], 1e-5).unwrap()
    }

    #[test]
    fn single_link_sinr() {
        let ch = ChannelState::from_rows(&[vec![1.0]], 1e-5).unwrap();
        assert!((ch.sinr(&[10.0], 0) - 1e6).abs() < 1e-6);
    }

    #[test]
    fn two_link_sinr() {
        let ch = two_link(0.01);
        let s = ch.sinr(&[10.0, 10.0], 0);
        assert!((s - 10.0 / (0.1 + 1e-5)).abs() < 1e-9);
        assert!((s - 99.99).abs() < 1e-2);
    }

    #[test]
    fn orthogonal_channel_drops_interference() {
        let ch = two_link(0.3).orthogonal();
        assert_eq!(ch.sinr(&[2.0, 5.0], 1), 5.0 / 1e-5);
    }

    #[test]
    fn exact_capacity_values() {
        let ch = ChannelState::from_rows(&[vec![1.0]], 1e-5).unwrap();
        // SINR = 1e6
        assert!((ch.capacity_exact(&[10.0], 0) - 6.907_755_778_981_887).abs() < 1e-12);
        assert!(ch.capacity_exact(&[1e-300], 0) < 1e-290);
        let ch = ChannelState::from_rows(&[vec![1.0]], 1.0).unwrap();
        let p = libm::exp(2.0) - 1.0;
        assert!((ch.capacity_exact(&[p], 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn approx_capacity_values() {
        let ch = ChannelState::from_rows(&[vec![1.0]], 1.0).unwrap();
        let c = ch.capacity_approx(&[libm::log(143.1230)], 0);
        assert!((c - 0.5 * libm::log(143.1230)).abs() < 1e-12);
        assert!((c - 2.4818).abs() < 1e-4);
        // low-SINR gap
        assert!(ch.capacity_approx(&[0.0], 0).abs() < 1e-15);
        assert!((ch.capacity_exact(&[1.0], 0) - 0.5 * core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn link_delay_cases() {
        assert_eq!(link_delay(0.0, 3.0).unwrap(), 0.0);
        let c = 0.5 * libm::log(143.1230);
        assert!((link_delay(0.8752, c).unwrap() - 0.5447).abs() < 1e-3);
        let e = link_delay(0.5, 0.5).unwrap_err();
        assert_eq!((e.flow, e.capacity), (0.5, 0.5));
    }

    #[test]
    fn total_delay_names_saturated_link() {
        assert_eq!(total_delay(&[0.0], &[1.0]).unwrap(), 0.0);
        let e = total_delay(&[0.1, 0.7], &[1.0, 0.6]).unwrap_err();
        assert_eq!(e.link, Some(1));
    }

    #[test]
    fn sampled_gains_follow_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = sample_gains(&mut rng, 6);
        for k in 0..6 {
            for l in 0..6 {
                let g = ch.gain(k, l);
                if k == l {
                    assert_eq!(g, 1.0);
                } else {
                    assert!(g > 0.0 && g <= 0.01);
                }
            }
        }
        assert!(ch.noise().iter().all(|&s| s == 1e-5));
        let one = sample_gains(&mut rng, 1);
        assert_eq!(one.gains().as_slice(), &[1.0]);
        let again = sample_gains(&mut ChaCha8Rng::seed_from_u64(7), 6);
        assert_eq!(again, ch);
    }

    #[test]
    fn rejects_bad_states() {
        assert!(matches!(
            ChannelState::from_rows(&[vec![0.0]], 1e-5),
            Err(ChannelError::ZeroPrimaryGain(0))
        ));
        assert!(matches!(
            ChannelState::from_rows(&[vec![1.0]], 0.0),
            Err(ChannelError::BadNoise { .. })
        ));
        assert!(matches!(
            ChannelState::from_rows(&[vec![1.0, -0.1], vec![0.0, 1.0]], 1e-5),
            Err(ChannelError::BadGain { from: 0, to: 1, .. })
        ));
        assert!(PowerVector::from_power(vec![1.0, 0.0]).is_err());
    }

    fn state_strategy() -> impl Strategy<Value = (ChannelState, Vec<f64>)> {
        (1usize..5).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0..0.5f64, n * n),
                proptest::collection::vec(1e-6..1e-2f64, n),
                proptest::collection::vec(-8.0..4.0f64, n),
            )
                .prop_map(move |(g, s, lp)| {
                    let gains = DMatrix::from_fn(n, n, |k, l| if k == l { 0.5 + g[k * n + l] } else { g[k * n + l] });
                    (ChannelState::new(gains, s).unwrap(), lp)
                })
        })
    }

    proptest! {
        #[test]
        fn approx_is_half_log_sinr_and_underestimates((ch, lp) in state_strategy()) {
            let p = PowerVector::from_log(lp);
            for l in 0..ch.n_links() {
                let s = sinr(&ch, &p, l);
                let approx = capacity_approx(&ch, &p, l);
                let exact = capacity_exact(&ch, &p, l);
                prop_assert!((approx - 0.5 * libm::log(s)).abs() <= 1e-12 * (1.0 + approx.abs()));
                prop_assert!(exact - approx >= 0.0);
                prop_assert!((exact - approx - 0.5 * libm::log1p(1.0 / s)).abs() <= 1e-12);
            }
        }

        #[test]
        fn sinr_is_scale_free((ch, lp) in state_strategy(), k in 1e-3..1e3f64) {
            let p = PowerVector::from_log(lp);
            let scaled_p: Vec<f64> = p.power().iter().map(|x| x * k).collect();
            let scaled = ChannelState::new(ch.gains().clone(), ch.noise().iter().map(|s| s * k).collect()).unwrap();
            for l in 0..ch.n_links() {
                let a = ch.sinr(p.power(), l);
                let b = scaled.sinr(&scaled_p, l);
                prop_assert!((a - b).abs() <= 1e-10 * a);
            }
        }

        #[test]
        fn delay_monotone(d in 0.01..2.0f64, c in 0.0..5.0f64, bump in 1e-3..1.0f64) {
            let c = d + 1e-3 + c;
            let base = link_delay(d, c).unwrap();
            prop_assert!(link_delay(d, c + bump).unwrap() < base);
            if d + bump < c {
                prop_assert!(link_delay(d + bump, c).unwrap() > base);
            }
        }
    }
}
