//! Secret-bit separable protocol: spin-by-spin transmission of a direction.
//!
//! Alice encodes each bit of a shared secret string as a spin prepared up or
//! down along her z axis. Bob measures along his own x, y, z axes in turn;
//! the fraction of outcomes matching the secret string estimates the angle
//! between each of his axes and Alice's z, and the three direction cosines
//! reconstruct the direction. An intercept-resend eavesdropper depolarizes
//! the spins, which drags the sum of squared cosines away from one and
//! trips the consistency alarm. A photon-polarization variant handles the
//! planar case with two analyzer settings.

use rand::Rng;

use crate::su2::Rotation;

/// Eavesdropper models for the separable channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eavesdropper {
    None,
    /// Measures every transiting spin along a fresh uniformly random axis
    /// and resends the outcome eigenstate.
    InterceptResendRandomAxis,
    /// Same, but along one fixed axis.
    InterceptResendFixedAxis([f64; 3]),
}

/// Outcome counts for one measurement axis: `counts[outcome][bit]` with
/// outcome 0 = up, 1 = down.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeasurementTally {
    pub counts: [[u64; 2]; 2],
}

impl MeasurementTally {
    pub fn record(&mut self, up: bool, bit: u8) {
        self.counts[usize::from(!up)][usize::from(bit)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Matches between outcome and secret bit: up on 0, down on 1.
    pub fn matches(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }
}

/// Angle estimate recovered from one axis worth of statistics.
#[derive(Debug, Clone, Copy)]
pub struct AngleEstimate {
    /// Fraction of outcomes matching the secret string.
    pub p_bar: f64,
    /// `2 arccos(sqrt(p_bar))`, in `[0, pi]`.
    pub theta_hat: f64,
    /// First-order error propagated through the estimator.
    pub delta_theta: f64,
    /// The large-N simplification `1/sqrt(N)`.
    pub delta_theta_large_n: f64,
}

/// Simulates one spin: preparation direction against measurement direction,
/// up with probability `cos^2(theta/2)`.
pub fn qubit_outcome<R: Rng + ?Sized>(prep: [f64; 3], meas: [f64; 3], rng: &mut R) -> bool {
    let cos_theta = prep[0] * meas[0] + prep[1] * meas[1] + prep[2] * meas[2];
    let p_up = 0.5 * (1.0 + cos_theta.clamp(-1.0, 1.0));
    rng.random::<f64>() < p_up
}

/// Angle estimator for one axis: `p_bar = [N(up,0) + N(down,1)] / N`,
/// `theta = 2 arccos(sqrt(p_bar))`, with the statistical error propagated
/// through `|dp/dtheta| = sin(theta)/2`. At `p_bar` of exactly 0 or 1 the
/// derivative vanishes and the error falls back to `1/sqrt(N)`.
pub fn estimate_angle(tally: &MeasurementTally) -> AngleEstimate {
    let n = tally.total();
    assert!(n >= 1, "empty tally");
    let nf = n as f64;
    let p_bar = tally.matches() as f64 / nf;
    let theta_hat = 2.0 * p_bar.clamp(0.0, 1.0).sqrt().acos();
    let large_n = 1.0 / nf.sqrt();
    let slope = 0.5 * theta_hat.sin();
    let delta_theta = if p_bar <= 0.0 || p_bar >= 1.0 || slope < 1e-12 {
        large_n
    } else {
        (p_bar * (1.0 - p_bar)).sqrt() / (nf.sqrt() * slope)
    };
    AngleEstimate { p_bar, theta_hat, delta_theta, delta_theta_large_n: large_n }
}

/// Result of one run of the separable direction transfer.
#[derive(Debug, Clone)]
pub struct DirectionResult {
    /// Reconstructed direction of Alice's z axis in Bob's frame.
    pub direction: [f64; 3],
    /// Angle between the reconstruction and the true direction.
    pub error_angle: f64,
    pub alarm: bool,
    /// Bias-corrected `sum_i cos^2(theta_i) - 1`.
    pub alarm_statistic: f64,
    /// Propagated standard deviation of the alarm statistic.
    pub alarm_sigma: f64,
    /// Set when all three cosines are too small to normalize reliably.
    pub degenerate: bool,
    pub per_axis: [AngleEstimate; 3],
}

/// Runs the separable protocol: `3 n_per_axis` spins, Bob cycling through
/// his x, y, z axes. The alarm fires when the bias-corrected sum of squared
/// cosines sits more than `k_sigma` propagated deviations away from one.
pub fn run_separable<R: Rng + ?Sized>(
    n_per_axis: usize,
    true_rotation: Rotation,
    eve: Eavesdropper,
    k_sigma: f64,
    rng: &mut R,
) -> DirectionResult {
    assert!(n_per_axis >= 100, "too few spins per axis");
    let secret_dir = true_rotation.rotate_vector([0.0, 0.0, 1.0]);
    let bob_axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut tallies = [MeasurementTally::default(); 3];
    for k in 0..3 * n_per_axis {
        let axis = k % 3;
        let bit = u8::from(rng.random::<bool>());
        let mut prep = if bit == 0 {
            secret_dir
        } else {
            [-secret_dir[0], -secret_dir[1], -secret_dir[2]]
        };
        match eve {
            Eavesdropper::None => {}
            Eavesdropper::InterceptResendRandomAxis => {
                let e = crate::su2::uniform_axis(rng);
                prep = resend(prep, e, rng);
            }
            Eavesdropper::InterceptResendFixedAxis(e) => {
                prep = resend(prep, e, rng);
            }
        }
        let up = qubit_outcome(prep, bob_axes[axis], rng);
        tallies[axis].record(up, bit);
    }
    let per_axis = [
        estimate_angle(&tallies[0]),
        estimate_angle(&tallies[1]),
        estimate_angle(&tallies[2]),
    ];
    // The match statistic determines signed cosines directly:
    // cos(theta) = 2 p_bar - 1.
    let cosines: Vec<f64> = per_axis.iter().map(|e| 2.0 * e.p_bar - 1.0).collect();
    let nf = n_per_axis as f64;
    let mut statistic = -1.0;
    let mut variance = 0.0;
    for (c, est) in cosines.iter().zip(&per_axis) {
        let v = 4.0 * est.p_bar * (1.0 - est.p_bar) / nf;
        statistic += c * c - v; // bias-corrected square
        variance += 4.0 * c * c * v + 2.0 * v * v;
    }
    let alarm_sigma = variance.sqrt();
    let alarm = statistic.abs() > k_sigma * alarm_sigma;

    let norm = (cosines[0].powi(2) + cosines[1].powi(2) + cosines[2].powi(2)).sqrt();
    let degenerate = norm < 0.1;
    let direction = if norm > 1e-12 {
        [cosines[0] / norm, cosines[1] / norm, cosines[2] / norm]
    } else {
        [0.0, 0.0, 1.0]
    };
    let dot = (direction[0] * secret_dir[0]
        + direction[1] * secret_dir[1]
        + direction[2] * secret_dir[2])
        .clamp(-1.0, 1.0);
    DirectionResult {
        direction,
        error_angle: dot.acos(),
        alarm,
        alarm_statistic: statistic,
        alarm_sigma,
        degenerate,
        per_axis,
    }
}

fn resend<R: Rng + ?Sized>(prep: [f64; 3], axis: [f64; 3], rng: &mut R) -> [f64; 3] {
    if qubit_outcome(prep, axis, rng) {
        axis
    } else {
        [-axis[0], -axis[1], -axis[2]]
    }
}

/// Result of the planar photon-polarization variant.
#[derive(Debug, Clone, Copy)]
pub struct PlanarResult {
    /// Reconstructed polarization angle, in `[-pi/2, pi/2)` modulo pi.
    pub estimate_angle: f64,
    /// Absolute in-plane angle error of the reconstruction, `[0, pi/2]`.
    pub direction_error: f64,
    /// Sum of the two per-analyzer angle errors (the protocol's overall
    /// accuracy figure, in great-circle terms on the state sphere).
    pub overall_error: f64,
    pub per_analyzer: [AngleEstimate; 2],
}

/// Planar variant with single photons. Polarization is a headless in-plane
/// direction, so one analyzer pair at 0 and 45 degrees spans the two
/// orthogonal coordinates of the state sphere's equator; analyzers at 0 and
/// 90 degrees would measure the same quantity twice.
pub fn run_planar<R: Rng + ?Sized>(
    n_per_analyzer: usize,
    true_angle: f64,
    eve: Eavesdropper,
    rng: &mut R,
) -> PlanarResult {
    assert!(n_per_analyzer >= 100, "too few photons per analyzer");
    let analyzers = [0.0, std::f64::consts::FRAC_PI_4];
    let mut tallies = [MeasurementTally::default(); 2];
    for k in 0..2 * n_per_analyzer {
        let which = k % 2;
        let bit = u8::from(rng.random::<bool>());
        let mut pol = if bit == 0 {
            true_angle
        } else {
            true_angle + std::f64::consts::FRAC_PI_2
        };
        match eve {
            Eavesdropper::None => {}
            Eavesdropper::InterceptResendRandomAxis => {
                let e = std::f64::consts::PI * rng.random::<f64>();
                pol = resend_planar(pol, e, rng);
            }
            Eavesdropper::InterceptResendFixedAxis(_) => {
                pol = resend_planar(pol, 0.0, rng);
            }
        }
        let pass = planar_outcome(pol, analyzers[which], rng);
        tallies[which].record(pass, bit);
    }
    let per_analyzer = [estimate_angle(&tallies[0]), estimate_angle(&tallies[1])];
    // State-sphere coordinates: cos(2(phi - a)) = 2 p_bar - 1 per analyzer.
    let cx = 2.0 * per_analyzer[0].p_bar - 1.0;
    let cy = 2.0 * per_analyzer[1].p_bar - 1.0;
    let estimate_angle_val = wrap_polarization(0.5 * cy.atan2(cx));
    let direction_error = polarization_distance(estimate_angle_val, true_angle);
    let overall_error: f64 = per_analyzer
        .iter()
        .zip(analyzers)
        .map(|(est, a)| {
            let true_sphere = fold_angle(2.0 * (true_angle - a));
            (est.theta_hat - true_sphere).abs()
        })
        .sum();
    PlanarResult { estimate_angle: estimate_angle_val, direction_error, overall_error, per_analyzer }
}

/// Malus-law single photon: pass with probability `cos^2(pol - analyzer)`.
pub fn planar_outcome<R: Rng + ?Sized>(pol: f64, analyzer: f64, rng: &mut R) -> bool {
    let p = (pol - analyzer).cos().powi(2);
    rng.random::<f64>() < p
}

fn resend_planar<R: Rng + ?Sized>(pol: f64, analyzer: f64, rng: &mut R) -> f64 {
    if planar_outcome(pol, analyzer, rng) {
        analyzer
    } else {
        analyzer + std::f64::consts::FRAC_PI_2
    }
}

/// Folds an angle into `[0, pi]` (distance on a circle of circumference
/// 2 pi).
fn fold_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        two_pi - r
    } else {
        r
    }
}

/// Representative of a polarization angle in `[-pi/2, pi/2)`.
fn wrap_polarization(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::PI);
    if r >= std::f64::consts::FRAC_PI_2 {
        r - std::f64::consts::PI
    } else {
        r
    }
}

/// Distance between two polarization directions, in `[0, pi/2]`.
pub fn polarization_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}
