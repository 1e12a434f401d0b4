//! Prepare-and-measure frame alignment with multiplicity test states.
//!
//! Alice interleaves orientation states (the rotated signal state) with
//! test states that look almost identical to an eavesdropper but are
//! pinned to one multiplicity slot in either the computational or the
//! Fourier slot basis. After public sifting, slot mismatches on kept test
//! rounds betray any eavesdropper who touched the rotation-invariant
//! subsystems; an eavesdropper who stays block diagonal evades the test
//! but learns nothing about the frame.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::blocks::{fourier_column, signal_amplitudes, BlockDensity, BlockShape, BlockVector, DensityBlock};
use crate::harness::trial_rng;
use crate::optimal::{sample_outcome, OutcomeDensity};
use crate::su2::{HalfInt, Rotation};
use crate::{Error, Result};

/// Eavesdropper models for the prepare-and-measure protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eavesdropper {
    None,
    /// A fresh Haar-random collective rotation per round: block diagonal,
    /// hence invisible to every test round, but it scrambles the frame
    /// information Bob recovers (and gains Eve nothing).
    BlockDiagonal,
    /// Orientation measurement plus re-preparation on every round. This
    /// touches the multiplicity correlations, so kept test rounds mismatch
    /// with high probability.
    MeasureReprepare,
}

/// Test state on block j: maximally mixed on the rotation factor, pinned to
/// slot `m` of the entangled corner (Fourier slot basis when `tilde`).
pub fn test_state(shape: &BlockShape, j: HalfInt, m: usize, tilde: bool) -> Result<BlockDensity> {
    let info = shape.block(j).ok_or(Error::BlockUnavailable {
        j2: j.twice(),
        reason: "not present in the decomposition",
    })?;
    let d = info.dim;
    if m >= d {
        return Err(Error::BlockUnavailable { j2: j.twice(), reason: "slot index out of range" });
    }
    let slot: DVector<Complex64> = if tilde {
        fourier_column(d, m)
    } else {
        DVector::from_fn(d, |t, _| Complex64::new(f64::from(t == m), 0.0))
    };
    let slot_proj = &slot * slot.adjoint();
    let rot_mixed = DMatrix::<Complex64>::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0);
    let op = rot_mixed.kronecker(&slot_proj);
    Ok(BlockDensity::new(
        shape.n_spins(),
        vec![DensityBlock { j, mult_dim: d, op }],
    ))
}

/// Expectation value of a block density in a pure block state.
pub fn state_overlap(rho: &BlockDensity, v: &BlockVector) -> f64 {
    let mut acc = 0.0;
    for b in rho.blocks() {
        if let Some(c) = v.coeff(b.j) {
            let (rows, cols) = c.shape();
            if cols != b.mult_dim {
                continue;
            }
            let flat = DVector::from_fn(rows * cols, |i, _| c[(i / cols, i % cols)]);
            acc += (flat.adjoint() * &b.op * &flat)[(0, 0)].re;
        }
    }
    acc
}

/// Slot-measurement outcome probabilities of a block density: per block,
/// the slot distribution in the computational or Fourier basis.
pub fn slot_probabilities(rho: &BlockDensity, tilde: bool) -> Vec<(HalfInt, Vec<f64>)> {
    rho.blocks()
        .iter()
        .map(|b| {
            let marginal = rho.mult_marginal(b.j).expect("block listed");
            let s = b.mult_dim;
            let probs = (0..s)
                .map(|k| {
                    if tilde {
                        let f = fourier_column(s, k);
                        (f.adjoint() * &marginal * &f)[(0, 0)].re
                    } else {
                        marginal[(k, k)].re
                    }
                })
                .collect();
            (b.j, probs)
        })
        .collect()
}

/// Samples a von Neumann slot measurement: block by weight, then slot by
/// the Born rule in the chosen basis.
pub fn test_measurement<R: Rng + ?Sized>(
    rho: &BlockDensity,
    tilde: bool,
    rng: &mut R,
) -> (HalfInt, usize) {
    let table = slot_probabilities(rho, tilde);
    let total: f64 = table.iter().flat_map(|(_, p)| p.iter()).sum();
    let mut u = rng.random::<f64>() * total;
    for (j, probs) in &table {
        for (slot, p) in probs.iter().enumerate() {
            if u < *p {
                return (*j, slot);
            }
            u -= p;
        }
    }
    let last = table.last().expect("nonempty density");
    (last.0, last.1.len() - 1)
}

/// What Alice put on the channel in one round.
#[derive(Debug, Clone, Copy)]
pub enum SenderChoice {
    /// The signal state rotated by a fresh random `h`.
    Orientation(Rotation),
    Test { j: HalfInt, m: usize, tilde: bool },
}

/// Which measurement Bob ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverChoice {
    Orientation,
    SlotComputational,
    SlotFourier,
}

#[derive(Debug, Clone, Copy)]
pub enum RoundOutcome {
    /// Bob's estimate of the frame rotation, after Alice reveals `h`.
    Frame(Rotation),
    Slot { j: HalfInt, m: usize },
    Discarded,
}

#[derive(Debug, Clone, Copy)]
pub struct Round {
    pub sender: SenderChoice,
    pub receiver: ReceiverChoice,
    pub kept: bool,
    pub outcome: RoundOutcome,
}

/// Outcome of one protocol session.
#[derive(Debug, Clone)]
pub struct Bb84Result {
    pub rounds: usize,
    pub kept_test: usize,
    pub mismatches: usize,
    /// Mismatch fraction over kept test rounds.
    pub mismatch_rate: f64,
    /// `None` when no test round survived sifting.
    pub detection: Option<bool>,
    pub kept_orientation: usize,
    /// Error of the combined (averaged) frame estimate over kept
    /// orientation rounds.
    pub frame_error: f64,
    /// rms of the per-round frame errors.
    pub per_round_rms: f64,
    /// The session's hidden frame rotation (for diagnostics).
    pub true_frame: Rotation,
    pub transcript: Vec<Round>,
}

/// Runs one session of `rounds` rounds at `n_spins` spins per state.
pub fn run_bb84(
    n_spins: usize,
    rounds: usize,
    eve: Eavesdropper,
    threshold: f64,
    master_seed: u64,
) -> Result<Bb84Result> {
    if rounds < 8 {
        return Err(Error::InvalidConfig("need at least 8 rounds".into()));
    }
    let shape = BlockShape::for_spins(n_spins);
    let amps = signal_amplitudes(&shape)?;
    let density = OutcomeDensity::for_shape(&shape)?;
    // The unknown frame, fixed for the session.
    let g = Rotation::haar(&mut trial_rng(master_seed, u64::MAX));

    let per_round: Vec<Round> = (0..rounds)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(master_seed, t as u64);
            simulate_round(&shape, &amps, &density, g, eve, &mut rng)
        })
        .collect();

    let mut kept_test = 0;
    let mut mismatches = 0;
    let mut kept_orientation = 0;
    let mut sq_sum = 0.0;
    let mut scatter = DMatrix::<f64>::zeros(4, 4);
    for round in &per_round {
        match (&round.sender, &round.outcome) {
            (SenderChoice::Test { j, m, .. }, RoundOutcome::Slot { j: oj, m: om }) => {
                kept_test += 1;
                if oj != j || om != m {
                    mismatches += 1;
                }
            }
            (SenderChoice::Orientation(_), RoundOutcome::Frame(est)) => {
                kept_orientation += 1;
                let err = g.so3_distance(*est);
                sq_sum += err * err;
                let q = [est.w, est.x, est.y, est.z];
                for a in 0..4 {
                    for b in 0..4 {
                        scatter[(a, b)] += q[a] * q[b];
                    }
                }
            }
            _ => {}
        }
    }
    let mismatch_rate = if kept_test > 0 {
        mismatches as f64 / kept_test as f64
    } else {
        0.0
    };
    let detection = (kept_test > 0).then_some(mismatch_rate > threshold);
    let (frame_error, per_round_rms) = if kept_orientation > 0 {
        let eig = scatter.symmetric_eigen();
        let top = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("4x4 spectrum");
        let v = eig.eigenvectors.column(top);
        let avg = Rotation::new(v[0], v[1], v[2], v[3]);
        (g.so3_distance(avg), (sq_sum / kept_orientation as f64).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Bb84Result {
        rounds,
        kept_test,
        mismatches,
        mismatch_rate,
        detection,
        kept_orientation,
        frame_error,
        per_round_rms,
        true_frame: g,
        transcript: per_round,
    })
}

fn simulate_round<R: Rng + ?Sized>(
    _shape: &BlockShape,
    amps: &[(HalfInt, f64)],
    density: &OutcomeDensity,
    g: Rotation,
    eve: Eavesdropper,
    rng: &mut R,
) -> Round {
    // Alice: orientation with probability 1/2, otherwise one of the two
    // test kinds; test blocks weighted like the signal state.
    let sender = if rng.random::<bool>() {
        Sender::Orientation(Rotation::haar(rng))
    } else {
        let tilde = rng.random::<bool>();
        let j = draw_block(amps, rng);
        let m = rng.random_range(0..j.dim());
        Sender::Test { j, m, tilde }
    };
    // Bob: orientation 1/2, computational 1/4, Fourier 1/4.
    let receiver = if rng.random::<bool>() {
        ReceiverChoice::Orientation
    } else if rng.random::<bool>() {
        ReceiverChoice::SlotComputational
    } else {
        ReceiverChoice::SlotFourier
    };
    let kept = matches!(
        (&sender, receiver),
        (Sender::Orientation(_), ReceiverChoice::Orientation)
            | (Sender::Test { tilde: false, .. }, ReceiverChoice::SlotComputational)
            | (Sender::Test { tilde: true, .. }, ReceiverChoice::SlotFourier)
    );
    // Eve acts on every round; she cannot tell the kinds apart.
    let eve_rotation = match eve {
        Eavesdropper::BlockDiagonal => Some(Rotation::haar(rng)),
        _ => None,
    };
    let eve_reprepared = match (eve, &sender) {
        (Eavesdropper::MeasureReprepare, Sender::Orientation(h)) => {
            // Her estimate of the prepared orientation g h.
            Some(sample_outcome(g.compose(*h), density, rng).estimate)
        }
        (Eavesdropper::MeasureReprepare, Sender::Test { .. }) => {
            // On test states her orientation outcome is exactly uniform.
            Some(Rotation::haar(rng))
        }
        _ => None,
    };
    let outcome = if !kept {
        // Burn the measurement draw so kept statistics do not depend on
        // sifting bookkeeping order.
        let _ = rng.random::<f64>();
        RoundOutcome::Discarded
    } else {
        match (&sender, receiver) {
            (Sender::Orientation(h), ReceiverChoice::Orientation) => {
                let prepared = match (eve_reprepared, eve_rotation) {
                    (Some(e), _) => e,
                    (None, Some(e)) => e.compose(g.compose(*h)),
                    (None, None) => g.compose(*h),
                };
                let est = sample_outcome(prepared, density, rng).estimate;
                // Alice reveals h; Bob divides it out.
                RoundOutcome::Frame(est.compose(h.inverse()))
            }
            (Sender::Test { j, m, .. }, _) => {
                match eve_reprepared {
                    Some(eve_h) => {
                        // Bob measures slots on Eve's re-prepared signal
                        // state: block weighted by the amplitudes, slot
                        // uniform - the multiplicity marginal is flat and
                        // independent of the preparation rotation.
                        let _ = eve_h;
                        let oj = draw_block(amps, rng);
                        let om = rng.random_range(0..oj.dim());
                        RoundOutcome::Slot { j: oj, m: om }
                    }
                    None => {
                        // Block-diagonal action leaves test states fixed.
                        RoundOutcome::Slot { j: *j, m: *m }
                    }
                }
            }
            _ => RoundOutcome::Discarded,
        }
    };
    let sender = match sender {
        Sender::Orientation(h) => SenderChoice::Orientation(h),
        Sender::Test { j, m, tilde } => SenderChoice::Test { j, m, tilde },
    };
    Round { sender, receiver, kept, outcome }
}

enum Sender {
    Orientation(Rotation),
    Test { j: HalfInt, m: usize, tilde: bool },
}

fn draw_block<R: Rng + ?Sized>(amps: &[(HalfInt, f64)], rng: &mut R) -> HalfInt {
    let mut u = rng.random::<f64>();
    for &(j, a) in amps {
        let w = a * a;
        if u < w {
            return j;
        }
        u -= w;
    }
    amps.last().expect("nonempty amplitudes").0
}
