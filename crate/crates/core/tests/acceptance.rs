//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured figure. Criterion 13 (byte-identical CLI
//! output) lives with the CLI crate, next to the binary it exercises.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use framekey::blocks::{
    seed_count, signal_amplitudes, BlockDensity, BlockShape, BlockVector, SeedSequence,
};
use framekey::harness::{scaling_fit, trial_rng};
use framekey::optimal::OutcomeDensity;
use framekey::quad::adaptive_simpson;
use framekey::schur;
use framekey::separable::{self, estimate_angle, MeasurementTally};
use framekey::su2::{character, HalfInt, Rotation};
use framekey::{bb84, ekert, optimal};

use rand::Rng;

#[test]
fn acceptance_01_separable_per_axis_scaling() {
    let started = Instant::now();
    let n = 4096usize;
    let trials = 200;
    let theta = FRAC_PI_2;
    let p = (0.5 * theta).cos().powi(2);
    let mut rng = trial_rng(0xA1, 0);
    let mut acc = 0.0;
    for _ in 0..trials {
        let mut tally = MeasurementTally::default();
        for _ in 0..n {
            let bit = u8::from(rng.random::<bool>());
            let matches = rng.random::<f64>() < p;
            // Outcome up on bit 0 counts as a match; mirror that bookkeeping.
            let up = if bit == 0 { matches } else { !matches };
            tally.record(up, bit);
        }
        let est = estimate_angle(&tally);
        let err = est.theta_hat - theta;
        acc += err * err;
    }
    let rms = (acc / trials as f64).sqrt();
    let scaled = rms * (n as f64).sqrt();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        (0.8..=1.3).contains(&scaled),
        "per-axis rms * sqrt(N) = {scaled}"
    );
    assert!(elapsed < 10.0, "runtime {elapsed}s");
    println!("PASS criterion 1: per-axis rms*sqrt(N) = {scaled:.3} in [0.8, 1.3], {elapsed:.2}s");
}

#[test]
fn acceptance_02_separable_direction_slope() {
    let mut points = Vec::new();
    for (idx, n) in [1024usize, 4096, 16384].into_iter().enumerate() {
        let trials = 200;
        let mut acc = 0.0;
        for t in 0..trials {
            let mut rng = trial_rng(0xA2, (idx * trials + t) as u64);
            let g = Rotation::haar(&mut rng);
            let res =
                separable::run_separable(n, g, separable::Eavesdropper::None, 5.0, &mut rng);
            acc += res.error_angle * res.error_angle;
        }
        points.push((n as f64, (acc / trials as f64).sqrt()));
    }
    let (slope, _, _) = scaling_fit(&points).unwrap();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
    println!("PASS criterion 2: direction-error slope = {slope:.3} within -0.5 +/- 0.1");
}

#[test]
fn acceptance_03_separable_eve_detection() {
    let n = 10_000usize;
    let k_sigma = 5.0;
    // Intercept-resend with uniform random axes must trip the alarm.
    let eve_runs = 200;
    let mut alarms = 0;
    for t in 0..eve_runs {
        let mut rng = trial_rng(0xA3, t as u64);
        let g = Rotation::haar(&mut rng);
        let res = separable::run_separable(
            n,
            g,
            separable::Eavesdropper::InterceptResendRandomAxis,
            k_sigma,
            &mut rng,
        );
        alarms += u32::from(res.alarm);
    }
    let alarm_rate = f64::from(alarms) / eve_runs as f64;
    // No eavesdropper: false alarms stay rare.
    let clean_runs = 1000;
    let mut false_alarms = 0;
    for t in 0..clean_runs {
        let mut rng = trial_rng(0xA4, t as u64);
        let g = Rotation::haar(&mut rng);
        let res =
            separable::run_separable(n, g, separable::Eavesdropper::None, k_sigma, &mut rng);
        false_alarms += u32::from(res.alarm);
    }
    let false_rate = f64::from(false_alarms) / clean_runs as f64;
    assert!(alarm_rate >= 0.99, "alarm rate {alarm_rate}");
    assert!(false_rate <= 0.01, "false alarm rate {false_rate}");
    println!(
        "PASS criterion 3: eve alarm rate {alarm_rate:.3} >= 0.99, false alarms {false_rate:.4} <= 0.01"
    );
}

#[test]
fn acceptance_04_planar_accuracy_window_and_slope() {
    let mut points = Vec::new();
    let mut at_4096 = 0.0;
    for (idx, n) in [1024usize, 4096, 16384].into_iter().enumerate() {
        let trials = 200;
        let mut acc = 0.0;
        for t in 0..trials {
            let mut rng = trial_rng(0xA5, (idx * trials + t) as u64);
            let angle = PI * rng.random::<f64>();
            let res = separable::run_planar(n, angle, separable::Eavesdropper::None, &mut rng);
            acc += res.overall_error * res.overall_error;
        }
        let rms = (acc / trials as f64).sqrt();
        if n == 4096 {
            at_4096 = rms * (n as f64).sqrt();
        }
        points.push((n as f64, rms));
    }
    let (slope, _, _) = scaling_fit(&points).unwrap();
    assert!((1.5..=4.5).contains(&at_4096), "rms*sqrt(n) = {at_4096}");
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
    println!(
        "PASS criterion 4: planar rms*sqrt(n) = {at_4096:.2} in [1.5, 4.5], slope {slope:.3}"
    );
}

#[test]
fn acceptance_05_optimal_error_scaling() {
    let started = Instant::now();
    let mut points = Vec::new();
    for n in [8usize, 16, 32, 64, 128] {
        let run = optimal::run_optimal(n, 2000, true, optimal::Eavesdropper::None, 0xA6)
            .expect("valid run");
        points.push((n as f64, run.rms_error));
    }
    let (slope, _, r2) = scaling_fit(&points).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!((slope + 1.0).abs() <= 0.15, "slope {slope}");
    assert!(elapsed < 60.0, "runtime {elapsed}s");
    println!(
        "PASS criterion 5: optimal slope {slope:.3} within -1 +/- 0.15 (r^2 {r2:.4}), {elapsed:.2}s"
    );
}

#[test]
fn acceptance_06_randomization_invariance() {
    let mut worst: f64 = 0.0;
    for n in 3..=8usize {
        let shape = BlockShape::for_spins(n);
        let a = BlockVector::signal_state(&shape).unwrap();
        let b = BlockVector::povm_seed(&shape).unwrap();
        let support: Vec<HalfInt> = a.support().collect();
        let mut rng = trial_rng(0xA7, n as u64);
        for _ in 0..20 {
            let seed = SeedSequence::uniform(&support, &mut rng);
            let a_keyed = a.randomize(&seed).unwrap();
            let b_keyed = b.randomize(&seed).unwrap();
            for _ in 0..10 {
                let r = Rotation::haar(&mut rng);
                let plain = b.inner(&a.apply_rotation(r)).unwrap().norm_sqr();
                let keyed = b_keyed
                    .inner(&a_keyed.apply_rotation(r))
                    .unwrap()
                    .norm_sqr();
                worst = worst.max((plain - keyed).abs());
            }
        }
    }
    assert!(worst <= 1e-10, "max density deviation {worst}");
    println!("PASS criterion 6: keyed vs plain outcome densities agree to {worst:.2e} <= 1e-10");
}

#[test]
fn acceptance_07_eavesdropper_state_invariance() {
    let mut rng = trial_rng(0xA8, 0);
    for (n, expected_seeds) in [(3usize, 4usize), (4, 9)] {
        let shape = BlockShape::for_spins(n);
        let a = BlockVector::signal_state(&shape).unwrap();
        let support: Vec<HalfInt> = a.support().collect();
        let seeds = SeedSequence::enumerate_all(&support);
        assert_eq!(seeds.len(), expected_seeds, "seed count at N = {n}");
        let members: Vec<BlockDensity> = seeds
            .iter()
            .map(|s| BlockDensity::from_vector(&a.randomize(s).unwrap()))
            .collect();
        let avg = BlockDensity::average(&members);
        let amps = signal_amplitudes(&shape).unwrap();
        let analytic = BlockDensity::uniform_seed_average(n, &amps);
        let exact_dev = avg.max_dev(&analytic);
        assert!(exact_dev <= 1e-12, "N = {n}: exhaustive average off by {exact_dev}");
        let mut invariance: f64 = 0.0;
        for _ in 0..100 {
            let q = Rotation::haar(&mut rng);
            invariance = invariance.max(avg.conjugate_rotation(q).max_dev(&avg));
        }
        assert!(invariance <= 1e-10, "N = {n}: conjugation defect {invariance}");
        // Full-space confirmation through the coupled-basis oracle.
        let basis = schur::SchurBasis::build(n).unwrap();
        let full = schur::embed_density(&basis, &avg).unwrap();
        let mut full_defect: f64 = 0.0;
        for _ in 0..25 {
            let u = schur::full_rotation(n, Rotation::haar(&mut rng));
            let conj = &u * &full * u.adjoint();
            full_defect = full_defect.max((&conj - &full).map(|e| e.norm()).max());
        }
        assert!(full_defect <= 1e-10, "N = {n}: full-space defect {full_defect}");
    }
    println!("PASS criterion 7: exhaustive seed averages match the invariant state (N = 3, 4)");
}

#[test]
fn acceptance_08_full_space_oracle() {
    use num_bigint::BigUint;
    let mut rng = trial_rng(0xA9, 0);
    let mut worst: f64 = 0.0;
    for n in [3usize, 4] {
        let basis = schur::SchurBasis::build(n).unwrap();
        for _ in 0..50 {
            worst = worst.max(schur::verify_block_action(&basis, Rotation::haar(&mut rng)));
        }
    }
    assert!(worst <= 1e-9, "block action deviation {worst}");
    for n in 1..=20usize {
        let shape = BlockShape::for_spins(n);
        assert_eq!(shape.total_dimension(), BigUint::from(1u32) << n, "sum rule N = {n}");
        if n >= 2 {
            let sub = HalfInt::from_twice(n as u32 - 2);
            assert_eq!(
                shape.block(sub).unwrap().mult,
                BigUint::from(n as u64 - 1),
                "m at j = N/2 - 1, N = {n}"
            );
        }
    }
    println!("PASS criterion 8: block action deviation {worst:.2e} <= 1e-9, sum rules N <= 20");
}

#[test]
fn acceptance_09_orthogonality_and_normalization() {
    let mut worst_orth: f64 = 0.0;
    for ta in 0..=7u32 {
        for tb in 0..=7u32 {
            let ja = HalfInt::from_twice(ta);
            let jb = HalfInt::from_twice(tb);
            let integral = adaptive_simpson(
                |w| (0.5 * w).sin().powi(2) / PI * character(ja, w) * character(jb, w),
                0.0,
                2.0 * PI,
                1e-10,
            );
            worst_orth = worst_orth.max((integral - f64::from(ta == tb)).abs());
        }
    }
    assert!(worst_orth <= 1e-8, "orthogonality defect {worst_orth}");
    let mut worst_norm: f64 = 0.0;
    for n in 3..=12usize {
        let q = OutcomeDensity::for_shape(&BlockShape::for_spins(n)).unwrap();
        worst_norm = worst_norm.max((q.normalization() - 1.0).abs());
    }
    assert!(worst_norm <= 1e-9, "normalization defect {worst_norm}");
    println!(
        "PASS criterion 9: character orthogonality {worst_orth:.2e} <= 1e-8, density normalization {worst_norm:.2e} <= 1e-9"
    );
}

#[test]
fn acceptance_10_bb84_fidelity_detection_and_scaling() {
    // Fidelity identity, exact.
    let shape = BlockShape::for_spins(8);
    let amps = signal_amplitudes(&shape).unwrap();
    let a = BlockVector::signal_state(&shape).unwrap();
    let mut rng = trial_rng(0xAA, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let h = Rotation::haar(&mut rng);
        let rotated = a.apply_rotation(h);
        for &(j, amp) in &amps {
            let d = j.dim();
            for m in 0..d {
                for tilde in [false, true] {
                    let tau = bb84::test_state(&shape, j, m, tilde).unwrap();
                    let f = bb84::state_overlap(&tau, &rotated);
                    worst = worst.max((f - amp * amp / (d * d) as f64).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-12, "fidelity defect {worst}");

    // No eavesdropper: zero mismatches, exactly.
    for seed in 0..20u64 {
        let res = bb84::run_bb84(8, 400, bb84::Eavesdropper::None, 0.05, seed).unwrap();
        assert_eq!(res.mismatches, 0, "seed {seed}");
    }

    // Measure-reprepare eavesdropper: detected essentially always.
    let sessions = 200u32;
    let mut detected = 0u32;
    for seed in 0..sessions {
        let res = bb84::run_bb84(
            8,
            400,
            bb84::Eavesdropper::MeasureReprepare,
            0.05,
            7000 + u64::from(seed),
        )
        .unwrap();
        if res.detection == Some(true) {
            detected += 1;
        }
    }
    let rate = f64::from(detected) / f64::from(sessions);
    assert!(rate >= 0.99, "detection rate {rate}");

    // Combined accuracy sharpens like one over the square root of the
    // session length.
    let mut points = Vec::new();
    for (i, rounds) in [64usize, 128, 256, 512].iter().enumerate() {
        let repeats = 160;
        let mut acc = 0.0;
        for k in 0..repeats {
            let seed = 9000 + (i * repeats + k) as u64;
            let res = bb84::run_bb84(8, *rounds, bb84::Eavesdropper::None, 0.05, seed).unwrap();
            acc += res.frame_error * res.frame_error;
        }
        points.push((*rounds as f64, (acc / repeats as f64).sqrt()));
    }
    let (slope, _, _) = scaling_fit(&points).unwrap();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
    println!(
        "PASS criterion 10: fidelity defect {worst:.2e}, detection {rate:.3}, accuracy slope {slope:.3}"
    );
}

#[test]
fn acceptance_11_ekert_identity_recovery_and_chsh() {
    // Joint-density reduction, exact at small N.
    let mut rng = trial_rng(0xAB, 0);
    let mut worst: f64 = 0.0;
    for n in [3usize, 4] {
        let shape = BlockShape::for_spins(n);
        let phi = ekert::bipartite_signal(&shape).unwrap();
        for _ in 0..50 {
            let g = Rotation::haar(&mut rng);
            let ha = Rotation::haar(&mut rng);
            let hb = Rotation::haar(&mut rng);
            worst =
                worst.max(ekert::verify_joint_density_reduction(&phi, g, ha, hb).unwrap());
        }
    }
    assert!(worst <= 1e-9, "reduction deviation {worst}");

    // Alice's marginal is uniform.
    let run = ekert::run_frame_recovery(6, 10_000, 0xAC).unwrap();
    assert!(run.h_a_resultant <= 0.03, "resultant {}", run.h_a_resultant);

    // Frame recovery scales like the single-party protocol.
    let mut points = Vec::new();
    for n in [8usize, 16, 32, 64] {
        let r = ekert::run_frame_recovery(n, 3000, 0xAD).unwrap();
        points.push((n as f64, r.rms_error));
    }
    let (slope, _, _) = scaling_fit(&points).unwrap();
    assert!((slope + 1.0).abs() <= 0.2, "slope {slope}");

    // CHSH: quantum bound without Eve, classical bound under the
    // slot-measuring attack.
    let shape = BlockShape::for_spins(3);
    let clean = ekert::chsh_test(&shape, 100_000, ekert::Eavesdropper::None, 0xAE).unwrap();
    assert!(
        (clean.s_value - 2.0 * 2f64.sqrt()).abs() <= 0.05,
        "S = {}",
        clean.s_value
    );
    let attacked =
        ekert::chsh_test(&shape, 100_000, ekert::Eavesdropper::MultiplicityBasisMeasure, 0xAF)
            .unwrap();
    assert!(attacked.s_value <= 2.05, "S under attack = {}", attacked.s_value);
    println!(
        "PASS criterion 11: reduction {worst:.2e}, resultant {:.3}, slope {slope:.3}, S {:.3} / {:.3}",
        run.h_a_resultant, clean.s_value, attacked.s_value
    );
}

#[test]
fn acceptance_12_secret_bit_accounting() {
    for n in [64usize, 256, 1024] {
        let counts = seed_count(&BlockShape::for_spins(n)).unwrap();
        let ratio = counts.secret_bits as f64 / (n as f64).log2();
        assert!(
            (2.5..=3.5).contains(&ratio),
            "N = {n}: {} bits, ratio {ratio}",
            counts.secret_bits
        );
    }
    println!("PASS criterion 12: secret bits / log2(N) within [2.5, 3.5] for N = 64, 256, 1024");
}
