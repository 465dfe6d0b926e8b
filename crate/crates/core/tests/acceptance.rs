//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdicts always reach the
//! terminal. Exits non-zero if any gating criterion fails.

mod common;

use std::f64::consts::TAU;
use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use common::{closed_loop, sme_against_master_equation};
use cqec::cavity::{distinguishability_ratio, CavityModel};
use cqec::controller::{replay, write_events_csv, ControllerEventKind};
use cqec::experiments::{
    calibrate, coherence_transfer_experiment, conditional_coherence_experiment, convergence_check,
    dead_time_experiment, labelled_traces, logical_t1_experiment, mean_measurement_rate,
    optimize_on_traces, scale_filter_to_rate, single_flip_experiment, CoherenceTransferOptions,
    ConditionalCoherenceOptions, ConvergenceOptions, DeadTime, DeadTimeOptions, LogicalT1Options,
    OptimizeOptions, RunConfig, SingleFlipOptions,
};
use cqec::trajectory::{
    measurement_rate, run_trajectory, EngineKind, HomodyneRecord, NoiseSource, Processes, Protocol,
};
use cqec::{DeviceParams, Sector, ThreeQubitState};

const SEED: u64 = 1;

// Resonator parameters of the reference device (MHz).
const KAPPA_MHZ: [f64; 2] = [0.636, 0.810];
const CHI_MHZ: [f64; 2] = [2.02, 2.34];
// Reported logical lifetime gain over the best bare qubit.
const REPORTED_GAIN: f64 = 2.7;

struct Verdict {
    id: &'static str,
    pass: bool,
    gating: bool,
    detail: String,
}

struct Suite {
    verdicts: Vec<Verdict>,
}

impl Suite {
    fn record(&mut self, id: &'static str, pass: bool, gating: bool, detail: String) {
        let tag = match (pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (not gating)",
        };
        println!("criterion {id}: {tag}: {detail}");
        self.verdicts.push(Verdict {
            id,
            pass,
            gating,
            detail,
        });
    }
}

fn run(n: usize) -> RunConfig {
    RunConfig {
        trajectories: n,
        seed: SEED,
        workers: 0,
        engine: EngineKind::Sme,
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Per-qubit bit of basis index `s = 4 q0 + 2 q1 + q2`.
fn excitations(s: usize) -> [f64; 3] {
    [((s >> 2) & 1) as f64, ((s >> 1) & 1) as f64, (s & 1) as f64]
}

/// Σ β_ij n_i n_j in MHz.
fn zz_energy_mhz(p: &DeviceParams, s: usize) -> f64 {
    let n = excitations(s);
    p.zz.beta01_mhz * n[0] * n[1] + p.zz.beta12_mhz * n[1] * n[2] + p.zz.beta02_mhz * n[0] * n[2]
}

fn criterion_1(suite: &mut Suite) {
    let start = Instant::now();
    let p = DeviceParams::default();
    let model = CavityModel::new(&p);
    let mut ok = true;
    let mut parts = Vec::new();
    for i in 0..2 {
        let r = CHI_MHZ[i] / KAPPA_MHZ[i];
        let expected = 4.0 * r * r;
        let sim = distinguishability_ratio(&model, i);
        let rel = sim / expected - 1.0;
        ok &= rel.abs() < 0.10;
        parts.push(format!(
            "R{i} {sim:.2} vs 4(chi/kappa)^2 = {expected:.2} ({:+.1}%)",
            100.0 * rel
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    suite.record(
        "1",
        ok,
        true,
        format!("{}; {:.3} s", parts.join(", "), secs(elapsed)),
    );
}

fn criterion_2(suite: &mut Suite) {
    let start = Instant::now();
    let mut within = true;
    let mut consistent = true;
    let mut parts = Vec::new();
    for nbar in [1.0, 2.0, 4.0] {
        let p = DeviceParams::default().with_nbar([nbar, nbar]);
        // OO with q0 flipped: resonator 0 goes odd to even, resonator 1 stays odd.
        let res = coherence_transfer_experiment(
            &p,
            Sector::OO,
            Some(0),
            &run(500),
            &CoherenceTransferOptions::default(),
        )
        .expect("coherence transfer");
        let kappa = TAU * p.resonators.kappa_mhz[0];
        let chi = TAU * p.resonators.chi_mhz[0];
        let zeta = nbar * 16.0 * chi * chi / (kappa * kappa + 16.0 * chi * chi);
        let expected = (-zeta).exp();
        let rel = res.relative / expected - 1.0;
        within &= rel.abs() < 0.05;
        consistent &= (res.relative - expected).abs() < 3.0 * res.relative_se;
        parts.push(format!(
            "nbar {nbar}: {:.4} ± {:.4} vs e^-zeta {expected:.4} ({:+.1}%)",
            res.relative,
            res.relative_se,
            100.0 * rel
        ));
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(300);
    suite.record(
        "2",
        within && fast,
        false,
        format!("{}; {:.1} s", parts.join("; "), secs(elapsed)),
    );
    suite.record(
        "2 (statistical consistency)",
        consistent,
        true,
        "every estimate within 3 standard errors of e^-zeta".into(),
    );
}

fn criteria_3_and_4(suite: &mut Suite) {
    let start = Instant::now();
    let p = DeviceParams::default();
    let opts = LogicalT1Options::default();
    let oo = logical_t1_experiment(&p, Sector::OO, &run(1000), &opts).expect("OO lifetime");
    let oo_time = start.elapsed();
    let ee = logical_t1_experiment(&p, Sector::EE, &run(1000), &opts).expect("EE lifetime");
    let bare = p.qubits.t1_us.iter().cloned().fold(f64::MIN, f64::max);
    let ratio = oo.t1_us() / bare;
    let flagged = !(1.8..=3.6).contains(&ratio);
    suite.record(
        "3",
        ratio >= 2.0 && oo_time < Duration::from_secs(1800),
        true,
        format!(
            "T1_L(OO) = {:.1} ± {:.1} us, ratio {ratio:.2} (reported {REPORTED_GAIN}){}; {:.1} s",
            oo.t1_us(),
            oo.t1_error_us(),
            if flagged {
                ", FLAGGED: outside [1.8, 3.6]"
            } else {
                ""
            },
            secs(oo_time)
        ),
    );
    let gap = oo.t1_us() - ee.t1_us();
    let err = oo.t1_error_us().hypot(ee.t1_error_us());
    suite.record(
        "4",
        ee.t1_us() < oo.t1_us(),
        true,
        format!(
            "T1_L(EE) = {:.1} ± {:.1} us < T1_L(OO) = {:.1} us ({:.1} sigma)",
            ee.t1_us(),
            ee.t1_error_us(),
            oo.t1_us(),
            gap / err
        ),
    );
}

fn criterion_5(suite: &mut Suite) {
    let start = Instant::now();
    let p = DeviceParams::default();
    let opts = ConditionalCoherenceOptions::default();
    let res =
        conditional_coherence_experiment(&p, &run(2000), &opts).expect("conditional coherence");
    let elapsed = start.elapsed();
    // OO logical pair before and after flipping q0.
    let (zero, one) = (0b010, 0b101);
    let flip = 0b100;
    let before = zz_energy_mhz(&p, one) - zz_energy_mhz(&p, zero);
    let after = zz_energy_mhz(&p, one ^ flip) - zz_energy_mhz(&p, zero ^ flip);
    let delta_beta = after - before;
    let fit = res.relative_fit.expect("phase fit");
    let freq_rel = fit.frequency_mhz / delta_beta - 1.0;
    let mean: Complex64 = res
        .correction_times_us
        .iter()
        .map(|&t| Complex64::from_polar(1.0, TAU * delta_beta * t))
        .sum::<Complex64>()
        / res.correction_times_us.len() as f64;
    let predicted = mean.norm();
    let pooled_rel = res.pooled_ratio_compensated / predicted - 1.0;
    let ok =
        freq_rel.abs() < 0.02 && pooled_rel.abs() < 0.05 && elapsed < Duration::from_secs(1200);
    suite.record(
        "5",
        ok,
        true,
        format!(
            "fitted {:.4} ± {:.4} MHz vs {delta_beta:.4} ({:+.2}%); pooled {:.4} vs {predicted:.4} ({:+.2}%); raw pooled {:.4}; {} of {} kept; {:.1} s",
            fit.frequency_mhz,
            fit.frequency_error_mhz,
            100.0 * freq_rel,
            res.pooled_ratio_compensated,
            100.0 * pooled_rel,
            res.pooled_ratio,
            res.kept,
            res.trajectories,
            secs(elapsed)
        ),
    );
}

fn criterion_6(suite: &mut Suite) {
    let start = Instant::now();
    let delays: Vec<f64> = (0..=12).map(|k| 250.0 * k as f64).collect();
    let reference = DeviceParams::default();
    let base = dead_time_experiment(
        &reference,
        (0, 2),
        &delays,
        &run(500),
        &DeadTimeOptions::default(),
    )
    .expect("dead time");
    // Twice the measurement rate, with the controller recalibrated for it.
    let faster = reference.with_nbar(reference.resonators.nbar_odd.map(|n| 2.0 * n));
    let gain = mean_measurement_rate(&faster) / mean_measurement_rate(&reference);
    let scaled = scale_filter_to_rate(&faster, &reference);
    let calibration = RunConfig {
        trajectories: 1500,
        seed: SEED + 100,
        ..run(0)
    };
    let (tuned, optimum) =
        calibrate(&scaled, &calibration, &OptimizeOptions::default()).expect("calibration");
    let fast = dead_time_experiment(
        &tuned,
        (0, 2),
        &delays,
        &run(500),
        &DeadTimeOptions::default(),
    )
    .expect("dead time");
    let elapsed = start.elapsed();

    let p0 = &base.points[0].logical_error;
    let last = &base.points[base.points.len() - 1].logical_error;
    let se = |p: &cqec::experiments::Proportion| {
        (p.estimate * (1.0 - p.estimate) / p.trials as f64).sqrt()
    };
    let decays = last.estimate + 3.0 * se(p0).hypot(se(last)) < p0.estimate
        && base.points.windows(2).all(|w| {
            let (a, b) = (&w[0].logical_error, &w[1].logical_error);
            b.estimate <= a.estimate + 2.0 * se(a).hypot(se(b))
        });
    let finite = |d: &DeadTime| matches!(d, DeadTime::Crossing { .. });
    let (d0, e0) = (base.dead_time.value_ns(), base.dead_time.error_ns());
    let (d1, e1) = (fast.dead_time.value_ns(), fast.dead_time.error_ns());
    let shrinks = matches!((d0, d1), (Some(a), Some(b)) if b < a);
    let ok = p0.estimate > 0.5
        && decays
        && finite(&base.dead_time)
        && finite(&fast.dead_time)
        && shrinks
        && elapsed < Duration::from_secs(1200);
    suite.record(
        "6",
        ok,
        true,
        format!(
            "P(logical error | 0 ns) = {:.3}, at {} ns {:.3}; dead time {:.0} ± {:.0} ns at Gamma, {:.0} ± {:.0} ns at {gain:.2}x Gamma (filter {:.0} ns, thresholds {:.2}/{:.2}/{:.2}); {:.1} s",
            p0.estimate,
            delays[delays.len() - 1],
            last.estimate,
            d0.unwrap_or(f64::NAN),
            e0,
            d1.unwrap_or(f64::NAN),
            e1,
            tuned.controller.tau_ctrl_ns,
            optimum.thresholds.theta1,
            optimum.thresholds.theta2,
            optimum.thresholds.theta3,
            secs(elapsed)
        ),
    );
}

fn criterion_7(suite: &mut Suite) {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for nbar in [1.0, 2.0, 4.0] {
        let p = DeviceParams::default().with_nbar([nbar, nbar]);
        let mut cell = Vec::new();
        for q in 0..3 {
            let opts = SingleFlipOptions::default();
            let sme = single_flip_experiment(&p, q, &run(500), &opts).expect("sme");
            let tel = single_flip_experiment(
                &p,
                q,
                &RunConfig {
                    engine: EngineKind::Telegraph,
                    ..run(500)
                },
                &opts,
            )
            .expect("telegraph");
            let (a, b) = (&sme.efficiency, &tel.efficiency);
            let overlap = a.lower <= b.upper && b.lower <= a.upper;
            ok &= overlap;
            cell.push(format!("q{q} {:.3}/{:.3}", a.estimate, b.estimate));
        }
        parts.push(format!(
            "Gamma {:.2}/us: {}",
            measurement_rate(&p, 0),
            cell.join(" ")
        ));
    }
    suite.record(
        "7",
        ok,
        true,
        format!(
            "SME/telegraph efficiencies, 95% intervals overlap: {}; {:.1} s",
            parts.join("; "),
            secs(start.elapsed())
        ),
    );
}

fn criterion_8(suite: &mut Suite) {
    let start = Instant::now();
    let p = DeviceParams::default();
    let long = Protocol {
        engine: EngineKind::Sme,
        initial: ThreeQubitState::plus(0b010, 0b101),
        sector: Sector::OO,
        duration_us: 100.0,
        check_every: Some(1),
        ..Protocol::default()
    };
    let out = run_trajectory(&p, &long, &mut NoiseSource::new(SEED, 0)).expect("long run");
    let worst = out.worst.expect("checked");
    let physical = worst.within_bounds() && out.checks >= 10_000;

    let oracle = sme_against_master_equation(&p, 2000, SEED);
    let matches = oracle.worst_z < 3.0;

    let mut attractor = true;
    let mut worst_sector_pop = 1.0f64;
    let rate = measurement_rate(&p, 0).min(measurement_rate(&p, 1));
    let amp = [Complex64::new(8f64.sqrt().recip(), 0.0); 8];
    for i in 0..20 {
        let horizon = 20.0 / rate;
        let proto = Protocol {
            initial: ThreeQubitState::pure(&amp).unwrap(),
            duration_us: horizon,
            feedback: false,
            processes: Processes {
                hamiltonian: false,
                dissipation: false,
                measurement: true,
            },
            snapshot_times_us: vec![horizon],
            keep_states: true,
            ..Protocol::default()
        };
        let o = run_trajectory(&p, &proto, &mut NoiseSource::new(SEED + 7, i)).unwrap();
        let st = o.snapshots[0].state.as_ref().unwrap();
        let best = Sector::ALL
            .iter()
            .map(|&s| st.sector_population(s))
            .fold(0.0, f64::max);
        worst_sector_pop = worst_sector_pop.min(best);
        attractor &= best > 1.0 - 1e-3;
    }

    let mut invariant = true;
    let mut drift = 0.0f64;
    for (k, &sector) in Sector::ALL.iter().enumerate() {
        let (zero, one) = sector.logical_states();
        let proto = Protocol {
            initial: ThreeQubitState::plus(zero, one),
            sector,
            duration_us: 10.0,
            feedback: false,
            processes: Processes {
                hamiltonian: true,
                dissipation: false,
                measurement: true,
            },
            snapshot_times_us: (1..=10).map(|t| t as f64).collect(),
            keep_states: true,
            ..Protocol::default()
        };
        let o = run_trajectory(&p, &proto, &mut NoiseSource::new(SEED + 9, k as u64)).unwrap();
        for s in &o.snapshots {
            let d = (1.0 - s.state.as_ref().unwrap().sector_population(sector)).abs();
            drift = drift.max(d / s.time_us);
            invariant &= d <= 1e-9 * s.time_us;
        }
    }
    let elapsed = start.elapsed();
    suite.record(
        "8",
        physical && attractor && invariant && elapsed < Duration::from_secs(900),
        true,
        format!(
            "100 us run: {} checks, trace err {:.1e}, herm err {:.1e}, min eig {:.1e}; min collapsed sector population {:.6}; sector drift {:.1e}/us; {:.1} s",
            out.checks,
            worst.trace_error,
            worst.hermiticity_error,
            worst.min_eigenvalue,
            worst_sector_pop,
            drift,
            secs(elapsed)
        ),
    );
    suite.record(
        "8 (master equation, elementwise 3 SE)",
        matches,
        false,
        format!(
            "worst {:.2} SE at t = {} us, element {:?}, over {} comparisons",
            oracle.worst_z, oracle.worst_time_us, oracle.worst_element, oracle.comparisons
        ),
    );
}

fn criterion_9(suite: &mut Suite) {
    let mut echo_free = true;
    for latency in [0.0, 100.0, 200.0] {
        let mut p = DeviceParams::default();
        p.controller.latency_ns = latency;
        for q in 0..3 {
            let (events, _) = closed_loop(&p, Sector::EE, &[(2000.0, q)], 20_000.0);
            let detects: Vec<_> = events
                .iter()
                .filter(|e| matches!(e.kind, ControllerEventKind::Detect(_)))
                .collect();
            echo_free &= detects.len() == 1 && detects[0].kind == ControllerEventKind::Detect(q);
        }
    }

    let p = DeviceParams::default();
    let opts = OptimizeOptions {
        noise_scale: 0.0,
        dissipation: false,
        ..OptimizeOptions::default()
    };
    let traces = labelled_traces(&p, &run(4), &opts).expect("traces");
    let optimum = optimize_on_traces(&traces, &opts.lattice).expect("optimum");
    let identity =
        (0..4).all(|i| (0..4).all(|j| optimum.confusion[i][j] == if i == j { 1.0 } else { 0.0 }));
    let optimizer = optimum.objective == 0.0 && identity;

    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let record = HomodyneRecord::read_csv(std::io::BufReader::new(
        std::fs::File::open(data.join("golden_record.csv")).unwrap(),
    ))
    .unwrap();
    let events = replay(&record.vdc_stream(), &p, Sector::EE);
    let mut produced = Vec::new();
    write_events_csv(&mut produced, &events).unwrap();
    let golden = std::fs::read(data.join("golden_events.csv")).unwrap();
    let byte_identical = produced == golden;

    suite.record(
        "9",
        echo_free && optimizer && byte_identical,
        true,
        format!(
            "one detection per flip at 0/100/200 ns latency: {echo_free}; noiseless optimizer objective {} (identity {identity}, {} optimal points); golden replay byte-identical: {byte_identical}",
            optimum.objective, optimum.argmin_count
        ),
    );
}

fn criterion_10(suite: &mut Suite) {
    let start = Instant::now();
    let p = DeviceParams::default();
    let opts = SingleFlipOptions::default();
    let summary = |workers: usize| {
        let r = RunConfig {
            workers,
            ..run(200)
        };
        single_flip_experiment(&p, 1, &r, &opts)
            .unwrap()
            .to_result(&p, &r, &opts)
            .summary_json()
    };
    let a = summary(1);
    let deterministic = a == summary(1) && a == summary(2) && a == summary(5);

    let conv = convergence_check(&p, &run(0), &ConvergenceOptions::default()).expect("convergence");
    let parts: Vec<String> = conv
        .metrics
        .iter()
        .map(|m| {
            format!(
                "{} {:.4} -> {:.4} (|diff| {:.2e} vs error {:.2e})",
                m.name,
                m.coarse,
                m.fine,
                m.difference,
                m.coarse_error.max(m.fine_error)
            )
        })
        .collect();
    suite.record(
        "10",
        deterministic && conv.converged(),
        true,
        format!(
            "summary JSON identical across runs and 1/2/5 workers: {deterministic}; dt {} -> {} ns: {}; {:.1} s",
            conv.dt_sim_ns[0],
            conv.dt_sim_ns[1],
            parts.join("; "),
            secs(start.elapsed())
        ),
    );
}

fn main() {
    // Honour `cargo test -- --list` and name filters from the test harness.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }
    let start = Instant::now();
    let mut suite = Suite {
        verdicts: Vec::new(),
    };
    criterion_1(&mut suite);
    criterion_2(&mut suite);
    criteria_3_and_4(&mut suite);
    criterion_5(&mut suite);
    criterion_6(&mut suite);
    criterion_7(&mut suite);
    criterion_8(&mut suite);
    criterion_9(&mut suite);
    criterion_10(&mut suite);
    let failed: Vec<&Verdict> = suite
        .verdicts
        .iter()
        .filter(|v| v.gating && !v.pass)
        .collect();
    let passed = suite.verdicts.iter().filter(|v| v.pass).count();
    println!(
        "acceptance: {passed}/{} passed, {} gating failure(s), {:.0} s",
        suite.verdicts.len(),
        failed.len(),
        secs(start.elapsed())
    );
    if !failed.is_empty() {
        for v in failed {
            eprintln!("gating failure in criterion {}: {}", v.id, v.detail);
        }
        std::process::exit(1);
    }
}
