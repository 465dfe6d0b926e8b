//! Trajectory ensembles against a direct integration of the master equation.

mod common;

use num_complex::Complex64;

use common::{mean_and_se, pure_density, sme_against_master_equation, Lindblad};
use cqec::trajectory::{run_batch, run_trajectory, EngineKind, NoiseSource, Protocol};
use cqec::{DeviceParams, Sector, ThreeQubitState};

#[test]
fn sme_ensemble_mean_follows_the_master_equation() {
    let cmp = sme_against_master_equation(&DeviceParams::default(), 2000, 11);
    eprintln!(
        "largest deviation {:.2} standard errors at t = {} us, element {:?}",
        cmp.worst_z, cmp.worst_time_us, cmp.worst_element
    );
    assert!(cmp.worst_z < 3.0, "{cmp:?}");
}

#[test]
fn telegraph_populations_follow_the_master_equation() {
    let p = DeviceParams::default();
    let times = [5.0, 10.0, 20.0, 40.0];
    let proto = Protocol {
        engine: EngineKind::Telegraph,
        initial: ThreeQubitState::basis(0b111),
        sector: Sector::EE,
        duration_us: 40.0,
        feedback: false,
        snapshot_times_us: times.to_vec(),
        ..Protocol::default()
    };
    let n = 4000;
    let pops = run_batch(n, 0, |i| {
        let out = run_trajectory(&p, &proto, &mut NoiseSource::new(12, i as u64))?;
        Ok(out
            .snapshots
            .into_iter()
            .map(|s| s.populations)
            .collect::<Vec<_>>())
    })
    .unwrap();
    let oracle = Lindblad::new(&p, false);
    let mut amp = [Complex64::new(0.0, 0.0); 8];
    amp[0b111] = Complex64::new(1.0, 0.0);
    let mut rho = pure_density(&amp);
    let mut t_prev = 0.0;
    for (k, &t) in times.iter().enumerate() {
        rho = oracle.evolve(&rho, t - t_prev, 2000);
        t_prev = t;
        for s in 0..8 {
            let vals: Vec<f64> = pops.iter().map(|x| x[k][s]).collect();
            let (m, se) = mean_and_se(&vals);
            let want = rho[(s, s)].re;
            assert!(
                (m - want).abs() < 4.5 * se + 2e-3,
                "t={t} P({s:03b}): telegraph {m:.4} ± {se:.4}, master equation {want:.4}"
            );
        }
    }
}
