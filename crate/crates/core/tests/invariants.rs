//! Conservation laws at periodic steady state over random CCM designs.

use bbmsf_core::model::reset_feasible;
use bbmsf_core::steady_state::{average_inductor_current, inductor_ripple};
use bbmsf_core::switched_sim::{find_periodic_steady_state, Interval, PeriodicWaveform, Signal};
use bbmsf_core::{ConverterParams, LoadModel, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 20;

fn random_design(rng: &mut ChaCha8Rng) -> (ConverterParams, LoadModel) {
    loop {
        let p = ConverterParams {
            vi: rng.gen_range(12.0..40.0),
            n: rng.gen_range(0.3..2.0),
            nd: rng.gen_range(0.2..1.0),
            l: rng.gen_range(40e-6..150e-6),
            lm: rng.gen_range(150e-6..600e-6),
            co: rng.gen_range(50e-6..200e-6),
            fsw: rng.gen_range(20e3..100e3),
            d: rng.gen_range(0.2..0.75),
        };
        let rl = rng.gen_range(3.0..20.0);
        let po = (p.vo() * p.vo()) / rl;
        // Keep clear of both the reset boundary and the CCM boundary.
        let ccm = average_inductor_current(&p, po) > 0.75 * inductor_ripple(&p);
        if ccm && reset_feasible(p.nd * 1.1, p.d) {
            return (p, LoadModel::Resistive { rl });
        }
    }
}

/// |mean| relative to mean |x|, so that the measure is scale free.
fn imbalance(w: &PeriodicWaveform, sig: Signal) -> f64 {
    w.mean_of(|s| w.value(sig, s)).abs() / w.mean_of(|s| w.value(sig, s).abs())
}

#[test]
fn conservation_over_random_designs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..DRAWS {
        let (p, load) = random_design(&mut rng);
        let w = find_periodic_steady_state(&p, &load, &SimConfig::default())
            .unwrap_or_else(|e| panic!("draw {i} {p:?}: {e}"));
        assert!(w.samples.iter().all(|s| s.il > 0.0), "draw {i} left CCM");

        let vl = imbalance(&w, Signal::Vl);
        let vlm = imbalance(&w, Signal::Vlm);
        let ic = imbalance(&w, Signal::Ic);
        let p_in = w.mean_of(|s| p.vi * w.value(Signal::Iin, s));
        let p_out = w.mean_of(|s| s.vo * w.value(Signal::ILoad, s));
        let energy = (p_in - p_out).abs() / p_out;
        assert!(vl < 5e-3, "draw {i}: inductor volt-second imbalance {vl}");
        assert!(vlm < 5e-3, "draw {i}: core volt-second imbalance {vlm}");
        assert!(ic < 5e-3, "draw {i}: capacitor charge imbalance {ic}");
        assert!(energy < 5e-3, "draw {i}: energy imbalance {energy}");
        assert!(w.samples.iter().any(|s| s.interval == Interval::Toff2), "draw {i}: no idle interval");
    }
}

#[test]
fn grid_refinement_is_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = vec![(ConverterParams::reference_design(), LoadModel::Resistive { rl: 7.255 })];
    cases.extend((0..3).map(|_| random_design(&mut rng)));
    for (p, load) in cases {
        let mean_vo = |steps| {
            let cfg = SimConfig { steps_per_period: steps, ..SimConfig::default() };
            find_periodic_steady_state(&p, &load, &cfg).unwrap().metrics(Signal::Vo).avg
        };
        let (coarse, fine) = (mean_vo(2000), mean_vo(4000));
        assert!((coarse - fine).abs() / fine < 5e-4, "{p:?}: {coarse} vs {fine}");
    }
}
