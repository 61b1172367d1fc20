//! Published numbers reproduced through the public API. Oracles are written
//! out here rather than taken from the crate.

use std::f64::consts::PI;

use eled_core::analysis::{bell_parameters, fidelity_from_correlations, CorrelationSet};
use eled_core::quantum::{bell_psi_plus, DensityMatrix4};
use eled_core::strain::{min_fss, TuningParams};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// Inputs are published to two decimals, so each S = √2(a ± b) carries up to
// √2·0.01 of input rounding on top of the ±0.005 output rounding.
const S_TOL: f64 = 0.005 + std::f64::consts::SQRT_2 * 0.01;

#[test]
fn gated_correlations_give_reported_fidelity_and_bell_values() {
    let c = CorrelationSet::exact(0.67, 0.63, -0.78).unwrap();
    assert!(close(fidelity_from_correlations(&c).value, 0.77, 0.005));
    let b = bell_parameters(&c);
    assert!(close(b.s_rd, 1.83, S_TOL), "{b:?}");
    assert!(close(b.s_rc, 2.04, S_TOL), "{b:?}");
    assert!(close(b.s_dc, 2.00, S_TOL), "{b:?}");
    // the unrounded formula values
    assert!(close(b.s_rd, 1.84, 0.005) && close(b.s_rc, 2.05, 0.005) && close(b.s_dc, 1.99, 0.005), "{b:?}");

    let c = CorrelationSet::exact(0.74, 0.74, -0.84).unwrap();
    assert!(close(fidelity_from_correlations(&c).value, 0.83, 0.005));
    let b = bell_parameters(&c);
    assert!(close(b.s_rd, 2.09, S_TOL) && close(b.s_rc, 2.23, S_TOL) && close(b.s_dc, 2.23, S_TOL), "{b:?}");
}

#[test]
fn most_probable_state_phase_costs_little_fidelity() {
    // |⟨Ψ+(0)|Ψ+(φ)⟩|² = cos²(φ/2)
    let f = bell_psi_plus(-0.11 * PI).density().fidelity_to_psi_plus();
    assert!(close(f, (0.055 * PI).cos().powi(2), 1e-12));
    assert!(close(f, 0.97044, 1e-5));
}

#[test]
fn reported_tangle_is_reported_concurrence_squared() {
    assert!(close(0.688 * 0.688, 0.474, 0.0015));
    // and the identity holds on a comparable mixed state
    let m = DensityMatrix4::werner(0.79, -0.11 * PI).unwrap().metrics().unwrap();
    assert!(close(m.tangle, m.concurrence * m.concurrence, 1e-12));
}

#[test]
fn predicted_minimum_splittings_of_dots_a_and_d() {
    // s_min = s0 |sin 2θ0|
    for (s0, t0, expect, unc) in [(20.1, 102.0, 8.18, 0.20), (16.9, 90.4, 0.24, 0.32)] {
        let p = TuningParams::from_s0_theta0(s0, t0, 1.5, 0.0).unwrap();
        let oracle = s0 * (2.0 * t0 * PI / 180.0).sin().abs();
        let got = min_fss(&p).unwrap();
        assert!(close(got, oracle, 1e-9));
        assert!(close(got, expect, unc), "{got} vs {expect} ± {unc}");
    }
}
