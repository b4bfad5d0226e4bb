//! Forward solve feeding the measurement operator end to end.

use std::sync::Arc;

use elastid_core::elastic::{lame_from_engineering, solve_forward, FEConfig, ParameterPoint};
use elastid_core::geometry::{build_mesh, DomainSpec};
use elastid_core::observe::{observe, ObservationConfig, OBSERVATION_LEN};

#[test]
fn observations_of_a_forward_solve_are_finite_and_time_consistent() {
    let spec = DomainSpec::new(2.0, 1.0, 0.5).unwrap();
    let mesh = Arc::new(build_mesh(&spec).unwrap());
    let p = ParameterPoint::new(100.0, 0.3).unwrap();
    let lame = lame_from_engineering(&p).unwrap();

    let coarse = FEConfig { n_steps: 4, rho: 1.0, ..FEConfig::default() };
    let fine = FEConfig { n_steps: 8, ..coarse };
    let cfg = ObservationConfig::for_domain(&spec, &coarse);

    let obs_c = observe(&solve_forward(&p, &coarse, &mesh).unwrap(), &cfg, &lame).unwrap();
    let obs_f = observe(&solve_forward(&p, &fine, &mesh).unwrap(), &cfg, &lame).unwrap();

    assert_eq!(obs_c.as_slice().len(), OBSERVATION_LEN);
    let scale: f64 = obs_c.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(scale > 0.0, "the ramp must produce nonzero readings");

    // Halving dt perturbs the readings only at the time-discretisation level.
    let diff: f64 = obs_c
        .as_slice()
        .iter()
        .zip(obs_f.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 0.1 * scale, "dt refinement moved readings by {diff} vs scale {scale}");
    assert!(diff > 0.0, "refinement must move the readings at least slightly");
}
