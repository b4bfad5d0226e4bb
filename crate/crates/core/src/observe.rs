//! Measurements taken on a forward solution: point samples of the
//! displacement (C¹), vertical-line means of the displacement (C²), and
//! vertical-line means of the von-Mises stress (C³), stacked into a
//! fixed-order vector of 50 readings.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::elastic::{displacement_gradient, stress, FEConfig, ForwardSolution, LameParams};
use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Mesh};
use crate::invalid_input;
use crate::linalg::{Mat2, Vec2};

/// Length of the stacked observation vector: 5 families of 10 readings.
pub const OBSERVATION_LEN: usize = 50;

/// Where and when the readings are taken: five stations inside the domain,
/// each sampled at the half-time `t1` and the horizon `t2`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservationConfig {
    pub points: [Vec2; 5],
    pub t1: f64,
    pub t2: f64,
}

impl ObservationConfig {
    /// Default stations: evenly spaced along the horizontal midline at
    /// x = i·length/6, read at T/2 and T.
    pub fn for_domain(spec: &DomainSpec, fe: &FEConfig) -> Self {
        let points = core::array::from_fn(|k| {
            Vec2::new((k + 1) as f64 * spec.length / 6.0, spec.height / 2.0)
        });
        ObservationConfig { points, t1: 0.5 * fe.t_end, t2: fe.t_end }
    }

    /// Checks the reading times are ordered and every station lies strictly
    /// inside the mesh bounding box.  Stations inside the box but outside
    /// the triangulation are caught by point location.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if !(self.t1.is_finite() && self.t2.is_finite() && 0.0 < self.t1 && self.t1 < self.t2) {
            return Err(invalid_input!(
                "reading times must satisfy 0 < t1 < t2, got ({}, {})",
                self.t1,
                self.t2
            ));
        }
        let (lo, hi) = mesh.bounds();
        for p in &self.points {
            let inside = p.x.is_finite()
                && p.y.is_finite()
                && lo.x < p.x
                && p.x < hi.x
                && lo.y < p.y
                && p.y < hi.y;
            if !inside {
                return Err(Error::OutOfDomain { x: p.x, y: p.y });
            }
        }
        Ok(())
    }
}

/// The stacked readings, rows (C¹_x | C¹_y | C²_x | C²_y | C³), each row
/// holding stations 1..5 at t₁ followed by stations 1..5 at t₂.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservationVector {
    values: Vec<f64>,
}

impl ObservationVector {
    /// Wraps a raw vector, checking length, finiteness, and that the
    /// von-Mises block is nonnegative.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != OBSERVATION_LEN {
            return Err(Error::ShapeMismatch {
                context: "observation vector",
                expected: OBSERVATION_LEN,
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "observation vector".into() });
        }
        if values[40..].iter().any(|&v| v < 0.0) {
            return Err(invalid_input!("von-Mises readings must be nonnegative"));
        }
        Ok(ObservationVector { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Column labels in stacking order, e.g. `C1_x_p3_t2`.
    pub fn column_names() -> Vec<String> {
        let mut names = Vec::with_capacity(OBSERVATION_LEN);
        for family in ["C1_x", "C1_y", "C2_x", "C2_y", "C3"] {
            for t in 1..=2 {
                for p in 1..=5 {
                    names.push(format!("{family}_p{p}_t{t}"));
                }
            }
        }
        names
    }
}

/// P₁ value of the displacement field at a point of a known triangle,
/// evaluated as vertex value plus constant gradient times the offset.
fn displacement_in_triangle(mesh: &Mesh, u: &[f64], t: usize, p: Vec2) -> Result<Vec2> {
    let tri = mesh.triangles()[t];
    let [a, _, _] = mesh.triangle_vertices(t)?;
    let g = displacement_gradient(mesh, u, t)?;
    let d = p - a;
    Ok(Vec2::new(
        u[2 * tri[0]] + g.xx * d.x + g.xy * d.y,
        u[2 * tri[0] + 1] + g.yx * d.x + g.yy * d.y,
    ))
}

/// C¹: displacement sampled at each station, entry (k, 5j + i) holding
/// component k at station i and reading time j.
pub fn point_values(sol: &ForwardSolution, cfg: &ObservationConfig) -> Result<[[f64; 10]; 2]> {
    cfg.validate(&sol.mesh)?;
    let mut out = [[0.0; 10]; 2];
    for (i, p) in cfg.points.iter().enumerate() {
        let (tri, bary) = sol.mesh.locate_point(*p)?;
        let verts = sol.mesh.triangles()[tri];
        for (j, t) in [cfg.t1, cfg.t2].into_iter().enumerate() {
            let state = sol.state_at_time(t)?;
            let mut val = Vec2::ZERO;
            for (k, &v) in verts.iter().enumerate() {
                val = val + state.displacement(v) * bary[k];
            }
            out[0][5 * j + i] = val.x;
            out[1][5 * j + i] = val.y;
        }
    }
    Ok(out)
}

/// C²: the vertical mean κ ∫ u(x_i, y) dy with κ = 1/(y_b − y_a).  The
/// integrand is linear on every section segment, so the per-segment
/// trapezoid rule is exact.
pub fn mean_displacement(sol: &ForwardSolution, cfg: &ObservationConfig) -> Result<[[f64; 10]; 2]> {
    cfg.validate(&sol.mesh)?;
    let mut out = [[0.0; 10]; 2];
    for (i, p) in cfg.points.iter().enumerate() {
        let section = sol.mesh.vertical_section(p.x)?;
        let kappa = 1.0 / (section.y_b - section.y_a);
        for (j, t) in [cfg.t1, cfg.t2].into_iter().enumerate() {
            let state = sol.state_at_time(t)?;
            let mut integral = Vec2::ZERO;
            for seg in &section.segments {
                let lo =
                    displacement_in_triangle(&sol.mesh, &state.u, seg.triangle, Vec2::new(p.x, seg.y_lo))?;
                let hi =
                    displacement_in_triangle(&sol.mesh, &state.u, seg.triangle, Vec2::new(p.x, seg.y_hi))?;
                integral = integral + (lo + hi) * (0.5 * (seg.y_hi - seg.y_lo));
            }
            out[0][5 * j + i] = kappa * integral.x;
            out[1][5 * j + i] = kappa * integral.y;
        }
    }
    Ok(out)
}

/// σ_vM = (3/2 σ_dev : σ_dev)^{1/2} with σ_dev = σ − tr(σ)/3 · I, all taken
/// over the plane 2×2 tensor.
pub fn von_mises(sigma: Mat2) -> f64 {
    let dev = sigma + Mat2::IDENTITY * (-sigma.trace() / 3.0);
    libm::sqrt(1.5 * dev.double_dot(dev))
}

/// C³: the vertical mean of σ_vM.  The stress is constant per triangle, so
/// the integral is an exact sum of segment length times element value.
pub fn mean_von_mises(
    sol: &ForwardSolution,
    cfg: &ObservationConfig,
    lame: &LameParams,
) -> Result<[f64; 10]> {
    cfg.validate(&sol.mesh)?;
    let mut out = [0.0; 10];
    for (i, p) in cfg.points.iter().enumerate() {
        let section = sol.mesh.vertical_section(p.x)?;
        let kappa = 1.0 / (section.y_b - section.y_a);
        for (j, t) in [cfg.t1, cfg.t2].into_iter().enumerate() {
            let state = sol.state_at_time(t)?;
            let mut integral = 0.0;
            for seg in &section.segments {
                let grad = displacement_gradient(&sol.mesh, &state.u, seg.triangle)?;
                integral += (seg.y_hi - seg.y_lo) * von_mises(stress(grad, lame));
            }
            out[5 * j + i] = kappa * integral;
        }
    }
    Ok(out)
}

/// Stacks C¹, C², C³ into the length-50 observation vector.
pub fn observe(
    sol: &ForwardSolution,
    cfg: &ObservationConfig,
    lame: &LameParams,
) -> Result<ObservationVector> {
    let c1 = point_values(sol, cfg)?;
    let c2 = mean_displacement(sol, cfg)?;
    let c3 = mean_von_mises(sol, cfg, lame)?;
    let mut values = Vec::with_capacity(OBSERVATION_LEN);
    values.extend_from_slice(&c1[0]);
    values.extend_from_slice(&c1[1]);
    values.extend_from_slice(&c2[0]);
    values.extend_from_slice(&c2[1]);
    values.extend_from_slice(&c3);
    ObservationVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::{lame_from_engineering, FEState, ParameterPoint};
    use crate::geometry::build_mesh;
    use alloc::collections::BTreeMap;
    use alloc::sync::Arc;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Builds a solution whose displacement is the given field of (point, t).
    fn synthetic(
        mesh: &Arc<Mesh>,
        t_end: f64,
        n_steps: usize,
        f: impl Fn(Vec2, f64) -> Vec2,
    ) -> ForwardSolution {
        let dt = t_end / n_steps as f64;
        let mut snaps = BTreeMap::new();
        for s in 0..=n_steps {
            let t = s as f64 * dt;
            let mut st = FEState::zero(mesh, t);
            for (v, p) in mesh.vertices().iter().enumerate() {
                let val = f(*p, t);
                st.u[2 * v] = val.x;
                st.u[2 * v + 1] = val.y;
            }
            snaps.insert(s, st);
        }
        ForwardSolution::from_snapshots(
            ParameterPoint::new(1.0, 0.25).unwrap(),
            Arc::clone(mesh),
            dt,
            n_steps,
            snaps,
        )
        .unwrap()
    }

    fn desk_mesh() -> Arc<Mesh> {
        Arc::new(build_mesh(&DomainSpec::new(2.0, 1.0, 0.5).unwrap()).unwrap())
    }

    fn default_cfg(spec: &DomainSpec) -> ObservationConfig {
        ObservationConfig::for_domain(spec, &FEConfig::default())
    }

    #[test]
    fn zero_solution_observes_zero() {
        let mesh = desk_mesh();
        let sol = synthetic(&mesh, 1.0, 2, |_, _| Vec2::ZERO);
        let cfg = default_cfg(&DomainSpec::new(2.0, 1.0, 0.5).unwrap());
        let lame = lame_from_engineering(&ParameterPoint::new(100.0, 0.3).unwrap()).unwrap();
        let obs = observe(&sol, &cfg, &lame).unwrap();
        assert_eq!(obs.as_slice().len(), OBSERVATION_LEN);
        assert!(obs.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_field_fills_every_column() {
        let mesh = desk_mesh();
        let c = Vec2::new(0.3, -0.7);
        let sol = synthetic(&mesh, 1.0, 2, move |_, _| c);
        let cfg = default_cfg(&DomainSpec::new(2.0, 1.0, 0.5).unwrap());
        let c1 = point_values(&sol, &cfg).unwrap();
        let c2 = mean_displacement(&sol, &cfg).unwrap();
        for col in 0..10 {
            assert!((c1[0][col] - c.x).abs() < 1e-14);
            assert!((c1[1][col] - c.y).abs() < 1e-14);
            assert!((c2[0][col] - c.x).abs() < 1e-14);
            assert!((c2[1][col] - c.y).abs() < 1e-14);
        }
        let lame = lame_from_engineering(&ParameterPoint::new(100.0, 0.3).unwrap()).unwrap();
        let c3 = mean_von_mises(&sol, &cfg, &lame).unwrap();
        assert!(c3.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn linear_field_samples_to_the_station_coordinates() {
        let mesh = desk_mesh();
        let sol = synthetic(&mesh, 1.0, 2, |p, _| p);
        let spec = DomainSpec::new(2.0, 1.0, 0.5).unwrap();
        let cfg = default_cfg(&spec);
        let c1 = point_values(&sol, &cfg).unwrap();
        for (i, p) in cfg.points.iter().enumerate() {
            for j in 0..2 {
                assert!((c1[0][5 * j + i] - p.x).abs() < 1e-13);
                assert!((c1[1][5 * j + i] - p.y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn vertical_mean_of_height_field_is_half() {
        // u = (0, y) on a unit-height strip: the mean second component is 1/2.
        let spec = DomainSpec::new(1.0, 1.0, 0.5).unwrap();
        let mesh = Arc::new(build_mesh(&spec).unwrap());
        let sol = synthetic(&mesh, 1.0, 2, |p, _| Vec2::new(0.0, p.y));
        let cfg = default_cfg(&spec);
        let c2 = mean_displacement(&sol, &cfg).unwrap();
        for col in 0..10 {
            assert!((c2[0][col]).abs() < 1e-14);
            assert!((c2[1][col] - 0.5).abs() < 1e-14, "got {}", c2[1][col]);
        }
    }

    #[test]
    fn von_mises_hand_values() {
        assert_eq!(von_mises(Mat2::ZERO), 0.0);
        let vm_id = von_mises(Mat2::IDENTITY);
        assert!((vm_id - libm::sqrt(1.0 / 3.0)).abs() < 1e-15, "got {vm_id}");
        let tau = 0.8;
        let shear = Mat2::new(0.0, tau, tau, 0.0);
        assert!((von_mises(shear) - libm::sqrt(3.0) * tau).abs() < 1e-15);
    }

    #[test]
    fn uniform_stress_mean_equals_pointwise_value() {
        let mesh = desk_mesh();
        let a = 0.01;
        let sol = synthetic(&mesh, 1.0, 2, move |p, _| Vec2::new(a * p.x, 0.0));
        let cfg = default_cfg(&DomainSpec::new(2.0, 1.0, 0.5).unwrap());
        let lame = lame_from_engineering(&ParameterPoint::new(100.0, 0.3).unwrap()).unwrap();
        let expected = von_mises(stress(Mat2::new(a, 0.0, 0.0, 0.0), &lame));
        assert!(expected > 0.0);
        let c3 = mean_von_mises(&sol, &cfg, &lame).unwrap();
        for v in c3 {
            assert!((v - expected).abs() < 1e-12 * expected);
        }
    }

    /// Interpolates the displacement at `p` through the independent
    /// locate-and-interpolate path.
    fn sample_u(mesh: &Mesh, state: &FEState, p: Vec2) -> Vec2 {
        let (t, bary) = mesh.locate_point(p).unwrap();
        let verts = mesh.triangles()[t];
        let mut val = Vec2::ZERO;
        for (k, &v) in verts.iter().enumerate() {
            val = val + state.displacement(v) * bary[k];
        }
        val
    }

    #[test]
    fn random_field_means_match_dense_sampling() {
        let mesh = desk_mesh();
        let mut rng = ChaCha20Rng::seed_from_u64(0x0b5e_71e5);
        let nv = mesh.vertices().len();
        let coeffs: Vec<f64> = (0..2 * nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = coeffs.clone();
        let sol = synthetic(&mesh, 1.0, 2, move |_, _| Vec2::ZERO);
        // Overwrite with the random coefficients at every stored step.
        let mut snaps = BTreeMap::new();
        for s in 0..=2usize {
            let t = s as f64 * 0.5;
            let scale = 1.0 + t;
            let mut st = FEState::zero(&mesh, t);
            for d in 0..2 * nv {
                st.u[d] = scale * c[d];
            }
            snaps.insert(s, st);
        }
        let sol = ForwardSolution::from_snapshots(sol.parameters, Arc::clone(&mesh), 0.5, 2, snaps)
            .unwrap();

        // Stations chosen off the structured grid lines so every sampling
        // point lies inside exactly one triangle.
        let points = [
            Vec2::new(0.3, 0.5),
            Vec2::new(0.7, 0.5),
            Vec2::new(1.1, 0.5),
            Vec2::new(1.45, 0.5),
            Vec2::new(1.9, 0.5),
        ];
        let cfg = ObservationConfig { points, t1: 0.5, t2: 1.0 };
        let lame = lame_from_engineering(&ParameterPoint::new(100.0, 0.3).unwrap()).unwrap();
        let c2 = mean_displacement(&sol, &cfg).unwrap();
        let c3 = mean_von_mises(&sol, &cfg, &lame).unwrap();

        for (i, p) in points.iter().enumerate() {
            let section = mesh.vertical_section(p.x).unwrap();
            let total = section.y_b - section.y_a;
            for (j, t) in [0.5, 1.0].into_iter().enumerate() {
                let state = sol.state_at_time(t).unwrap();
                // ~1e4 samples split across segments, aligned to the kinks.
                let mut int_u = Vec2::ZERO;
                let mut int_vm = 0.0;
                for seg in &section.segments {
                    let len = seg.y_hi - seg.y_lo;
                    let m = ((1e4 * len / total) as usize).max(2);
                    let dy = len / m as f64;
                    for k in 0..m {
                        let y0 = seg.y_lo + k as f64 * dy;
                        let lo = sample_u(&mesh, state, Vec2::new(p.x, y0));
                        let hi = sample_u(&mesh, state, Vec2::new(p.x, y0 + dy));
                        int_u = int_u + (lo + hi) * (0.5 * dy);
                        // Midpoint keeps the stress sample inside the element.
                        let mid = Vec2::new(p.x, y0 + 0.5 * dy);
                        let (tri, _) = mesh.locate_point(mid).unwrap();
                        let grad = displacement_gradient(&mesh, &state.u, tri).unwrap();
                        int_vm += dy * von_mises(stress(grad, &lame));
                    }
                }
                let col = 5 * j + i;
                assert!((c2[0][col] - int_u.x / total).abs() < 1e-10);
                assert!((c2[1][col] - int_u.y / total).abs() < 1e-10);
                assert!((c3[col] - int_vm / total).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn observe_stacks_the_family_blocks_in_order() {
        let mesh = desk_mesh();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let nv = mesh.vertices().len();
        let coeffs: Vec<f64> = (0..2 * nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = coeffs.clone();
        let sol = synthetic(&mesh, 1.0, 2, move |p, t| {
            let base = Vec2::new(p.x * p.y, p.x - p.y);
            (base + Vec2::new(c[0], c[1])) * (0.5 + t)
        });
        let spec = DomainSpec::new(2.0, 1.0, 0.5).unwrap();
        let cfg = default_cfg(&spec);
        let lame = lame_from_engineering(&ParameterPoint::new(100.0, 0.3).unwrap()).unwrap();
        let obs = observe(&sol, &cfg, &lame).unwrap();
        let c1 = point_values(&sol, &cfg).unwrap();
        let c2 = mean_displacement(&sol, &cfg).unwrap();
        let c3 = mean_von_mises(&sol, &cfg, &lame).unwrap();
        let v = obs.as_slice();
        assert_eq!(&v[0..10], &c1[0]);
        assert_eq!(&v[10..20], &c1[1]);
        assert_eq!(&v[20..30], &c2[0]);
        assert_eq!(&v[30..40], &c2[1]);
        assert_eq!(&v[40..50], &c3);
    }

    #[test]
    fn permuting_stations_permutes_the_five_blocks() {
        let mesh = desk_mesh();
        let sol = synthetic(&mesh, 1.0, 2, |p, t| Vec2::new(p.x * t, p.y + p.x * p.x));
        let spec = DomainSpec::new(2.0, 1.0, 0.5).unwrap();
        let cfg = default_cfg(&spec);
        let perm = [2usize, 0, 4, 1, 3];
        let permuted = ObservationConfig {
            points: core::array::from_fn(|k| cfg.points[perm[k]]),
            ..cfg.clone()
        };
        let lame = lame_from_engineering(&ParameterPoint::new(100.0, 0.3).unwrap()).unwrap();
        let base = observe(&sol, &cfg, &lame).unwrap();
        let swapped = observe(&sol, &permuted, &lame).unwrap();
        for block in 0..5 {
            for j in 0..2 {
                for k in 0..5 {
                    let from = block * 10 + 5 * j + perm[k];
                    let to = block * 10 + 5 * j + k;
                    assert_eq!(swapped.as_slice()[to], base.as_slice()[from]);
                }
            }
        }
    }

    #[test]
    fn observation_is_homogeneous_in_field_and_stiffness() {
        let mesh = desk_mesh();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let nv = mesh.vertices().len();
        let coeffs: Vec<f64> = (0..2 * nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let build = |scale: f64| {
            let mut snaps = BTreeMap::new();
            for s in 0..=2usize {
                let t = s as f64 * 0.5;
                let mut st = FEState::zero(&mesh, t);
                for d in 0..2 * nv {
                    st.u[d] = scale * coeffs[d] * (1.0 + t);
                }
                snaps.insert(s, st);
            }
            ForwardSolution::from_snapshots(
                ParameterPoint::new(1.0, 0.25).unwrap(),
                Arc::clone(&mesh),
                0.5,
                2,
                snaps,
            )
            .unwrap()
        };
        let spec = DomainSpec::new(2.0, 1.0, 0.5).unwrap();
        let cfg = default_cfg(&spec);
        let lame = lame_from_engineering(&ParameterPoint::new(100.0, 0.3).unwrap()).unwrap();

        let a = 3.7;
        let base = observe(&build(1.0), &cfg, &lame).unwrap();
        let scaled = observe(&build(a), &cfg, &lame).unwrap();
        for (s, b) in scaled.as_slice().iter().zip(base.as_slice()) {
            assert!((s - a * b).abs() <= 1e-12 * (1.0 + b.abs() * a));
        }
        assert!(base.as_slice()[40..].iter().all(|&v| v >= 0.0));

        // Scaling the moduli scales only the stress block.
        let s = 2.5;
        let stiffer = LameParams { lambda: s * lame.lambda, mu: s * lame.mu };
        let harder = observe(&build(1.0), &cfg, &stiffer).unwrap();
        for k in 0..40 {
            assert_eq!(harder.as_slice()[k], base.as_slice()[k]);
        }
        for k in 40..50 {
            let b = base.as_slice()[k];
            assert!((harder.as_slice()[k] - s * b).abs() <= 1e-12 * (1.0 + s * b));
        }
    }

    #[test]
    fn stations_outside_the_domain_are_rejected() {
        let mesh = desk_mesh();
        let sol = synthetic(&mesh, 1.0, 2, |_, _| Vec2::ZERO);
        let spec = DomainSpec::new(2.0, 1.0, 0.5).unwrap();
        let mut cfg = default_cfg(&spec);
        cfg.points[3] = Vec2::new(3.0, 0.5);
        assert!(matches!(point_values(&sol, &cfg), Err(Error::OutOfDomain { .. })));
        assert!(matches!(mean_displacement(&sol, &cfg), Err(Error::OutOfDomain { .. })));

        let mut off_grid = default_cfg(&spec);
        off_grid.t1 = 0.37;
        assert!(point_values(&sol, &off_grid).is_err());
    }

    #[test]
    fn column_names_match_the_stacking_order() {
        let names = ObservationVector::column_names();
        assert_eq!(names.len(), OBSERVATION_LEN);
        assert_eq!(names[0], "C1_x_p1_t1");
        assert_eq!(names[4], "C1_x_p5_t1");
        assert_eq!(names[5], "C1_x_p1_t2");
        assert_eq!(names[10], "C1_y_p1_t1");
        assert_eq!(names[20], "C2_x_p1_t1");
        assert_eq!(names[30], "C2_y_p1_t1");
        assert_eq!(names[40], "C3_p1_t1");
        assert_eq!(names[49], "C3_p5_t2");
    }

    #[test]
    fn malformed_raw_vectors_are_rejected() {
        assert!(matches!(
            ObservationVector::new(vec![0.0; 49]),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut bad = vec![0.0; 50];
        bad[7] = f64::NAN;
        assert!(matches!(ObservationVector::new(bad), Err(Error::NonFinite { .. })));
        let mut neg = vec![0.0; 50];
        neg[45] = -1.0;
        assert!(ObservationVector::new(neg).is_err());
    }
}
