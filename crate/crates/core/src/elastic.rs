//! Non-stationary linear elasticity with a Nitsche-type contact boundary.
//!
//! The body occupies a triangulated rectangle clamped on the left edge,
//! driven by a time-dependent Dirichlet ramp on the right edge, and pressed
//! against a rigid zero-gap obstacle along top and bottom.  The momentum
//! balance `ρ u_tt − ∇·σ(u) = f` is discretised with P₁ elements in space and
//! backward Euler in time on the first-order system `(u, v)`; eliminating
//! `v⁺ = (u⁺ − u)/dt` leaves one nonlinear system per step, solved by a
//! semismooth Newton method.  The contact condition enters as the penalty
//! residual `(1/γ)[u·n − γ σ_nn]_+` on each contact edge, with the Nitsche
//! weight `1/γ = γ⁰/h`, `γ⁰ = θ·E`.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Mesh};
use crate::invalid_input;
use crate::linalg::{norm, BandLu, BandMatrix, Mat2, Vec2};

/// Engineering material parameters: Young's modulus and Poisson ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParameterPoint {
    /// Elasticity modulus E, pascals.
    pub young: f64,
    /// Poisson ratio ν, dimensionless.
    pub poisson: f64,
}

impl ParameterPoint {
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        let p = ParameterPoint { young, poisson };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.young > 0.0 && self.young.is_finite()) {
            return Err(invalid_input!("Young's modulus must be positive, got {}", self.young));
        }
        if !(self.poisson > 0.0 && self.poisson < 0.5) {
            return Err(invalid_input!("Poisson ratio must lie in (0, 1/2), got {}", self.poisson));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.young, self.poisson]
    }
}

/// The admissible parameter rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ParameterBox {
    pub young_min: f64,
    pub young_max: f64,
    pub poisson_min: f64,
    pub poisson_max: f64,
}

impl ParameterBox {
    pub fn new(young_min: f64, young_max: f64, poisson_min: f64, poisson_max: f64) -> Result<Self> {
        let b = ParameterBox { young_min, young_max, poisson_min, poisson_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.young_min > 0.0 && self.young_min <= self.young_max) {
            return Err(invalid_input!(
                "need 0 < young_min <= young_max, got [{}, {}]",
                self.young_min,
                self.young_max
            ));
        }
        if !(self.poisson_min > 0.0
            && self.poisson_min <= self.poisson_max
            && self.poisson_max < 0.5)
        {
            return Err(invalid_input!(
                "need 0 < poisson_min <= poisson_max < 1/2, got [{}, {}]",
                self.poisson_min,
                self.poisson_max
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: &ParameterPoint) -> bool {
        p.young >= self.young_min
            && p.young <= self.young_max
            && p.poisson >= self.poisson_min
            && p.poisson <= self.poisson_max
    }

    pub fn midpoint(&self) -> ParameterPoint {
        ParameterPoint {
            young: 0.5 * (self.young_min + self.young_max),
            poisson: 0.5 * (self.poisson_min + self.poisson_max),
        }
    }

    pub fn clamp(&self, p: ParameterPoint) -> ParameterPoint {
        ParameterPoint {
            young: p.young.clamp(self.young_min, self.young_max),
            poisson: p.poisson.clamp(self.poisson_min, self.poisson_max),
        }
    }

    /// Regular `n_young × n_poisson` grid including the box corners,
    /// enumerated modulus-major.
    pub fn grid(&self, n_young: usize, n_poisson: usize) -> Result<Vec<ParameterPoint>> {
        if n_young < 2 || n_poisson < 2 {
            return Err(invalid_input!("parameter grid needs at least 2 points per axis"));
        }
        let mut out = Vec::with_capacity(n_young * n_poisson);
        for i in 0..n_young {
            let fy = i as f64 / (n_young - 1) as f64;
            let young = self.young_min + fy * (self.young_max - self.young_min);
            for j in 0..n_poisson {
                let fp = j as f64 / (n_poisson - 1) as f64;
                let poisson = self.poisson_min + fp * (self.poisson_max - self.poisson_min);
                out.push(ParameterPoint { young, poisson });
            }
        }
        Ok(out)
    }

    /// Uniform sample from the box.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> ParameterPoint {
        let fy: f64 = rng.gen();
        let fp: f64 = rng.gen();
        ParameterPoint {
            young: self.young_min + fy * (self.young_max - self.young_min),
            poisson: self.poisson_min + fp * (self.poisson_max - self.poisson_min),
        }
    }
}

impl Default for ParameterBox {
    /// The admissible set used throughout: E ∈ [5·10¹⁰, 10¹¹] Pa,
    /// ν ∈ [0.3, 0.4].
    fn default() -> Self {
        ParameterBox { young_min: 5e10, young_max: 1e11, poisson_min: 0.3, poisson_max: 0.4 }
    }
}

/// First Lamé parameter λ and shear modulus μ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LameParams {
    pub lambda: f64,
    pub mu: f64,
}

/// λ = Eν/((1+ν)(1−2ν)), μ = E/(2(1+ν)).
pub fn lame_from_engineering(p: &ParameterPoint) -> Result<LameParams> {
    p.validate()?;
    let ParameterPoint { young, poisson } = *p;
    Ok(LameParams {
        lambda: young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)),
        mu: young / (2.0 * (1.0 + poisson)),
    })
}

/// Inverts [`lame_from_engineering`]: E = μ(3λ + 2μ)/(λ + μ).
pub fn young_modulus(lame: &LameParams) -> f64 {
    lame.mu * (3.0 * lame.lambda + 2.0 * lame.mu) / (lame.lambda + lame.mu)
}

/// Linearised strain ε(u) = (∇u + ∇uᵀ)/2.
pub fn strain(grad_u: Mat2) -> Mat2 {
    grad_u.sym()
}

/// σ = 2με + λ tr(ε) I.
pub fn stress(grad_u: Mat2, lame: &LameParams) -> Mat2 {
    let e = strain(grad_u);
    let tr = e.trace();
    Mat2::new(
        2.0 * lame.mu * e.xx + lame.lambda * tr,
        2.0 * lame.mu * e.xy,
        2.0 * lame.mu * e.yx,
        2.0 * lame.mu * e.yy + lame.lambda * tr,
    )
}

/// `[g]_+ = max{g, 0}`.
pub fn positive_part(g: f64) -> f64 {
    if g > 0.0 {
        g
    } else {
        0.0
    }
}

/// Defect of the contact reformulation `σ_nn = −(1/γ)[u_n − γ σ_nn]_+`:
/// zero exactly when `(u_n, σ_nn)` satisfies the contact conditions
/// `u_n ≤ 0`, `σ_nn ≤ 0`, `u_n σ_nn = 0`, for every γ > 0.
pub fn nitsche_reformulation_residual(u_n: f64, sigma_nn: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(invalid_input!("Nitsche gamma must be positive, got {gamma}"));
    }
    Ok(sigma_nn + positive_part(u_n - gamma * sigma_nn) / gamma)
}

/// Prescribed boundary displacement: zero on the clamped left edge, the
/// cubic ramp `(18t² − 12t³, 0)` on the driven right edge.
pub fn dirichlet_value(t: f64, tag: BoundaryTag) -> Result<Vec2> {
    match tag {
        BoundaryTag::Left => Ok(Vec2::ZERO),
        BoundaryTag::Right => Ok(Vec2::new(18.0 * t * t - 12.0 * t * t * t, 0.0)),
        BoundaryTag::TopBottom => {
            Err(invalid_input!("no Dirichlet data on the contact boundary"))
        }
    }
}

/// Solver configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FEConfig {
    /// Density ρ, kg/m³.
    pub rho: f64,
    /// Time horizon T, seconds.
    pub t_end: f64,
    /// Number of uniform backward-Euler steps; even, so T/2 is a grid time.
    pub n_steps: usize,
    /// θ in the Nitsche weight 1/γ = θE/h.
    pub gamma_ratio: f64,
    /// Constant body force f, N/m³.
    pub body_force: Vec2,
    /// Relative Newton residual tolerance.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Scale factor applied to the driven boundary ramp.
    pub dirichlet_scale: f64,
    /// Disables the contact term entirely (pure elasticity) when false.
    pub contact_enabled: bool,
}

impl Default for FEConfig {
    fn default() -> Self {
        FEConfig {
            rho: 2700.0,
            t_end: 1.0,
            n_steps: 50,
            gamma_ratio: 10.0,
            body_force: Vec2::ZERO,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            dirichlet_scale: 1.0,
            contact_enabled: true,
        }
    }
}

impl FEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid_input!("time horizon must be positive, got {}", self.t_end));
        }
        if self.n_steps == 0 || self.n_steps % 2 != 0 {
            return Err(invalid_input!(
                "n_steps must be even and positive so T/2 is a grid time, got {}",
                self.n_steps
            ));
        }
        if !(self.rho > 0.0) {
            return Err(invalid_input!("density must be positive, got {}", self.rho));
        }
        if !(self.gamma_ratio > 0.0) {
            return Err(invalid_input!("gamma_ratio must be positive, got {}", self.gamma_ratio));
        }
        if !(self.newton_tol > 0.0) {
            return Err(invalid_input!("newton_tol must be positive, got {}", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            return Err(invalid_input!("newton_max_iter must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }
}

/// Displacement/velocity coefficients at one time level.  DOF `2v + c` is
/// component `c ∈ {x=0, y=1}` of vertex `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct FEState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl FEState {
    pub fn zero(mesh: &Mesh, t: f64) -> Self {
        let n = 2 * mesh.vertices().len();
        FEState { u: vec![0.0; n], v: vec![0.0; n], t }
    }

    pub fn displacement(&self, vertex: usize) -> Vec2 {
        Vec2::new(self.u[2 * vertex], self.u[2 * vertex + 1])
    }

    pub fn velocity(&self, vertex: usize) -> Vec2 {
        Vec2::new(self.v[2 * vertex], self.v[2 * vertex + 1])
    }
}

/// Result of marching the forward problem to the horizon: every time level
/// from 0 to `n_steps`, keyed by step index.
#[derive(Clone, Debug)]
pub struct ForwardSolution {
    pub parameters: ParameterPoint,
    pub mesh: Arc<Mesh>,
    pub dt: f64,
    pub n_steps: usize,
    snapshots: BTreeMap<usize, FEState>,
}

impl ForwardSolution {
    /// Rebuilds a solution from externally held snapshots.  Every step
    /// `0..=n_steps` must be present, with grid-consistent times and DOF
    /// vectors sized for the mesh.
    pub fn from_snapshots(
        parameters: ParameterPoint,
        mesh: Arc<Mesh>,
        dt: f64,
        n_steps: usize,
        snapshots: BTreeMap<usize, FEState>,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid_input!("time step must be positive, got {dt}"));
        }
        if n_steps == 0 {
            return Err(invalid_input!("n_steps must be positive"));
        }
        if snapshots.len() != n_steps + 1 {
            return Err(invalid_input!(
                "expected snapshots 0..={n_steps}, got {} entries",
                snapshots.len()
            ));
        }
        let ndof = 2 * mesh.vertices().len();
        for step in 0..=n_steps {
            let state = snapshots
                .get(&step)
                .ok_or(invalid_input!("missing snapshot for step {step}"))?;
            if state.u.len() != ndof || state.v.len() != ndof {
                return Err(Error::ShapeMismatch {
                    context: "snapshot DOF vector",
                    expected: ndof,
                    got: state.u.len(),
                });
            }
            if libm::fabs(state.t - step as f64 * dt) > 1e-9 * libm::fmax(dt, 1.0) {
                return Err(invalid_input!(
                    "snapshot {step} carries t = {} off the dt = {dt} grid",
                    state.t
                ));
            }
        }
        Ok(ForwardSolution { parameters, mesh, dt, n_steps, snapshots })
    }

    pub fn snapshot(&self, step: usize) -> Option<&FEState> {
        self.snapshots.get(&step)
    }

    /// State at t = T/2.
    pub fn mid_state(&self) -> &FEState {
        self.snapshots
            .get(&(self.n_steps / 2))
            .expect("forward solution always stores the half-time snapshot")
    }

    /// State at t = T.
    pub fn final_state(&self) -> &FEState {
        self.snapshots
            .get(&self.n_steps)
            .expect("forward solution always stores the final snapshot")
    }

    /// The snapshot whose grid time matches `t` (tolerance 1e-9·dt).
    pub fn state_at_time(&self, t: f64) -> Result<&FEState> {
        let step = libm::round(t / self.dt) as usize;
        let state = self
            .snapshots
            .get(&step)
            .ok_or(invalid_input!("no snapshot stored at t = {t}"))?;
        if libm::fabs(state.t - t) > 1e-9 * self.dt {
            return Err(invalid_input!("t = {t} is not a grid time (dt = {})", self.dt));
        }
        Ok(state)
    }

    pub fn snapshots(&self) -> impl Iterator<Item = (&usize, &FEState)> {
        self.snapshots.iter()
    }
}

/// Gradient of the P₁ displacement field on triangle `t` (constant there).
pub fn displacement_gradient(mesh: &Mesh, u: &[f64], t: usize) -> Result<Mat2> {
    let tri = mesh.triangles()[t];
    let grads = mesh.hat_gradients(t)?;
    let mut g = Mat2::ZERO;
    for (k, &v) in tri.iter().enumerate() {
        let ux = u[2 * v];
        let uy = u[2 * v + 1];
        g.xx += ux * grads[k].x;
        g.xy += ux * grads[k].y;
        g.yx += uy * grads[k].x;
        g.yy += uy * grads[k].y;
    }
    Ok(g)
}

/// Largest nodal penetration `[u·n]_+` over the contact boundary.
pub fn max_boundary_penetration(state: &FEState, mesh: &Mesh) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (idx, edge) in mesh.boundary_edges().iter().enumerate() {
        if edge.tag != BoundaryTag::TopBottom {
            continue;
        }
        let n = mesh.outward_normal(idx)?;
        for &v in &edge.vertices {
            let un = state.displacement(v).dot(n);
            worst = worst.max(positive_part(un));
        }
    }
    Ok(worst)
}

/// Three-point Gauss rule on [0, 1]: exact through cubics, ample for the
/// piecewise-linear contact integrand.
const EDGE_QUAD: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 4.0 / 9.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Everything assembly needs per contact edge, fixed for given (mesh, lame).
#[derive(Clone, Debug)]
struct ContactEdge {
    /// The two edge vertices.
    verts: [usize; 2],
    /// All three vertices of the adjacent triangle (the stress stencil).
    tri: [usize; 3],
    grads: [Vec2; 3],
    normal: Vec2,
    len: f64,
    /// ∂σ_nn/∂u over the six triangle DOFs: 2μ n_b (g_k·n) + λ g_k[b].
    dsigma: [f64; 6],
}

/// Pre-assembled pieces of one backward-Euler step for fixed
/// (mesh, lame, cfg, dt).  The contact term is the only state-dependent
/// part, and it depends on the state solely through the Heaviside activity
/// pattern of its Gauss points — which is what makes caching the
/// factorisation per pattern exact, not an approximation.
struct StepOperator<'m> {
    cfg: &'m FEConfig,
    lame: LameParams,
    dt: f64,
    ndof: usize,
    /// ρ/dt² · consistent mass.
    mass_scaled: BandMatrix,
    /// ρ/dt² · mass + elastic stiffness.
    linear: BandMatrix,
    /// Constant body-force load vector.
    load: Vec<f64>,
    /// (vertex, tag) pairs with prescribed displacement, sorted by vertex.
    dirichlet: Vec<(usize, BoundaryTag)>,
    contact: Vec<ContactEdge>,
    /// 1/γ = θE/h.
    inv_gamma: f64,
    gamma: f64,
}

/// Factorisation cache keyed by the contact activity pattern.
struct NewtonCache {
    pattern: Vec<bool>,
    lu: Option<BandLu>,
}

impl NewtonCache {
    fn empty() -> Self {
        NewtonCache { pattern: Vec::new(), lu: None }
    }
}

impl<'m> StepOperator<'m> {
    fn new(mesh: &'m Mesh, lame: LameParams, cfg: &'m FEConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid_input!("time step must be positive, got {dt}"));
        }
        if !(lame.mu > 0.0 && lame.lambda > 0.0) {
            return Err(invalid_input!(
                "Lamé parameters must be positive, got lambda={}, mu={}",
                lame.lambda,
                lame.mu
            ));
        }
        let nv = mesh.vertices().len();
        let ndof = 2 * nv;
        let band = 2 * mesh.max_index_spread() + 1;
        let mass_factor = cfg.rho / (dt * dt);

        let mut mass_scaled = BandMatrix::zeros(ndof, band, band);
        let mut linear = BandMatrix::zeros(ndof, band, band);
        let mut load = vec![0.0; ndof];
        for t in 0..mesh.triangles().len() {
            let tri = mesh.triangles()[t];
            let area = mesh.triangle_area(t)?;
            let grads = mesh.hat_gradients(t)?;
            for i in 0..3 {
                let gi = [grads[i].x, grads[i].y];
                for j in 0..3 {
                    let gj = [grads[j].x, grads[j].y];
                    let gdot = grads[i].dot(grads[j]);
                    let m = mass_factor * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                    for a in 0..2 {
                        for b in 0..2 {
                            let stiff = area
                                * (lame.mu
                                    * (if a == b { gdot } else { 0.0 } + gi[b] * gj[a])
                                    + lame.lambda * gi[a] * gj[b]);
                            let row = 2 * tri[i] + a;
                            let col = 2 * tri[j] + b;
                            if a == b {
                                mass_scaled.add(row, col, m);
                                linear.add(row, col, stiff + m);
                            } else {
                                linear.add(row, col, stiff);
                            }
                        }
                    }
                }
                load[2 * tri[i]] += area / 3.0 * cfg.body_force.x;
                load[2 * tri[i] + 1] += area / 3.0 * cfg.body_force.y;
            }
        }

        let mut dirichlet: Vec<(usize, BoundaryTag)> = mesh
            .tagged_vertices(BoundaryTag::Left)
            .into_iter()
            .map(|v| (v, BoundaryTag::Left))
            .chain(
                mesh.tagged_vertices(BoundaryTag::Right)
                    .into_iter()
                    .map(|v| (v, BoundaryTag::Right)),
            )
            .collect();
        dirichlet.sort_unstable_by_key(|(v, _)| *v);

        let inv_gamma = cfg.gamma_ratio * young_modulus(&lame) / mesh.h();
        let gamma = 1.0 / inv_gamma;

        let mut contact = Vec::new();
        if cfg.contact_enabled {
            for (idx, edge) in mesh.boundary_edges().iter().enumerate() {
                if edge.tag != BoundaryTag::TopBottom {
                    continue;
                }
                let a = mesh.vertices()[edge.vertices[0]];
                let b = mesh.vertices()[edge.vertices[1]];
                let grads = mesh.hat_gradients(edge.triangle)?;
                let n = mesh.outward_normal(idx)?;
                let mut dsigma = [0.0; 6];
                for k in 0..3 {
                    let gn = grads[k].dot(n);
                    dsigma[2 * k] = 2.0 * lame.mu * n.x * gn + lame.lambda * grads[k].x;
                    dsigma[2 * k + 1] = 2.0 * lame.mu * n.y * gn + lame.lambda * grads[k].y;
                }
                contact.push(ContactEdge {
                    verts: edge.vertices,
                    tri: mesh.triangles()[edge.triangle],
                    grads,
                    normal: n,
                    len: (b - a).norm(),
                    dsigma,
                });
            }
        }

        Ok(StepOperator {
            cfg,
            lame,
            dt,
            ndof,
            mass_scaled,
            linear,
            load,
            dirichlet,
            contact,
            inv_gamma,
            gamma,
        })
    }

    fn boundary_displacement(&self, t: f64, tag: BoundaryTag) -> Result<Vec2> {
        let g = dirichlet_value(t, tag)?;
        Ok(g * self.cfg.dirichlet_scale)
    }

    /// Writes the prescribed values into `u` at time `t`.
    fn apply_dirichlet(&self, u: &mut [f64], t: f64) -> Result<()> {
        for &(v, tag) in &self.dirichlet {
            let g = self.boundary_displacement(t, tag)?;
            u[2 * v] = g.x;
            u[2 * v + 1] = g.y;
        }
        Ok(())
    }

    /// σ_nn of the adjacent element at displacement `u` (constant per edge).
    fn edge_normal_stress(&self, u: &[f64], e: &ContactEdge) -> f64 {
        let mut grad = Mat2::ZERO;
        for (k, &v) in e.tri.iter().enumerate() {
            let ux = u[2 * v];
            let uy = u[2 * v + 1];
            grad.xx += ux * e.grads[k].x;
            grad.xy += ux * e.grads[k].y;
            grad.yx += uy * e.grads[k].x;
            grad.yy += uy * e.grads[k].y;
        }
        let sig = stress(grad, &self.lame);
        e.normal.dot(sig.mul_vec(e.normal))
    }

    /// Residual of the step system at displacement guess `u_plus`.
    fn residual(&self, u_plus: &[f64], prev: &FEState, t_plus: f64) -> Result<Vec<f64>> {
        if u_plus.len() != self.ndof || prev.u.len() != self.ndof {
            return Err(Error::ShapeMismatch {
                context: "step residual state",
                expected: self.ndof,
                got: u_plus.len().max(prev.u.len()),
            });
        }
        let mut r = vec![0.0; self.ndof];
        self.linear.matvec(u_plus, &mut r);
        // − ρ/dt² M (u + dt v) − F_body
        let pred: Vec<f64> =
            prev.u.iter().zip(&prev.v).map(|(u, v)| u + self.dt * v).collect();
        let mut drift = vec![0.0; self.ndof];
        self.mass_scaled.matvec(&pred, &mut drift);
        for i in 0..self.ndof {
            r[i] -= drift[i] + self.load[i];
        }
        self.accumulate_contact_residual(u_plus, &mut r);
        for &(v, tag) in &self.dirichlet {
            let g = self.boundary_displacement(t_plus, tag)?;
            r[2 * v] = u_plus[2 * v] - g.x;
            r[2 * v + 1] = u_plus[2 * v + 1] - g.y;
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "step residual".into() });
        }
        Ok(r)
    }

    fn accumulate_contact_residual(&self, u: &[f64], r: &mut [f64]) {
        for e in &self.contact {
            let sigma_nn = self.edge_normal_stress(u, e);
            let ua = Vec2::new(u[2 * e.verts[0]], u[2 * e.verts[0] + 1]);
            let ub = Vec2::new(u[2 * e.verts[1]], u[2 * e.verts[1] + 1]);
            for &(xi, w) in &EDGE_QUAD {
                let un = (ua * (1.0 - xi) + ub * xi).dot(e.normal);
                let s = positive_part(un - self.gamma * sigma_nn);
                if s == 0.0 {
                    continue;
                }
                let scale = w * e.len * self.inv_gamma * s;
                for (k, &v) in e.verts.iter().enumerate() {
                    let basis = if k == 0 { 1.0 - xi } else { xi };
                    r[2 * v] += scale * basis * e.normal.x;
                    r[2 * v + 1] += scale * basis * e.normal.y;
                }
            }
        }
    }

    /// Heaviside activity flags of all contact Gauss points at `u`
    /// (derivative 0 exactly at the kink).
    fn active_pattern(&self, u: &[f64]) -> Vec<bool> {
        let mut pat = Vec::with_capacity(3 * self.contact.len());
        for e in &self.contact {
            let sigma_nn = self.edge_normal_stress(u, e);
            let ua = Vec2::new(u[2 * e.verts[0]], u[2 * e.verts[0] + 1]);
            let ub = Vec2::new(u[2 * e.verts[1]], u[2 * e.verts[1] + 1]);
            for &(xi, _) in &EDGE_QUAD {
                let un = (ua * (1.0 - xi) + ub * xi).dot(e.normal);
                pat.push(un - self.gamma * sigma_nn > 0.0);
            }
        }
        pat
    }

    /// Semismooth Jacobian for a given activity pattern: linear part plus the
    /// Heaviside-gated contact linearisation, Dirichlet rows replaced by
    /// identity rows.
    fn jacobian(&self, pattern: &[bool]) -> BandMatrix {
        let mut jac = self.linear.clone();
        let mut q = 0;
        for e in &self.contact {
            for &(xi, w) in &EDGE_QUAD {
                let active = pattern[q];
                q += 1;
                if !active {
                    continue;
                }
                let scale = w * e.len * self.inv_gamma;
                for (i, &vi) in e.verts.iter().enumerate() {
                    let basis_i = if i == 0 { 1.0 - xi } else { xi };
                    let row_w = [e.normal.x * basis_i, e.normal.y * basis_i];
                    for c in 0..2 {
                        let row = 2 * vi + c;
                        let rw = scale * row_w[c];
                        if rw == 0.0 {
                            continue;
                        }
                        // ∂(u·n)/∂u over the edge vertices…
                        for (j, &vj) in e.verts.iter().enumerate() {
                            let basis_j = if j == 0 { 1.0 - xi } else { xi };
                            jac.add(row, 2 * vj, rw * basis_j * e.normal.x);
                            jac.add(row, 2 * vj + 1, rw * basis_j * e.normal.y);
                        }
                        // …minus γ ∂σ_nn/∂u over the triangle stencil.
                        for (k, &vk) in e.tri.iter().enumerate() {
                            jac.add(row, 2 * vk, -rw * self.gamma * e.dsigma[2 * k]);
                            jac.add(row, 2 * vk + 1, -rw * self.gamma * e.dsigma[2 * k + 1]);
                        }
                    }
                }
            }
        }
        for &(v, _) in &self.dirichlet {
            jac.set_row_identity(2 * v);
            jac.set_row_identity(2 * v + 1);
        }
        jac
    }

    /// One semismooth Newton solve for the state at `t_plus`, starting from
    /// `guess`.  Because the system is piecewise linear in `u⁺`, the cached
    /// factorisation is reused verbatim while the activity pattern persists.
    fn newton(
        &self,
        mut u: Vec<f64>,
        prev: &FEState,
        t_plus: f64,
        cache: &mut NewtonCache,
    ) -> Result<FEState> {
        let mut r0 = 0.0;
        let mut last_norm = f64::INFINITY;
        for iter in 0..=self.cfg.newton_max_iter {
            let r = self.residual(&u, prev, t_plus)?;
            let rn = norm(&r);
            if iter == 0 {
                r0 = rn;
            }
            last_norm = rn;
            if rn <= self.cfg.newton_tol * r0.max(1.0) {
                // Re-assert the constraints so snapshots carry the prescribed
                // values bit-exactly, independent of solver round-off.
                self.apply_dirichlet(&mut u, t_plus)?;
                let v = u
                    .iter()
                    .zip(&prev.u)
                    .map(|(up, um)| (up - um) / self.dt)
                    .collect();
                return Ok(FEState { u, v, t: t_plus });
            }
            if iter == self.cfg.newton_max_iter {
                break;
            }
            let pattern = self.active_pattern(&u);
            if cache.lu.is_none() || cache.pattern != pattern {
                let lu = self.jacobian(&pattern).factor()?;
                cache.pattern = pattern;
                cache.lu = Some(lu);
            }
            let delta = cache.lu.as_ref().unwrap().solve(&r)?;
            for (ui, di) in u.iter_mut().zip(&delta) {
                *ui -= di;
            }
        }
        Err(Error::NewtonDiverged { time: t_plus, residual: last_norm })
    }
}

/// Builds the backward-Euler residual and its semismooth Jacobian at
/// `state_guess`, for one step of size `dt` from `prev`.
///
/// The residual rows are `ρ/dt² M (u⁺ − u − dt v) + K u⁺ + contact(u⁺) − F`
/// on free DOFs and `u⁺ − u_d(prev.t + dt)` on Dirichlet DOFs; the Jacobian
/// carries identity rows there.
pub fn assemble_residual_and_jacobian(
    state_guess: &FEState,
    prev: &FEState,
    dt: f64,
    lame: LameParams,
    cfg: &FEConfig,
    mesh: &Mesh,
) -> Result<(Vec<f64>, BandMatrix)> {
    let op = StepOperator::new(mesh, lame, cfg, dt)?;
    let t_plus = prev.t + dt;
    let r = op.residual(&state_guess.u, prev, t_plus)?;
    let jac = op.jacobian(&op.active_pattern(&state_guess.u));
    Ok((r, jac))
}

/// Advances one backward-Euler step with semismooth Newton, starting from
/// the previous displacement with the new Dirichlet values imposed.
pub fn solve_time_step(
    prev: &FEState,
    dt: f64,
    lame: LameParams,
    cfg: &FEConfig,
    mesh: &Mesh,
) -> Result<FEState> {
    let op = StepOperator::new(mesh, lame, cfg, dt)?;
    let t_plus = prev.t + dt;
    let mut guess = prev.u.clone();
    op.apply_dirichlet(&mut guess, t_plus)?;
    op.newton(guess, prev, t_plus, &mut NewtonCache::empty())
}

/// Like [`solve_time_step`] but from an explicit initial Newton guess
/// (Dirichlet entries are overwritten with the prescribed values first).
pub fn solve_time_step_from_guess(
    guess: &[f64],
    prev: &FEState,
    dt: f64,
    lame: LameParams,
    cfg: &FEConfig,
    mesh: &Mesh,
) -> Result<FEState> {
    let op = StepOperator::new(mesh, lame, cfg, dt)?;
    let t_plus = prev.t + dt;
    let mut g = guess.to_vec();
    op.apply_dirichlet(&mut g, t_plus)?;
    op.newton(g, prev, t_plus, &mut NewtonCache::empty())
}

/// The full parameter-to-solution map: marches `n_steps` uniform steps from
/// zero initial data to the horizon, storing every time level.
pub fn solve_forward(
    p: &ParameterPoint,
    cfg: &FEConfig,
    mesh: &Arc<Mesh>,
) -> Result<ForwardSolution> {
    cfg.validate()?;
    let lame = lame_from_engineering(p)?;
    let dt = cfg.dt();
    let op = StepOperator::new(mesh, lame, cfg, dt)?;
    let mut cache = NewtonCache::empty();

    let mut snapshots = BTreeMap::new();
    let mut state = FEState::zero(mesh, 0.0);
    snapshots.insert(0, state.clone());
    for step in 1..=cfg.n_steps {
        let t_plus = if step == cfg.n_steps { cfg.t_end } else { step as f64 * dt };
        let mut guess = state.u.clone();
        op.apply_dirichlet(&mut guess, t_plus)?;
        state = op.newton(guess, &state, t_plus, &mut cache)?;
        snapshots.insert(step, state.clone());
    }
    Ok(ForwardSolution {
        parameters: *p,
        mesh: Arc::clone(mesh),
        dt,
        n_steps: cfg.n_steps,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, DomainSpec};

    #[test]
    fn lame_limit_and_hand_values() {
        // ν → 0 degenerates λ while μ → E/2.
        let l = lame_from_engineering(&ParameterPoint::new(1.0, 1e-12).unwrap()).unwrap();
        assert!(libm::fabs(l.lambda) < 1e-9);
        approx::assert_relative_eq!(l.mu, 0.5, epsilon = 1e-9);

        let l = lame_from_engineering(&ParameterPoint::new(1.0, 0.25).unwrap()).unwrap();
        approx::assert_relative_eq!(l.lambda, 0.4, epsilon = 1e-15);
        approx::assert_relative_eq!(l.mu, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn lame_fixture_and_inverse() {
        // Independent evaluation of both formulas at E = 7.513e10, ν = 0.3547:
        //   λ = Eν/((1+ν)(1−2ν)) = 67691764762.18429
        //   μ = E/(2(1+ν))       = 27729386580.054623
        let p = ParameterPoint::new(7.513e10, 0.3547).unwrap();
        let l = lame_from_engineering(&p).unwrap();
        approx::assert_relative_eq!(l.lambda, 67_691_764_762.184_29, max_relative = 1e-12);
        approx::assert_relative_eq!(l.mu, 27_729_386_580.054_623, max_relative = 1e-12);
        approx::assert_relative_eq!(young_modulus(&l), p.young, max_relative = 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ParameterPoint::new(-1.0, 0.3).is_err());
        assert!(ParameterPoint::new(1.0, 0.5).is_err());
        assert!(ParameterPoint::new(1.0, 0.0).is_err());
    }

    #[test]
    fn strain_symmetrises() {
        assert_eq!(strain(Mat2::ZERO), Mat2::ZERO);
        assert_eq!(strain(Mat2::IDENTITY), Mat2::IDENTITY);
        let g = Mat2::new(0.0, 1.0, 0.0, 0.0);
        assert_eq!(strain(g), Mat2::new(0.0, 0.5, 0.5, 0.0));
    }

    #[test]
    fn stress_hand_values() {
        let lame = LameParams { lambda: 1.0, mu: 1.0 };
        assert_eq!(stress(Mat2::ZERO, &lame), Mat2::ZERO);
        // Identity gradient: 2με + λ tr(ε) I = 2I + 2I = 4I.
        assert_eq!(stress(Mat2::IDENTITY, &lame), Mat2::new(4.0, 0.0, 0.0, 4.0));
        // Pure shear: trace-free, only the 2μ term survives.
        let g = Mat2::new(0.0, 1.0, 1.0, 0.0);
        assert_eq!(stress(g, &lame), Mat2::new(0.0, 2.0, 2.0, 0.0));
    }

    #[test]
    fn stress_is_linear() {
        let lame = LameParams { lambda: 0.7, mu: 1.3 };
        let g1 = Mat2::new(0.2, -0.4, 1.0, 0.5);
        let g2 = Mat2::new(-1.0, 0.3, 0.1, 0.9);
        let lhs = stress(g1 * 2.5 + g2 * (-0.75), &lame);
        let rhs = stress(g1, &lame) * 2.5 + stress(g2, &lame) * (-0.75);
        for (a, b) in [
            (lhs.xx, rhs.xx),
            (lhs.xy, rhs.xy),
            (lhs.yx, rhs.yx),
            (lhs.yy, rhs.yy),
        ] {
            approx::assert_relative_eq!(a, b, max_relative = 1e-13, epsilon = 1e-15);
        }
    }

    #[test]
    fn positive_part_cases() {
        assert_eq!(positive_part(3.5), 3.5);
        assert_eq!(positive_part(-2.0), 0.0);
        assert_eq!(positive_part(0.0), 0.0);
    }

    #[test]
    fn nitsche_residual_hand_cases() {
        // Separated: no contact, no stress.
        assert_eq!(nitsche_reformulation_residual(-1.0, 0.0, 1.0).unwrap(), 0.0);
        // Active contact: touching with compressive stress.
        assert_eq!(nitsche_reformulation_residual(0.0, -2.0, 1.0).unwrap(), 0.0);
        // Penetration: positive defect.
        assert_eq!(nitsche_reformulation_residual(1.0, 0.0, 1.0).unwrap(), 1.0);
        assert!(nitsche_reformulation_residual(0.0, 0.0, 0.0).is_err());
        assert!(nitsche_reformulation_residual(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn dirichlet_ramp_values() {
        assert_eq!(dirichlet_value(0.0, BoundaryTag::Right).unwrap(), Vec2::ZERO);
        assert_eq!(
            dirichlet_value(1.0, BoundaryTag::Right).unwrap(),
            Vec2::new(6.0, 0.0)
        );
        assert_eq!(dirichlet_value(0.5, BoundaryTag::Left).unwrap(), Vec2::ZERO);
        assert!(dirichlet_value(0.5, BoundaryTag::TopBottom).is_err());
    }

    #[test]
    fn zero_data_has_zero_residual() {
        let mesh = build_mesh(&DomainSpec::new(1.0, 1.0, 0.5).unwrap()).unwrap();
        let lame = LameParams { lambda: 1.0, mu: 1.0 };
        let cfg = FEConfig { dirichlet_scale: 0.0, ..FEConfig::default() };
        let prev = FEState::zero(&mesh, 0.0);
        let guess = FEState::zero(&mesh, cfg.dt());
        let (r, _) =
            assemble_residual_and_jacobian(&guess, &prev, cfg.dt(), lame, &cfg, &mesh).unwrap();
        assert!(norm(&r) == 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = FEConfig::default();
        cfg.n_steps = 3;
        assert!(cfg.validate().is_err());
        cfg = FEConfig { t_end: -1.0, ..FEConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(FEConfig::default().validate().is_ok());
    }

    #[test]
    fn parameter_box_grid_and_clamp() {
        let b = ParameterBox::default();
        let g = b.grid(3, 2).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0].young, 5e10);
        assert_eq!(g[5].young, 1e11);
        assert_eq!(g[5].poisson, 0.4);
        let clamped = b.clamp(ParameterPoint { young: 2e11, poisson: 0.1 });
        assert_eq!(clamped.young, 1e11);
        assert_eq!(clamped.poisson, 0.3);
        assert!(b.contains(&b.midpoint()));
    }
}
