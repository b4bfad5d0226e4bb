//! Parameter identification: minimize the surrogate data-misfit objective
//! over (E, ν) with gradient descent or BFGS, both driven by an
//! Armijo–Goldstein backtracking line search.
//!
//! The iteration runs in the network's normalized input coordinates, with
//! directions measured in units of the initial gradient norm.  Both choices
//! are internal: traces and results report physical parameters and raw
//! objective values.  The unit choice makes the iterate sequence invariant
//! under a common rescaling of the observations and keeps `initial_step = 1`
//! meaningful across problems whose objectives differ by orders of magnitude.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::elastic::{
    lame_from_engineering, solve_forward, FEConfig, ParameterBox, ParameterPoint,
};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::ingrad::backprop_to_input;
use crate::invalid_input;
use crate::network::DenseNetwork;
use crate::observe::{ObservationConfig, OBSERVATION_LEN};

/// Backtracking gives up after this many step halvings.
pub const MAX_LINE_SEARCH_TRIALS: usize = 60;

/// What the estimator minimizes: the surrogate misfit against an observed
/// record, plus an optional Tikhonov term measured against characteristic
/// parameter values.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectiveConfig {
    /// Regularization weight; zero disables the Tikhonov term.
    pub alpha: f64,
    /// Characteristic Young's modulus the regularizer compares against.
    pub e0: f64,
    /// Characteristic Poisson ratio the regularizer compares against.
    pub nu0: f64,
    /// Observed record the misfit is measured against.
    pub u_obs: Vec<f64>,
}

impl ObjectiveConfig {
    /// Unregularized objective for an observed record; characteristic values
    /// default to the box midpoint.
    pub fn new(u_obs: Vec<f64>, bounds: &ParameterBox) -> Result<Self> {
        let mid = bounds.midpoint();
        let cfg = ObjectiveConfig { alpha: 0.0, e0: mid.young, nu0: mid.poisson, u_obs };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid_input!("regularization weight must be finite and >= 0"));
        }
        if !(self.e0 > 0.0 && self.e0.is_finite()) || !(self.nu0 > 0.0 && self.nu0.is_finite()) {
            return Err(invalid_input!("characteristic parameter values must be positive"));
        }
        if self.u_obs.is_empty() {
            return Err(invalid_input!("observed record is empty"));
        }
        if let Some(bad) = self.u_obs.iter().find(|v| !v.is_finite()) {
            return Err(invalid_input!("observed record contains non-finite entry {bad}"));
        }
        Ok(())
    }

    /// (α/2)·[(E/E₀)² + (ν/ν₀)²] and its gradient with respect to (E, ν).
    fn regularizer(&self, p: &ParameterPoint) -> (f64, [f64; 2]) {
        if self.alpha == 0.0 {
            return (0.0, [0.0, 0.0]);
        }
        let re = p.young / self.e0;
        let rn = p.poisson / self.nu0;
        let value = 0.5 * self.alpha * (re * re + rn * rn);
        let grad = [self.alpha * re / self.e0, self.alpha * rn / self.nu0];
        (value, grad)
    }
}

/// Knobs for the descent loop and its line search.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EstimatorConfig {
    /// Stop once the gradient norm has dropped by this factor relative to
    /// the starting point.
    pub grad_reduction_tol: f64,
    /// Hard iteration cap.
    pub max_iter: usize,
    /// Sufficient-decrease constant in the Armijo–Goldstein test.
    pub armijo_c: f64,
    /// Step shrink factor between backtracking trials.
    pub armijo_shrink: f64,
    /// First step length the line search tries.
    pub initial_step: f64,
    /// Relative curvature safeguard: the BFGS update is skipped unless
    /// yᵀs ≥ curvature_eps·‖y‖·‖s‖.
    pub curvature_eps: f64,
    /// Project every iterate onto `bounds` instead of merely warning when
    /// one leaves it.
    pub clamp_to_box: bool,
    /// Admissible parameter rectangle.
    pub bounds: ParameterBox,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            grad_reduction_tol: 1e-8,
            max_iter: 500,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            initial_step: 1.0,
            curvature_eps: 1e-10,
            clamp_to_box: false,
            bounds: ParameterBox::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_reduction_tol > 0.0 && self.grad_reduction_tol < 1.0) {
            return Err(invalid_input!("gradient reduction tolerance must lie in (0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(invalid_input!("iteration cap must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(invalid_input!("Armijo constant must lie in (0, 1)"));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(invalid_input!("backtracking shrink factor must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(invalid_input!("initial step length must be positive"));
        }
        if !(self.curvature_eps > 0.0 && self.curvature_eps < 1.0) {
            return Err(invalid_input!("curvature safeguard must lie in (0, 1)"));
        }
        self.bounds.validate()
    }
}

/// Accepted step of a backtracking search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchOutcome {
    /// Accepted step length.
    pub eta: f64,
    /// Objective value at the accepted point.
    pub value: f64,
    /// Number of candidate steps evaluated, accepted one included.
    pub trials: usize,
}

/// Armijo–Goldstein backtracking for the update convention `p ← p − η d`.
///
/// `d` must satisfy `gᵀd > 0` (it is *subtracted*, so positive slope means
/// descent); starting from `initial_step`, the step shrinks by
/// `armijo_shrink` until `f(p − ηd) ≤ f(p) − armijo_c·η·gᵀd` with a finite
/// value, for at most [`MAX_LINE_SEARCH_TRIALS`] candidates.  `f_at_p` must
/// be the objective value at `p`; the accepted value is returned so callers
/// never re-evaluate.
pub fn armijo_goldstein_search<F>(
    mut f: F,
    p: [f64; 2],
    d: [f64; 2],
    g: [f64; 2],
    f_at_p: f64,
    cfg: &EstimatorConfig,
) -> Result<LineSearchOutcome>
where
    F: FnMut([f64; 2]) -> Result<f64>,
{
    let slope = g[0] * d[0] + g[1] * d[1];
    if !(slope > 0.0 && slope.is_finite()) {
        return Err(Error::NotDescentDirection);
    }
    let mut eta = cfg.initial_step;
    for trial in 1..=MAX_LINE_SEARCH_TRIALS {
        let candidate = [p[0] - eta * d[0], p[1] - eta * d[1]];
        let value = f(candidate)?;
        if value.is_finite() && value <= f_at_p - cfg.armijo_c * eta * slope {
            return Ok(LineSearchOutcome { eta, value, trials: trial });
        }
        eta *= cfg.armijo_shrink;
    }
    Err(Error::LineSearchFailed { trials: MAX_LINE_SEARCH_TRIALS })
}

/// One accepted iterate of a descent run.
///
/// `parameters` and `objective` are physical/raw quantities; `grad_norm` and
/// `direction` live in the normalized input coordinates the iteration runs
/// in, matching the relative stopping rule.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterateRecord {
    /// 0 for the starting point, then one per accepted step.
    pub iteration: usize,
    pub parameters: ParameterPoint,
    pub objective: f64,
    /// Norm of the objective gradient in normalized input coordinates.
    pub grad_norm: f64,
    /// Accepted step length (zero on the starting record).
    pub eta: f64,
    /// Search direction the step subtracted, in normalized coordinates
    /// scaled by the initial gradient norm (zero on the starting record).
    pub direction: [f64; 2],
    /// Line-search candidates evaluated for this step.
    pub ls_trials: usize,
    /// Whether this iterate lies outside the admissible box.
    pub outside_box: bool,
    /// Smallest eigenvalue of the BFGS metric after this step's update;
    /// `None` for gradient descent and for the starting record.
    pub bfgs_min_eigenvalue: Option<f64>,
}

/// Full history of a descent run.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterateTrace {
    /// Starting point first, then one record per accepted step.
    pub records: Vec<IterateRecord>,
    /// Human-readable anomalies, e.g. iterates leaving the admissible box.
    pub warnings: Vec<String>,
}

impl IterateTrace {
    /// Objective values in iteration order.
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Gradient norms in iteration order.
    pub fn grad_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.grad_norm).collect()
    }
}

/// Why a descent run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    /// Gradient norm fell below `grad_reduction_tol` times its starting value.
    Converged,
    /// Iteration cap reached before the gradient test was met.
    MaxIterations,
    /// No admissible step length after the allowed number of halvings.
    LineSearchFailed { trials: usize },
}

/// Result of a descent run, always carrying the full trace.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimationRun {
    /// Final iterate in physical units.
    pub parameters: ParameterPoint,
    /// Objective value at the final iterate.
    pub objective: f64,
    /// Gradient norm at the final iterate, normalized coordinates.
    pub grad_norm: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    pub reason: StopReason,
    pub trace: IterateTrace,
}

impl EstimationRun {
    pub fn converged(&self) -> bool {
        self.reason == StopReason::Converged
    }
}

/// Surrogate objective: ½‖N(p) − u_obs‖² plus the regularizer.
///
/// Evaluates anywhere the network does, including outside the admissible
/// box; the descent loop relies on that when probing trial steps.
pub fn objective(net: &DenseNetwork, cfg: &ObjectiveConfig, p: &ParameterPoint) -> Result<f64> {
    Ok(objective_gradient(net, cfg, p)?.0)
}

/// Surrogate objective value together with its gradient in physical (E, ν)
/// coordinates; one shared forward/backward pass.
pub fn objective_gradient(
    net: &DenseNetwork,
    cfg: &ObjectiveConfig,
    p: &ParameterPoint,
) -> Result<(f64, [f64; 2])> {
    cfg.validate()?;
    let misfit = backprop_to_input(net, p, &cfg.u_obs)?;
    let (reg_value, reg_grad) = cfg.regularizer(p);
    let value = misfit.value + reg_value;
    let grad = [misfit.gradient[0] + reg_grad[0], misfit.gradient[1] + reg_grad[1]];
    if !value.is_finite() || !grad[0].is_finite() || !grad[1].is_finite() {
        return Err(Error::NonFinite { context: "objective evaluation".into() });
    }
    Ok((value, grad))
}

/// Reference objective through the forward solver: ½‖C(S^h(p)) − u_obs‖².
///
/// One full time-dependent solve per call; no regularizer, matching how
/// surface comparisons and truth checks are defined.
pub fn fe_objective(
    p: &ParameterPoint,
    fe: &FEConfig,
    obs: &ObservationConfig,
    mesh: &Arc<Mesh>,
    u_obs: &[f64],
) -> Result<f64> {
    if u_obs.len() != OBSERVATION_LEN {
        return Err(Error::ShapeMismatch {
            context: "observed record",
            expected: OBSERVATION_LEN,
            got: u_obs.len(),
        });
    }
    let lame = lame_from_engineering(p)?;
    let solution = solve_forward(p, fe, mesh)?;
    let prediction = crate::observe::observe(&solution, obs, &lame)?;
    let mut misfit = 0.0;
    for (a, b) in prediction.as_slice().iter().zip(u_obs) {
        let r = a - b;
        misfit += r * r;
    }
    Ok(0.5 * misfit)
}

/// Gradient descent (direction = gradient) under the shared descent loop.
pub fn gradient_descent(
    net: &DenseNetwork,
    obj: &ObjectiveConfig,
    cfg: &EstimatorConfig,
    p0: &ParameterPoint,
) -> Result<EstimationRun> {
    minimize(net, obj, cfg, p0, false)
}

/// BFGS: directions from an inverse-curvature metric built from accepted
/// steps, under the same descent loop and line search.
pub fn bfgs(
    net: &DenseNetwork,
    obj: &ObjectiveConfig,
    cfg: &EstimatorConfig,
    p0: &ParameterPoint,
) -> Result<EstimationRun> {
    minimize(net, obj, cfg, p0, true)
}

/// Symmetric 2×2 matrix in row-major `[a, b; b, c]` storage.
#[derive(Clone, Copy, Debug)]
struct Sym2 {
    a: f64,
    b: f64,
    c: f64,
}

impl Sym2 {
    const IDENTITY: Sym2 = Sym2 { a: 1.0, b: 0.0, c: 1.0 };

    fn mul(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.b * v[0] + self.c * v[1]]
    }

    /// Solve `self · x = v`; the metric stays positive definite under the
    /// curvature guard, so a vanishing determinant is a program error.
    fn solve(&self, v: [f64; 2]) -> Result<[f64; 2]> {
        let det = self.a * self.c - self.b * self.b;
        if det.abs() < f64::MIN_POSITIVE || !det.is_finite() {
            return Err(Error::SingularMatrix { row: 0 });
        }
        Ok([(self.c * v[0] - self.b * v[1]) / det, (self.a * v[1] - self.b * v[0]) / det])
    }

    fn min_eigenvalue(&self) -> f64 {
        let mean = 0.5 * (self.a + self.c);
        let radius = libm::hypot(0.5 * (self.a - self.c), self.b);
        mean - radius
    }
}

/// Shared descent loop behind [`gradient_descent`] and [`bfgs`].
///
/// Iterates in normalized input coordinates; directions carry an extra
/// 1/‖g₀‖ so a unit step is sized by the problem itself.  The BFGS metric
/// is built from gradients in those same units, keeping the whole iterate
/// sequence invariant under a common rescaling of observations and network
/// outputs.
fn minimize(
    net: &DenseNetwork,
    obj: &ObjectiveConfig,
    cfg: &EstimatorConfig,
    p0: &ParameterPoint,
    use_bfgs: bool,
) -> Result<EstimationRun> {
    net.validate()?;
    obj.validate()?;
    cfg.validate()?;
    if obj.u_obs.len() != net.output_dim() {
        return Err(Error::ShapeMismatch {
            context: "observed record vs network output",
            expected: net.output_dim(),
            got: obj.u_obs.len(),
        });
    }
    if !(p0.young.is_finite() && p0.poisson.is_finite()) {
        return Err(invalid_input!("starting point must be finite"));
    }

    let norm = net.norm.clone();
    let project = |q: [f64; 2]| -> [f64; 2] {
        if cfg.clamp_to_box {
            let clamped = cfg.bounds.clamp(point_from(norm.denormalize_input(q)));
            norm.normalize_input([clamped.young, clamped.poisson])
        } else {
            q
        }
    };
    // Objective as a function of the normalized coordinates the loop moves in.
    let eval = |q: [f64; 2]| -> Result<f64> {
        objective(net, obj, &point_from(norm.denormalize_input(q)))
    };
    // Value and gradient; the chain rule through the normalization map is
    // one factor of input_scale per component.
    let eval_grad = |q: [f64; 2]| -> Result<(f64, [f64; 2])> {
        let (value, g_phys) = objective_gradient(net, obj, &point_from(norm.denormalize_input(q)))?;
        Ok((value, [g_phys[0] * norm.input_scale[0], g_phys[1] * norm.input_scale[1]]))
    };

    let mut q = project(norm.normalize_input([p0.young, p0.poisson]));
    let (mut value, mut grad) = eval_grad(q)?;
    let grad_scale = libm::hypot(grad[0], grad[1]);

    let mut trace = IterateTrace::default();
    let push = |trace: &mut IterateTrace, record: IterateRecord| {
        if record.outside_box {
            trace.warnings.push(format!(
                "iterate {} left the admissible box: E = {:e}, nu = {}",
                record.iteration, record.parameters.young, record.parameters.poisson
            ));
        }
        trace.records.push(record);
    };
    let record_of = |iteration: usize,
                     q: [f64; 2],
                     value: f64,
                     grad: [f64; 2],
                     eta: f64,
                     direction: [f64; 2],
                     ls_trials: usize,
                     eig: Option<f64>| {
        let parameters = point_from(norm.denormalize_input(q));
        IterateRecord {
            iteration,
            parameters,
            objective: value,
            grad_norm: libm::hypot(grad[0], grad[1]),
            eta,
            direction,
            ls_trials,
            outside_box: !cfg.bounds.contains(&parameters),
            bfgs_min_eigenvalue: eig,
        }
    };

    push(&mut trace, record_of(0, q, value, grad, 0.0, [0.0; 2], 0, None));

    let finish = |trace: IterateTrace, q: [f64; 2], value: f64, grad: [f64; 2], iterations, reason| {
        Ok(EstimationRun {
            parameters: point_from(norm.denormalize_input(q)),
            objective: value,
            grad_norm: libm::hypot(grad[0], grad[1]),
            iterations,
            reason,
            trace,
        })
    };

    // A critical starting point (observed record exactly reproduced, or flat
    // regularized landscape) is already a minimizer.
    if grad_scale == 0.0 {
        return finish(trace, q, value, grad, 0, StopReason::Converged);
    }
    let target = cfg.grad_reduction_tol * grad_scale;

    let mut metric = Sym2::IDENTITY;
    // Gradient in initial-gradient units; the metric's secant pairs use the
    // same units so its eigenvalues are dimensionless.
    let mut scaled_grad = [grad[0] / grad_scale, grad[1] / grad_scale];

    for iteration in 1..=cfg.max_iter {
        let direction = if use_bfgs { metric.solve(scaled_grad)? } else { scaled_grad };
        let search = armijo_goldstein_search(
            |candidate| eval(project(candidate)),
            q,
            direction,
            grad,
            value,
            cfg,
        );
        let step = match search {
            Ok(step) => step,
            Err(Error::LineSearchFailed { trials }) => {
                return finish(trace, q, value, grad, iteration - 1, StopReason::LineSearchFailed { trials });
            }
            Err(e) => return Err(e),
        };
        let q_next = project([q[0] - step.eta * direction[0], q[1] - step.eta * direction[1]]);
        let (value_next, grad_next) = eval_grad(q_next)?;
        let scaled_next = [grad_next[0] / grad_scale, grad_next[1] / grad_scale];

        let eig = if use_bfgs {
            let s = [q_next[0] - q[0], q_next[1] - q[1]];
            let y = [scaled_next[0] - scaled_grad[0], scaled_next[1] - scaled_grad[1]];
            let ys = y[0] * s[0] + y[1] * s[1];
            let guard = cfg.curvature_eps * libm::hypot(y[0], y[1]) * libm::hypot(s[0], s[1]);
            if ys >= guard && ys > 0.0 {
                let bs = metric.mul(s);
                let sbs = s[0] * bs[0] + s[1] * bs[1];
                metric = Sym2 {
                    a: metric.a + y[0] * y[0] / ys - bs[0] * bs[0] / sbs,
                    b: metric.b + y[0] * y[1] / ys - bs[0] * bs[1] / sbs,
                    c: metric.c + y[1] * y[1] / ys - bs[1] * bs[1] / sbs,
                };
            }
            Some(metric.min_eigenvalue())
        } else {
            None
        };

        q = q_next;
        value = step.value;
        grad = grad_next;
        scaled_grad = scaled_next;
        debug_assert_eq!(value, value_next, "line search and gradient evaluation disagree");

        push(
            &mut trace,
            record_of(iteration, q, value, grad, step.eta, direction, step.trials, eig),
        );

        if libm::hypot(grad[0], grad[1]) <= target {
            return finish(trace, q, value, grad, iteration, StopReason::Converged);
        }
    }
    finish(trace, q, value, grad, cfg.max_iter, StopReason::MaxIterations)
}

fn point_from(raw: [f64; 2]) -> ParameterPoint {
    ParameterPoint { young: raw[0], poisson: raw[1] }
}

/// Objective values tabulated on a regular parameter grid.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectiveSurface {
    /// Grid levels along the Young's modulus axis, ascending.
    pub young: Vec<f64>,
    /// Grid levels along the Poisson ratio axis, ascending.
    pub poisson: Vec<f64>,
    /// Values in young-major order: `values[i * poisson.len() + j]`.
    pub values: Vec<f64>,
}

impl ObjectiveSurface {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.poisson.len() + j]
    }

    /// Grid indices of the smallest tabulated value.
    pub fn min_cell(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_value = f64::INFINITY;
        for i in 0..self.young.len() {
            for j in 0..self.poisson.len() {
                let v = self.value(i, j);
                if v < best_value {
                    best_value = v;
                    best = (i, j);
                }
            }
        }
        best
    }

    fn from_grid<F>(
        bounds: &ParameterBox,
        n_young: usize,
        n_poisson: usize,
        mut f: F,
    ) -> Result<Self>
    where
        F: FnMut(&ParameterPoint) -> Result<f64>,
    {
        let points = bounds.grid(n_young, n_poisson)?;
        let mut values = Vec::with_capacity(points.len());
        for p in &points {
            values.push(f(p)?);
        }
        let young = points.iter().step_by(n_poisson).map(|p| p.young).collect();
        let poisson = points[..n_poisson].iter().map(|p| p.poisson).collect();
        Ok(ObjectiveSurface { young, poisson, values })
    }
}

/// Tabulate the surrogate objective on an `n_young × n_poisson` grid.
pub fn surrogate_surface(
    net: &DenseNetwork,
    obj: &ObjectiveConfig,
    bounds: &ParameterBox,
    n_young: usize,
    n_poisson: usize,
) -> Result<ObjectiveSurface> {
    ObjectiveSurface::from_grid(bounds, n_young, n_poisson, |p| objective(net, obj, p))
}

/// Tabulate the forward-solver objective on an `n_young × n_poisson` grid.
/// One full forward solve per grid point.
pub fn fe_surface(
    fe: &FEConfig,
    obs: &ObservationConfig,
    mesh: &Arc<Mesh>,
    u_obs: &[f64],
    bounds: &ParameterBox,
    n_young: usize,
    n_poisson: usize,
) -> Result<ObjectiveSurface> {
    ObjectiveSurface::from_grid(bounds, n_young, n_poisson, |p| {
        fe_objective(p, fe, obs, mesh, u_obs)
    })
}
