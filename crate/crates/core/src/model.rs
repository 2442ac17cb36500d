//! Model parameters, the double-well potential, cost terms, the Hamiltonian
//! diagnostic and the discrete stable states.

use crate::error::{check_len, Error, Result};
use crate::grid::{d2_into, norm_l2, seminorm_h1, Field, PathPair, SpaceTimeGrid};
use crate::linalg::solve_tridiagonal;

/// Physical parameters of the controlled Ginzburg-Landau problem.
///
/// The horizon `T` is carried by [`SpaceTimeGrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Diffusivity `delta`.
    pub delta: f64,
    /// Terminal penalty weight `K`.
    pub penalty: f64,
    /// Optional threshold `s > 1` beyond which the quartic is blended to
    /// linear growth.
    pub cutoff: Option<f64>,
    /// Optional noise strength used only for probability reporting.
    pub epsilon: Option<f64>,
}

impl ModelParams {
    pub fn new(delta: f64, penalty: f64) -> Result<Self> {
        let p = ModelParams {
            delta,
            penalty,
            cutoff: None,
            epsilon: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_cutoff(mut self, s: f64) -> Result<Self> {
        self.cutoff = Some(s);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Argument(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::Argument(format!("K must be positive, got {}", self.penalty)));
        }
        if let Some(s) = self.cutoff {
            if !(s > 1.0 && s.is_finite()) {
                return Err(Error::Argument(format!("cutoff s must exceed 1, got {s}")));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Argument(format!("epsilon must be positive, got {e}")));
            }
        }
        Ok(())
    }

    pub fn potential(&self) -> Potential {
        Potential { cutoff: self.cutoff }
    }
}

/// The double well `V(phi) = (phi^2 - 1)^2 / 4`, optionally modified beyond
/// `|phi| > s`.
///
/// The modification keeps `V` twice continuously differentiable: on
/// `[s, s + 1]` the second derivative decreases linearly to zero, after which
/// `V` grows linearly. `V` stays even.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Potential {
    pub cutoff: Option<f64>,
}

impl Potential {
    /// Returns `V^(order)(phi)` for `order` in `0..=3`.
    pub fn eval(&self, phi: f64, order: u8) -> Result<f64> {
        if order > 3 {
            return Err(Error::Argument(format!(
                "potential derivative order {order} not in 0..=3"
            )));
        }
        Ok(self.derivs(phi)[order as usize])
    }

    #[inline]
    pub fn v1(&self, phi: f64) -> f64 {
        match self.cutoff {
            Some(s) if phi.abs() > s => self.derivs(phi)[1],
            _ => phi * phi * phi - phi,
        }
    }

    #[inline]
    pub fn v2(&self, phi: f64) -> f64 {
        match self.cutoff {
            Some(s) if phi.abs() > s => self.derivs(phi)[2],
            _ => 3.0 * phi * phi - 1.0,
        }
    }

    #[inline]
    pub fn v3(&self, phi: f64) -> f64 {
        match self.cutoff {
            Some(s) if phi.abs() > s => self.derivs(phi)[3],
            _ => 6.0 * phi,
        }
    }

    fn raw(phi: f64) -> [f64; 4] {
        let q = phi * phi - 1.0;
        [0.25 * q * q, phi * q, 3.0 * phi * phi - 1.0, 6.0 * phi]
    }

    fn derivs(&self, phi: f64) -> [f64; 4] {
        let s = match self.cutoff {
            Some(s) if phi.abs() > s => s,
            _ => return Self::raw(phi),
        };
        let sign = phi.signum();
        let u = phi.abs() - s;
        let [v0, v1, a, _] = Self::raw(s);
        let d = if u <= 1.0 {
            [
                v0 + v1 * u + a * (0.5 * u * u - u * u * u / 6.0),
                v1 + a * (u - 0.5 * u * u),
                a * (1.0 - u),
                -a,
            ]
        } else {
            let slope = v1 + 0.5 * a;
            [v0 + v1 + a / 3.0 + slope * (u - 1.0), slope, 0.0, 0.0]
        };
        // Even extension: odd derivatives flip sign.
        [d[0], sign * d[1], d[2], sign * d[3]]
    }
}

/// `K * ||phi_T - target||^2` in the discrete L2 norm.
pub fn final_cost(phi_t: &[f64], target: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Result<f64> {
    g.check(target)?;
    let d: Vec<f64> = phi_t.iter().zip(target).map(|(a, b)| a - b).collect();
    check_len("final state vs target", target.len(), phi_t.len())?;
    let n = norm_l2(&d, g)?;
    Ok(p.penalty * n * n)
}

/// `||alpha||^2 / 2` in the discrete L2 norm.
pub fn running_cost(alpha: &[f64], g: &SpaceTimeGrid) -> Result<f64> {
    let n = norm_l2(alpha, g)?;
    Ok(0.5 * n * n)
}

/// Discrete Hamiltonian
/// `delta dx (D2 phi, lambda) - dx (lambda, V'(phi)) / delta - ||lambda||^2 / 2`.
pub fn hamiltonian(lambda: &[f64], phi: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Result<f64> {
    g.check(lambda)?;
    g.check(phi)?;
    let dx = g.dx();
    let pot = p.potential();
    let mut lap = vec![0.0; phi.len()];
    d2_into(phi, dx, &mut lap);
    let mut diffusion = 0.0;
    let mut reaction = 0.0;
    let mut quad = 0.0;
    for i in 0..phi.len() {
        diffusion += lap[i] * lambda[i];
        reaction += lambda[i] * pot.v1(phi[i]);
        quad += lambda[i] * lambda[i];
    }
    Ok(p.delta * dx * diffusion - dx * reaction / p.delta - 0.5 * dx * quad)
}

/// The pair of symmetric discrete stable equilibria.
#[derive(Debug, Clone, PartialEq)]
pub struct StablePair {
    pub phi_plus: Field,
    pub phi_minus: Field,
    /// Discrete L2 norm of the equilibrium residual of `phi_plus`.
    pub residual: f64,
}

/// Equilibrium residual `delta D2 xi - V'(xi) / delta`.
pub fn equilibrium_residual(xi: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Result<Field> {
    g.check(xi)?;
    let pot = p.potential();
    let mut r = vec![0.0; xi.len()];
    d2_into(xi, g.dx(), &mut r);
    for (ri, &x) in r.iter_mut().zip(xi) {
        *ri = p.delta * *ri - pot.v1(x) / p.delta;
    }
    Ok(Field(r))
}

/// Ginzburg-Landau energy `dx sum (delta/2) |forward slope|^2 + V(xi_i) / delta`.
pub fn energy(xi: &[f64], p: &ModelParams, g: &SpaceTimeGrid) -> Result<f64> {
    let h1 = seminorm_h1(xi, g)?;
    let pot = p.potential();
    let bulk: f64 = xi.iter().map(|&x| pot.derivs(x)[0]).sum::<f64>() * g.dx() / p.delta;
    Ok(0.5 * p.delta * h1 * h1 + bulk)
}

const STABLE_NEWTON_MAX: usize = 100;
const GRADIENT_FLOW_MAX: usize = 5_000_000;

/// Computes the positive discrete equilibrium `xi_+` and its mirror image.
///
/// Damped Newton on the equilibrium residual from a two-sided `tanh` profile;
/// falls back to explicit gradient flow when Newton fails.
pub fn stable_states(p: &ModelParams, g: &SpaceTimeGrid, tol: f64) -> Result<StablePair> {
    p.validate()?;
    if !(tol > 0.0) {
        return Err(Error::Argument("equilibrium tolerance must be positive".into()));
    }
    let w = std::f64::consts::SQRT_2 * p.delta;
    let seed = g.sample(|x| (x / w).tanh() * ((1.0 - x) / w).tanh());
    let plus = match newton_equilibrium(seed.clone(), p, g, tol) {
        Ok(xi) if xi.iter().all(|&v| v >= 0.0) && xi.max_abs() > 0.5 => xi,
        _ => gradient_flow_equilibrium(seed, p, g, tol)?,
    };
    let residual = norm_l2(&equilibrium_residual(&plus, p, g)?, g)?;
    Ok(StablePair {
        phi_minus: plus.scaled(-1.0),
        phi_plus: plus,
        residual,
    })
}

fn newton_equilibrium(mut xi: Field, p: &ModelParams, g: &SpaceTimeGrid, tol: f64) -> Result<Field> {
    let m = xi.len();
    let pot = p.potential();
    let c = p.delta / (g.dx() * g.dx());
    let mut r = equilibrium_residual(&xi, p, g)?;
    let mut rn = norm_l2(&r, g)?;
    let mut history = vec![rn];
    for _ in 0..STABLE_NEWTON_MAX {
        if rn <= tol {
            return Ok(xi);
        }
        let diag: Vec<f64> = xi.iter().map(|&x| -2.0 * c - pot.v2(x) / p.delta).collect();
        let off = vec![c; m];
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = solve_tridiagonal(&off, &diag, &off, &rhs)?;
        let mut lambda = 1.0;
        loop {
            let mut trial = xi.clone();
            trial.axpy(lambda, &step);
            let tr = equilibrium_residual(&trial, p, g)?;
            let tn = norm_l2(&tr, g)?;
            if tn < rn || lambda < 1e-4 {
                xi = trial;
                r = tr;
                rn = tn;
                break;
            }
            lambda *= 0.5;
        }
        history.push(rn);
    }
    if rn <= tol {
        return Ok(xi);
    }
    Err(Error::NonConvergence {
        method: "equilibrium Newton",
        iterations: STABLE_NEWTON_MAX,
        residual: rn,
        history,
    })
}

fn gradient_flow_equilibrium(mut xi: Field, p: &ModelParams, g: &SpaceTimeGrid, tol: f64) -> Result<Field> {
    let dx = g.dx();
    // Explicit step bounded by both the diffusion and the reaction stiffness.
    let tau = (dx * dx / (4.0 * p.delta)).min(0.5 * p.delta);
    let mut rn = f64::INFINITY;
    for _ in 0..GRADIENT_FLOW_MAX {
        let r = equilibrium_residual(&xi, p, g)?;
        rn = norm_l2(&r, g)?;
        if rn <= tol {
            return Ok(xi);
        }
        xi.axpy(tau, &r);
    }
    Err(Error::NonConvergence {
        method: "equilibrium gradient flow",
        iterations: GRADIENT_FLOW_MAX,
        residual: rn,
        history: vec![rn],
    })
}

/// Running-cost part of the forward value: `dt dx sum_{n=1}^{N} |eta^n|^2 / 2`.
pub fn action_value(path: &PathPair, g: &SpaceTimeGrid) -> Result<f64> {
    path.check(g)?;
    let s: f64 = path.eta[1..].iter().map(|e| e.iter().map(|v| v * v).sum::<f64>()).sum();
    Ok(0.5 * g.dt() * g.dx() * s)
}

/// Large-deviation estimate `exp(-action / epsilon)`.
pub fn transition_probability(action: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Argument(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(action >= 0.0) {
        return Err(Error::Argument(format!("action must be nonnegative, got {action}")));
    }
    Ok((-action / epsilon).exp())
}
