//! Deterministic comparison bounds: `Ψ`, the water-filling minimum `Ω`, the
//! comparison ODE `w' = -Ω(w)` and the integrability test for `1/Ω`.
//!
//! Each site speed is clipped to `ψ̃ = max(ψ, 0)`. Since `ψ` is convex with
//! `ψ(0) = ψ(1) = 0`, this is zero on `[0, 1]` and `ψ` beyond, so `ψ̃` is
//! convex and nonnegative and `Ω` maps `[0, ∞)` to `[0, ∞)`.

use std::sync::OnceLock;

use serde::Serialize;

use crate::criteria::{comes_down, loglog_fit, Evidence, Outcome, Verdict};
use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::quadrature::Quadrature;
use crate::rates::psi;
use crate::scalar::Real;

const BISECTION_CAP: usize = 400;

/// Speed of one site.
#[derive(Debug)]
pub enum SiteSpeed<R> {
    Zero,
    /// `ψ(q) = c q(q-1)/2`.
    Kingman { c: R },
    General(GeneralSpeed<R>),
}

/// `ψ` by quadrature, with `ψ'` from central differences. Geometric tables
/// of both are built on first use so that repeated inversions of `ψ'` are
/// cheap: a near table up to `q_max` and, only when larger arguments show
/// up, a far table up to [`FAR_LIMIT`].
#[derive(Debug)]
pub struct GeneralSpeed<R> {
    measure: MeasureSpec<R>,
    q_max: R,
    ratio: R,
    near: OnceLock<Result<SpeedTable<R>, String>>,
    far: OnceLock<Result<SpeedTable<R>, String>>,
}

/// Largest argument covered by the speed tables.
pub const FAR_LIMIT: f64 = 1e12;

#[derive(Debug)]
struct SpeedTable<R> {
    q: Vec<R>,
    value: Vec<R>,
    deriv: Vec<R>,
}

impl<R: Real> SpeedTable<R> {
    fn end(&self) -> R {
        *self.q.last().unwrap()
    }

    fn locate(&self, q: R) -> Option<usize> {
        if q < self.q[0] || q > self.end() {
            return None;
        }
        Some(self.q.partition_point(|&x| x <= q).clamp(1, self.q.len() - 1) - 1)
    }

    fn deriv_at(&self, j: usize, q: R) -> R {
        let s = (q - self.q[j]) / (self.q[j + 1] - self.q[j]);
        self.deriv[j] + s * (self.deriv[j + 1] - self.deriv[j])
    }

    /// Integral of the interpolated derivative from the left knot.
    fn value_at(&self, j: usize, q: R) -> R {
        self.value[j] + (q - self.q[j]) * (self.deriv[j] + self.deriv_at(j, q)) * R::lit(0.5)
    }

    /// Smallest tabulated `q` with interpolated derivative `>= mu`, if in range.
    fn inverse(&self, mu: R) -> Option<R> {
        if mu > *self.deriv.last().unwrap() {
            return None;
        }
        let j = self.deriv.partition_point(|&d| d < mu);
        if j == 0 {
            return Some(self.q[0]);
        }
        let (d0, d1) = (self.deriv[j - 1], self.deriv[j]);
        let s = if d1 > d0 { (mu - d0) / (d1 - d0) } else { R::one() };
        Some(self.q[j - 1] + s * (self.q[j] - self.q[j - 1]))
    }
}

impl<R: Real> GeneralSpeed<R> {
    fn psi(&self, q: R) -> Result<R> {
        psi(&self.measure, q)
    }

    fn central_difference(&self, q: R) -> Result<R> {
        let h = R::lit(1e-4) * q.max(R::one());
        Ok((self.psi(q + h)? - self.psi(q - h)?) / (h + h))
    }

    fn build(&self, start: R, end: R) -> Result<SpeedTable<R>, String> {
        let mut q = Vec::new();
        let mut cur = start;
        while cur < end {
            q.push(cur);
            cur = cur * self.ratio;
        }
        q.push(cur);
        let value: Result<Vec<R>> = q.iter().map(|&x| self.psi(x)).collect();
        let deriv: Result<Vec<R>> = q.iter().map(|&x| self.central_difference(x)).collect();
        match (value, deriv) {
            (Ok(value), Ok(mut deriv)) => {
                // ψ is convex; keep the differenced slopes monotone
                for i in 1..deriv.len() {
                    deriv[i] = deriv[i].max(deriv[i - 1]);
                }
                Ok(SpeedTable { q, value, deriv })
            }
            (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
        }
    }

    fn near(&self) -> Result<&SpeedTable<R>> {
        self.near
            .get_or_init(|| self.build(R::one(), self.q_max * self.ratio))
            .as_ref()
            .map_err(|e| Error::PreconditionViolated(format!("speed table: {e}")))
    }

    fn far(&self) -> Result<&SpeedTable<R>> {
        let start = self.near()?.end();
        self.far
            .get_or_init(|| self.build(start, R::lit(FAR_LIMIT).max(start)))
            .as_ref()
            .map_err(|e| Error::PreconditionViolated(format!("speed table: {e}")))
    }

    fn segment(&self, q: R) -> Result<Option<(&SpeedTable<R>, usize)>> {
        let near = self.near()?;
        if let Some(j) = near.locate(q) {
            return Ok(Some((near, j)));
        }
        if q > near.end() && q <= R::lit(FAR_LIMIT) {
            let far = self.far()?;
            return Ok(far.locate(q).map(|j| (far, j)));
        }
        Ok(None)
    }

    fn deriv(&self, q: R) -> Result<R> {
        match self.segment(q)? {
            Some((t, j)) => Ok(t.deriv_at(j, q)),
            None => self.central_difference(q),
        }
    }

    fn value(&self, q: R) -> Result<R> {
        match self.segment(q)? {
            Some((t, j)) => Ok(t.value_at(j, q)),
            None => self.psi(q),
        }
    }

    fn inverse_deriv(&self, mu: R) -> Result<R> {
        let near = self.near()?;
        if let Some(q) = near.inverse(mu) {
            return Ok(q);
        }
        let far = self.far()?;
        if let Some(q) = far.inverse(mu) {
            return Ok(q);
        }
        let mut lo = far.end();
        let mut hi = lo * R::lit(2.0);
        let mut guard = 0;
        while self.central_difference(hi)? < mu {
            lo = hi;
            hi = hi * R::lit(2.0);
            guard += 1;
            if guard > 200 {
                return Err(Error::ConvergenceFailure(guard));
            }
        }
        for _ in 0..BISECTION_CAP {
            let mid = R::lit(0.5) * (lo + hi);
            if self.central_difference(mid)? < mu {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= R::epsilon() * R::lit(4.0) * hi {
                return Ok(hi);
            }
        }
        Err(Error::ConvergenceFailure(BISECTION_CAP))
    }
}

impl<R: Real> SiteSpeed<R> {
    /// Builds the speed of a coalescence measure; `q_max` bounds the tabulated range.
    pub fn new(measure: &MeasureSpec<R>, q_max: R) -> Self {
        if measure.is_zero() {
            SiteSpeed::Zero
        } else if measure.positive_mass() == R::zero() {
            SiteSpeed::Kingman { c: measure.atom_zero() }
        } else {
            SiteSpeed::General(GeneralSpeed {
                measure: measure.clone(),
                q_max: q_max.max(R::lit(2.0)),
                ratio: R::lit(1.01),
                near: OnceLock::new(),
                far: OnceLock::new(),
            })
        }
    }

    /// Unclipped `ψ(q)`.
    pub fn raw(&self, q: R) -> Result<R> {
        match self {
            SiteSpeed::Zero => Ok(R::zero()),
            SiteSpeed::Kingman { c } => Ok(*c * q * (q - R::one()) * R::lit(0.5)),
            SiteSpeed::General(g) => g.psi(q),
        }
    }

    /// `ψ̃(q) = max(ψ(q), 0)`.
    pub fn clipped(&self, q: R) -> Result<R> {
        if q <= R::one() {
            return Ok(R::zero());
        }
        match self {
            SiteSpeed::General(g) => Ok(g.value(q)?.max(R::zero())),
            other => Ok(other.raw(q)?.max(R::zero())),
        }
    }

    /// `ψ'(q)` for `q >= 1`.
    pub fn deriv(&self, q: R) -> Result<R> {
        match self {
            SiteSpeed::Zero => Ok(R::zero()),
            SiteSpeed::Kingman { c } => Ok(*c * (q - R::lit(0.5))),
            SiteSpeed::General(g) => g.deriv(q),
        }
    }

    /// Smallest `q >= 1` with `ψ'(q) >= mu`; infinite for the zero site.
    pub fn inverse_deriv(&self, mu: R) -> Result<R> {
        match self {
            SiteSpeed::Zero => Ok(R::infinity()),
            SiteSpeed::Kingman { c } => Ok((mu / *c + R::lit(0.5)).max(R::one())),
            SiteSpeed::General(g) => g.inverse_deriv(mu),
        }
    }
}

/// Result of the water-filling minimization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaValue<R> {
    pub value: R,
    pub allocation: Vec<R>,
    /// Common marginal speed of the sites above the kink at 1.
    pub multiplier: R,
}

/// `Ω(x) = min_{x_1 + ... + x_N = x} Σ ψ̃_i(x_i)`.
#[derive(Debug)]
pub struct OmegaSolver<R> {
    sites: Vec<SiteSpeed<R>>,
    pub tolerance: R,
}

impl<R: Real> OmegaSolver<R> {
    /// `x_max` is the largest argument the solver is expected to see.
    pub fn new(lambdas: &[MeasureSpec<R>], x_max: R) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::PreconditionViolated("omega needs at least one site".into()));
        }
        Ok(Self {
            sites: lambdas.iter().map(|m| SiteSpeed::new(m, x_max)).collect(),
            tolerance: R::lit(1e-12),
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[SiteSpeed<R>] {
        &self.sites
    }

    /// `Ψ(x_1, ..., x_N) = Σ ψ_i(x_i)` with the unclipped speeds.
    pub fn psi_sum(&self, xs: &[R]) -> Result<R> {
        self.check_len(xs)?;
        let mut total = R::zero();
        for (s, &x) in self.sites.iter().zip(xs) {
            total = total + s.raw(x)?;
        }
        Ok(total)
    }

    /// `Σ ψ̃_i(x_i)`.
    pub fn psi_sum_clipped(&self, xs: &[R]) -> Result<R> {
        self.check_len(xs)?;
        let mut total = R::zero();
        for (s, &x) in self.sites.iter().zip(xs) {
            total = total + s.clipped(x)?;
        }
        Ok(total)
    }

    fn check_len(&self, xs: &[R]) -> Result<()> {
        if xs.len() != self.sites.len() {
            return Err(Error::PreconditionViolated(format!(
                "allocation has {} entries for {} sites",
                xs.len(),
                self.sites.len()
            )));
        }
        if xs.iter().any(|&x| !(x >= R::zero())) {
            return Err(Error::PreconditionViolated("allocation entries must be >= 0".into()));
        }
        Ok(())
    }

    /// Sites filled up to marginal speed `mu`, none beyond `cap`.
    fn filled(&self, mu: R, cap: R) -> Result<(R, Vec<R>)> {
        let mut total = R::zero();
        let mut xs = Vec::with_capacity(self.sites.len());
        for s in &self.sites {
            let q = if s.deriv(cap)? < mu { cap } else { s.inverse_deriv(mu)?.min(cap) };
            total = total + q;
            xs.push(q);
        }
        Ok((total, xs))
    }

    pub fn omega(&self, x: R) -> Result<OmegaValue<R>> {
        if !(x >= R::zero()) {
            return Err(Error::PreconditionViolated(format!("omega needs x >= 0, got {x}")));
        }
        let n = self.sites.len();
        if let Some(zero) = self.sites.iter().position(|s| matches!(s, SiteSpeed::Zero)) {
            let mut allocation = vec![R::zero(); n];
            allocation[zero] = x;
            return Ok(OmegaValue {
                value: R::zero(),
                allocation,
                multiplier: R::zero(),
            });
        }
        let nr = R::count(n as u64);
        if x <= nr {
            return Ok(OmegaValue {
                value: R::zero(),
                allocation: vec![x / nr; n],
                multiplier: R::zero(),
            });
        }
        // capping above x keeps the fill strictly increasing through the root
        let cap = x + x;
        let mut lo = R::zero();
        let mut hi = R::one();
        let mut guard = 0;
        while self.filled(hi, cap)?.0 < x {
            lo = hi;
            hi = hi * R::lit(2.0);
            guard += 1;
            if guard > 2000 {
                return Err(Error::ConvergenceFailure(guard));
            }
        }
        let mut iterations = 0;
        let (mu, mut allocation) = loop {
            let mid = R::lit(0.5) * (lo + hi);
            let (sum, xs) = self.filled(mid, cap)?;
            if (sum - x).abs() <= self.tolerance * x || hi - lo <= R::epsilon() * hi {
                break (mid, xs);
            }
            if sum < x {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
            if iterations > BISECTION_CAP {
                return Err(Error::ConvergenceFailure(iterations));
            }
        };
        // put the rounding residual on the sites above the kink
        let free: R = allocation.iter().map(|&q| q - R::one()).sum();
        if free > R::zero() {
            let scale = (x - nr) / free;
            for q in allocation.iter_mut() {
                *q = R::one() + (*q - R::one()) * scale;
            }
        }
        let value = self.psi_sum_clipped(&allocation)?;
        Ok(OmegaValue {
            value,
            allocation,
            multiplier: mu,
        })
    }

    pub fn omega_value(&self, x: R) -> Result<R> {
        Ok(self.omega(x)?.value)
    }
}

/// Sampled solution of `w' = -Ω(w)`, `w(0) = nN`.
#[derive(Debug, Clone, Serialize)]
pub struct WnSolution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Largest difference to the same solve at half the step.
    pub richardson_error: f64,
    /// Whether the solution dropped below one particle per site.
    pub below_floor: bool,
}

fn rk4<R: Real>(solver: &OmegaSolver<R>, w0: R, t_max: R, dt: R, every: usize) -> Result<(Vec<R>, Vec<R>)> {
    let steps = (t_max / dt).round().to_usize().unwrap_or(0).max(1);
    let h = t_max / R::count(steps as u64);
    let f = |w: R| -> Result<R> { Ok(-solver.omega_value(w.max(R::zero()))?) };
    let mut w = w0;
    let mut times = vec![R::zero()];
    let mut values = vec![w];
    let half = R::lit(0.5);
    let sixth = R::one() / R::lit(6.0);
    for i in 1..=steps {
        let k1 = f(w)?;
        let k2 = f(w + half * h * k1)?;
        let k3 = f(w + half * h * k2)?;
        let k4 = f(w + h * k3)?;
        w = w + h * sixth * (k1 + R::lit(2.0) * k2 + R::lit(2.0) * k3 + k4);
        if i % every == 0 || i == steps {
            times.push(R::count(i as u64) * h);
            values.push(w);
        }
    }
    Ok((times, values))
}

/// Solves the comparison ODE with RK4 at step `dt` and reports every `every`-th step.
pub fn solve_wn(solver: &OmegaSolver<f64>, n: u64, t_max: f64, dt: f64, every: usize) -> Result<WnSolution> {
    if n < 1 || !(t_max > 0.0) || !(dt > 0.0) {
        return Err(Error::PreconditionViolated("solve_wn needs n >= 1, t_max > 0, dt > 0".into()));
    }
    let every = every.max(1);
    let w0 = (n * solver.len() as u64) as f64;
    let (times, values) = rk4(solver, w0, t_max, dt, every)?;
    let (_, fine) = rk4(solver, w0, t_max, dt / 2.0, 2 * every)?;
    let richardson_error = values
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let omegas = values.iter().map(|&w| solver.omega_value(w.max(0.0))).collect::<Result<Vec<_>>>()?;
    let below_floor = values.iter().any(|&w| w < solver.len() as f64 - 1e-9);
    Ok(WnSolution {
        times,
        values,
        omegas,
        richardson_error,
        below_floor,
    })
}

/// `w(t) = 1/(1 - e^{-ct/2}(n-1)/n)`, the solution for one Kingman site of rate `c`.
pub fn kingman_wn(c: f64, n: f64, t: f64) -> f64 {
    1.0 / (1.0 - (-c * t / 2.0).exp() * (n - 1.0) / n)
}

/// `∫_w^∞ dq / Ω(q)`. The integral is taken numerically up to [`FAR_LIMIT`]
/// and the rest is closed with the power law `Ω(q) ∝ q^ρ` fitted over the
/// last doubling, which is infinite when `ρ <= 1`.
pub fn omega_tail_integral(solver: &OmegaSolver<f64>, w: f64) -> Result<f64> {
    let end = FAR_LIMIT / 2.0;
    let inv = |q: f64| -> Result<f64> {
        let o = solver.omega_value(q)?;
        Ok(if o > 0.0 { 1.0 / o } else { f64::INFINITY })
    };
    let top = solver.omega_value(end)?;
    let half = solver.omega_value(end / 2.0)?;
    if !(top > 0.0 && half > 0.0) {
        return Ok(f64::INFINITY);
    }
    let rho = (top / half).ln() / std::f64::consts::LN_2;
    if rho <= 1.0 {
        return Ok(f64::INFINITY);
    }
    let remainder = end / ((rho - 1.0) * top);
    if w >= end {
        return Ok(remainder * (end / w).powf(rho - 1.0));
    }
    let mut knots = vec![w];
    while knots.last().unwrap() * 2.0 < end {
        knots.push(knots.last().unwrap() * 2.0);
    }
    knots.push(end);
    let quad = Quadrature::with_rel_tol(1e-9);
    let failure = std::cell::RefCell::new(None);
    let body = quad.integrate_pieces(
        &|q| match inv(q) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &knots,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(body? + remainder)
}

/// `w_∞(t)`, the solution of `∫_{w}^∞ dq/Ω(q) = t`.
pub fn w_infinity(solver: &OmegaSolver<f64>, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::PreconditionViolated("w_infinity needs t > 0".into()));
    }
    let floor = solver.len() as f64;
    let mut lo = floor * (1.0 + 1e-9);
    if omega_tail_integral(solver, lo)? <= t {
        return Ok(lo);
    }
    let mut hi = 2.0 * floor + 1.0;
    let mut guard = 0;
    while omega_tail_integral(solver, hi)? > t {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::ConvergenceFailure(guard));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if omega_tail_integral(solver, mid)? > t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Whether `∫_s^∞ dq/Ω(q) < ∞`. Finite iff every site comes down: a site
/// that does not bounds `Ω` from above by its own speed.
pub fn omega_integral_test(lambdas: &[crate::Measure], s: f64) -> Result<Verdict> {
    let n = lambdas.len() as f64;
    if !(s >= 2.0 * n) {
        return Err(Error::PreconditionViolated(format!("omega integral test needs s >= 2N = {}", 2.0 * n)));
    }
    let xs: Vec<f64> = (0..=10).map(|j| s * 2f64.powi(j)).collect();
    let solver = OmegaSolver::new(lambdas, *xs.last().unwrap())?;
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| solver.omega_value(x).map(|o| (x, o)))
        .collect::<Result<_>>()?;
    let fit = loglog_fit(&pts);
    let mut evidence = Evidence {
        method: "analytic".into(),
        fit,
        partial_sums: pts.iter().map(|&(x, o)| (x as u64, o)).collect(),
        ..Evidence::default()
    };
    if lambdas.iter().any(|m| m.is_zero()) {
        evidence.shortcut = Some("a site without coalescence makes omega vanish".into());
        return Ok(Verdict {
            outcome: Outcome::Negative,
            evidence,
        });
    }
    let sites = lambdas.iter().map(comes_down).collect::<Result<Vec<_>>>()?;
    if sites.iter().all(|v| v.outcome == Outcome::Positive) {
        evidence.shortcut = Some("every site comes down, so each 1/psi is integrable".into());
        return Ok(Verdict {
            outcome: Outcome::Positive,
            evidence,
        });
    }
    if sites.iter().any(|v| v.outcome == Outcome::Negative) {
        evidence.shortcut = Some("a site that does not come down bounds omega by its own speed".into());
        return Ok(Verdict {
            outcome: Outcome::Negative,
            evidence,
        });
    }
    evidence.method = "regression".into();
    let outcome = match fit {
        Some(f) if f.exponent > 1.05 => Outcome::Positive,
        Some(f) if f.exponent < 0.95 => Outcome::Negative,
        _ => Outcome::Inconclusive,
    };
    Ok(Verdict { outcome, evidence })
}
