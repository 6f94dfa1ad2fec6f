//! Finite measures on `[0, 1]` and the polynomial integrals every rate reduces to.
//!
//! A measure is `c δ_0 + Σ m_i δ_{z_i} + f(z) dz`. The closed-form density
//! families (constant, power law, beta) are all of the form
//! `w z^(a-1) (1-z)^(b-1)` and are handled through [`BetaKernel`], so their
//! moments are Beta-function ratios evaluated in log space.

use crate::error::{Error, Result};
use crate::quadrature::{integrate_beta_weighted, Quadrature};
use crate::scalar::Real;
use crate::special::{digamma, ln_beta, ln_binomial};

/// Which action a measure drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Coalescence,
    Death,
    Migration,
    Reproduction,
}

impl ActionKind {
    /// Exponent of the `z^-w` scaling: 2 for coalescence, 1 otherwise.
    pub fn weight(self) -> Weight {
        match self {
            ActionKind::Coalescence => Weight::Pair,
            _ => Weight::Single,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Coalescence => "coal",
            ActionKind::Death => "death",
            ActionKind::Migration => "migr",
            ActionKind::Reproduction => "repr",
        }
    }
}

/// The `z^-w` weight; also the minimum number of participants of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weight {
    Single,
    Pair,
}

impl Weight {
    pub fn get(self) -> u64 {
        match self {
            Weight::Single => 1,
            Weight::Pair => 2,
        }
    }

    pub fn from_u64(w: u64) -> Result<Self> {
        match w {
            1 => Ok(Weight::Single),
            2 => Ok(Weight::Pair),
            _ => Err(Error::PreconditionViolated(format!("weight must be 1 or 2, got {w}"))),
        }
    }
}

/// `w z^(a-1) (1-z)^(b-1)` on `(0, 1)`, stored as `ln w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaKernel<R> {
    pub a: R,
    pub b: R,
    pub ln_weight: R,
}

impl<R: Real> BetaKernel<R> {
    pub fn weight(&self) -> R {
        self.ln_weight.exp()
    }

    /// `∫ z^p (1-z)^q f(z) dz`, in log space.
    pub fn ln_moment(&self, p: R, q: R) -> R {
        self.ln_weight + ln_beta(self.a + p, self.b + q)
    }

    pub fn total_mass(&self) -> R {
        self.ln_moment(R::zero(), R::zero()).exp()
    }

    /// The sequence `c_j = ∫ (1-z)^j f(z) dz` in increasing `j`.
    pub fn tail_moments(&self) -> TailMoments<R> {
        TailMoments {
            a: self.a,
            b: self.b,
            j: 0,
            current: self.total_mass(),
        }
    }

    pub fn density(&self, z: R, omz: R) -> R {
        (self.ln_weight + (self.a - R::one()) * z.ln() + (self.b - R::one()) * omz.ln()).exp()
    }
}

/// Iterator over `c_j = ∫ (1-z)^j f(z) dz` using `c_{j+1} = c_j (b+j)/(a+b+j)`.
#[derive(Debug, Clone)]
pub struct TailMoments<R> {
    a: R,
    b: R,
    j: u64,
    current: R,
}

impl<R: Real> Iterator for TailMoments<R> {
    type Item = R;
    fn next(&mut self) -> Option<R> {
        let out = self.current;
        let j = R::count(self.j);
        self.current = self.current * (self.b + j) / (self.a + self.b + j);
        self.j += 1;
        Some(out)
    }
}

/// Piecewise-linear density on a monotone grid, extended by its boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity<R> {
    points: Vec<(R, R)>,
}

impl<R: Real> TabulatedDensity<R> {
    pub fn new(points: Vec<(R, R)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidMeasure("tabulated density needs at least two grid points".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidMeasure("tabulated grid must be strictly increasing".into()));
            }
        }
        for &(z, f) in &points {
            if !(z >= R::zero() && z <= R::one()) || !z.is_finite() {
                return Err(Error::InvalidMeasure(format!("tabulated grid point {z} outside [0,1]")));
            }
            if !(f >= R::zero()) || !f.is_finite() {
                return Err(Error::InvalidMeasure(format!("tabulated density value {f} must be finite and >= 0")));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(R, R)] {
        &self.points
    }

    pub fn eval(&self, z: R) -> R {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if z <= first.0 {
            return first.1;
        }
        if z >= last.0 {
            return last.1;
        }
        let idx = self.points.partition_point(|p| p.0 <= z);
        let (z0, f0) = self.points[idx - 1];
        let (z1, f1) = self.points[idx];
        f0 + (f1 - f0) * (z - z0) / (z1 - z0)
    }

    /// Breakpoints of the interpolant on `[0, 1]`, including both ends.
    pub fn knots(&self) -> Vec<R> {
        let mut out = Vec::with_capacity(self.points.len() + 2);
        if self.points[0].0 > R::zero() {
            out.push(R::zero());
        }
        out.extend(self.points.iter().map(|p| p.0));
        if *out.last().unwrap() < R::one() {
            out.push(R::one());
        }
        out
    }

    /// Exact integral of the interpolant over `[0, 1]`.
    pub fn total_mass(&self) -> R {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        let mut total = first.1 * first.0 + last.1 * (R::one() - last.0);
        for w in self.points.windows(2) {
            total = total + R::lit(0.5) * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
        total
    }

    /// Supremum of the interpolant on `[lo, hi]`.
    pub fn sup_on(&self, lo: R, hi: R) -> R {
        let mut best = self.eval(lo).max(self.eval(hi));
        for &(z, f) in &self.points {
            if z > lo && z < hi {
                best = best.max(f);
            }
        }
        best
    }

    /// `∫_0^1 g(z, 1-z) f(z) dz`, integrating cell by cell.
    pub fn integrate<G: Fn(R, R) -> R>(&self, quad: &Quadrature<R>, g: G) -> Result<R> {
        let knots = self.knots();
        quad.integrate_pieces(&|z: R| g(z, R::one() - z) * self.eval(z), &knots)
    }
}

/// Density part of a measure.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DensityFamily<R> {
    #[default]
    None,
    /// `c dz` on `(0, 1]`.
    Constant { value: R },
    /// `scale z^-gamma dz`, `gamma ∈ [0, 1)`.
    PowerLaw { scale: R, gamma: R },
    /// `scale Beta(a, b)` density.
    Beta { a: R, b: R, scale: R },
    Tabulated(TabulatedDensity<R>),
}

impl<R: Real> DensityFamily<R> {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMeasure(msg));
        match *self {
            DensityFamily::None | DensityFamily::Tabulated(_) => Ok(()),
            DensityFamily::Constant { value } => {
                if value >= R::zero() && value.is_finite() {
                    Ok(())
                } else {
                    bad(format!("constant density {value} must be finite and >= 0"))
                }
            }
            DensityFamily::PowerLaw { scale, gamma } => {
                if !(scale > R::zero()) || !scale.is_finite() {
                    bad(format!("power-law scale {scale} must be positive"))
                } else if !(gamma >= R::zero() && gamma < R::one()) {
                    bad(format!("power-law exponent gamma = {gamma} must lie in [0, 1) for finite mass"))
                } else {
                    Ok(())
                }
            }
            DensityFamily::Beta { a, b, scale } => {
                if !(a > R::zero() && b > R::zero()) || !a.is_finite() || !b.is_finite() {
                    bad(format!("beta parameters ({a}, {b}) must be positive"))
                } else if !(scale > R::zero()) || !scale.is_finite() {
                    bad(format!("beta scale {scale} must be positive"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// The closed-form families as a single Beta kernel.
    pub fn kernel(&self) -> Option<BetaKernel<R>> {
        match *self {
            DensityFamily::Constant { value } if value > R::zero() => Some(BetaKernel {
                a: R::one(),
                b: R::one(),
                ln_weight: value.ln(),
            }),
            DensityFamily::PowerLaw { scale, gamma } => Some(BetaKernel {
                a: R::one() - gamma,
                b: R::one(),
                ln_weight: scale.ln(),
            }),
            DensityFamily::Beta { a, b, scale } => Some(BetaKernel {
                a,
                b,
                ln_weight: scale.ln() - ln_beta(a, b),
            }),
            _ => None,
        }
    }

    pub fn tabulated(&self) -> Option<&TabulatedDensity<R>> {
        match self {
            DensityFamily::Tabulated(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_none(&self) -> bool {
        match self {
            DensityFamily::None => true,
            DensityFamily::Constant { value } => *value == R::zero(),
            DensityFamily::Tabulated(t) => t.total_mass() == R::zero(),
            _ => false,
        }
    }

    pub fn total_mass(&self) -> R {
        match self {
            DensityFamily::Tabulated(t) => t.total_mass(),
            other => other.kernel().map_or(R::zero(), |k| k.total_mass()),
        }
    }
}

/// Regularity of a coalescence measure near zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularityProfile<R> {
    /// Pure atom at zero.
    Kingman,
    /// `Λ(dz) = f(z) dz` with `f(z) ~ B z^(1-α)`, `α ∈ (1, 2)`.
    Regular { b: R, alpha: R },
    Unknown,
}

/// A finite measure on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec<R> {
    atom_zero: R,
    atoms: Vec<(R, R)>,
    density: DensityFamily<R>,
    label: Option<ActionKind>,
}

impl<R: Real> Default for MeasureSpec<R> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<R: Real> MeasureSpec<R> {
    pub fn new(atom_zero: R, atoms: Vec<(R, R)>, density: DensityFamily<R>) -> Result<Self> {
        if !(atom_zero >= R::zero()) || !atom_zero.is_finite() {
            return Err(Error::InvalidMeasure(format!("atom at zero {atom_zero} must be finite and >= 0")));
        }
        for &(z, m) in &atoms {
            if !(z > R::zero() && z <= R::one()) {
                return Err(Error::InvalidMeasure(format!("atom position {z} must lie in (0, 1]")));
            }
            if !(m > R::zero()) || !m.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom mass {m} must be positive and finite")));
            }
        }
        density.validate()?;
        Ok(Self {
            atom_zero,
            atoms,
            density,
            label: None,
        })
    }

    pub fn zero() -> Self {
        Self {
            atom_zero: R::zero(),
            atoms: Vec::new(),
            density: DensityFamily::None,
            label: None,
        }
    }

    /// `c δ_0`.
    pub fn kingman(c: R) -> Result<Self> {
        Self::new(c, Vec::new(), DensityFamily::None)
    }

    /// `mass δ_z`.
    pub fn dirac(z: R, mass: R) -> Result<Self> {
        Self::new(R::zero(), vec![(z, mass)], DensityFamily::None)
    }

    pub fn constant(value: R) -> Result<Self> {
        Self::new(R::zero(), Vec::new(), DensityFamily::Constant { value })
    }

    /// Uniform distribution on `[0, 1]` (Bolthausen–Sznitman as a coalescence measure).
    pub fn uniform() -> Self {
        Self::constant(R::one()).expect("valid")
    }

    pub fn power_law(scale: R, gamma: R) -> Result<Self> {
        Self::new(R::zero(), Vec::new(), DensityFamily::PowerLaw { scale, gamma })
    }

    pub fn beta(a: R, b: R, scale: R) -> Result<Self> {
        Self::new(R::zero(), Vec::new(), DensityFamily::Beta { a, b, scale })
    }

    /// `Beta(2 - α, α)`, the regular family with exponent `α`.
    pub fn beta_coalescent(alpha: R) -> Result<Self> {
        Self::beta(R::lit(2.0) - alpha, alpha, R::one())
    }

    pub fn tabulated(points: Vec<(R, R)>) -> Result<Self> {
        Self::new(R::zero(), Vec::new(), DensityFamily::Tabulated(TabulatedDensity::new(points)?))
    }

    pub fn with_label(mut self, label: ActionKind) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_atom_zero(mut self, c: R) -> Result<Self> {
        Self::new(c, std::mem::take(&mut self.atoms), std::mem::take(&mut self.density)).map(|m| Self {
            label: self.label,
            ..m
        })
    }

    /// Sum of two measures. At most one of them may carry a density.
    pub fn try_add(&self, other: &Self) -> Result<Self> {
        let density = match (&self.density, &other.density) {
            (d, DensityFamily::None) => d.clone(),
            (DensityFamily::None, d) => d.clone(),
            _ => return Err(Error::InvalidMeasure("cannot add two density parts".into())),
        };
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self::new(self.atom_zero + other.atom_zero, atoms, density)
    }

    pub fn atom_zero(&self) -> R {
        self.atom_zero
    }

    pub fn atoms(&self) -> &[(R, R)] {
        &self.atoms
    }

    pub fn density(&self) -> &DensityFamily<R> {
        &self.density
    }

    pub fn label(&self) -> Option<ActionKind> {
        self.label
    }

    pub fn kernel(&self) -> Option<BetaKernel<R>> {
        self.density.kernel()
    }

    /// Copy without the atom at zero.
    pub fn positive_part(&self) -> Self {
        Self {
            atom_zero: R::zero(),
            ..self.clone()
        }
    }

    pub fn total_mass(&self) -> R {
        self.atom_zero + self.atoms.iter().map(|a| a.1).sum::<R>() + self.density.total_mass()
    }

    pub fn positive_mass(&self) -> R {
        self.total_mass() - self.atom_zero
    }

    pub fn is_zero(&self) -> bool {
        self.atom_zero == R::zero() && self.atoms.is_empty() && self.density.is_none()
    }

    pub fn has_atom_at_one(&self) -> bool {
        self.atoms.iter().any(|a| a.0 == R::one())
    }

    pub fn regularity(&self) -> RegularityProfile<R> {
        if !self.atoms.is_empty() {
            return RegularityProfile::Unknown;
        }
        if self.density.is_none() {
            return if self.atom_zero > R::zero() {
                RegularityProfile::Kingman
            } else {
                RegularityProfile::Unknown
            };
        }
        if self.atom_zero > R::zero() {
            return RegularityProfile::Unknown;
        }
        match self.kernel() {
            Some(k) if k.a > R::zero() && k.a < R::one() => RegularityProfile::Regular {
                b: k.weight(),
                alpha: R::lit(2.0) - k.a,
            },
            _ => RegularityProfile::Unknown,
        }
    }

    /// `∫ z^(k-w) (1-z)^(b-k) μ(dz)`, the kernel shared by every blockwise rate.
    pub fn weighted_moment(&self, k: u64, b: u64, w: Weight) -> Result<R> {
        self.weighted_moment_with(k, b, w, &Quadrature::default())
    }

    pub fn weighted_moment_with(&self, k: u64, b: u64, w: Weight, quad: &Quadrature<R>) -> Result<R> {
        let wv = w.get();
        if k < wv || k > b {
            return Err(Error::PreconditionViolated(format!(
                "weighted moment needs {wv} <= k <= b, got k = {k}, b = {b}"
            )));
        }
        let p = k - wv;
        let q = b - k;
        let mut total = if p == 0 { self.atom_zero } else { R::zero() };
        for &(z, m) in &self.atoms {
            total = total + m * power_pair(z, p, q);
        }
        if let Some(kernel) = self.kernel() {
            total = total + kernel.ln_moment(R::count(p), R::count(q)).exp();
        }
        if let Some(tab) = self.density.tabulated() {
            total = total + tab.integrate(quad, |z, omz| pow_u(z, p) * pow_u(omz, q))?;
        }
        Ok(total)
    }

    /// `binom(b, k) · weighted_moment(k, b, w)`, evaluated in log space per component.
    pub fn binomial_moment(&self, k: u64, b: u64, w: Weight) -> Result<R> {
        let wv = w.get();
        if k < wv || k > b {
            return Err(Error::PreconditionViolated(format!(
                "weighted moment needs {wv} <= k <= b, got k = {k}, b = {b}"
            )));
        }
        let ln_c: R = ln_binomial(b, k);
        let p = k - wv;
        let q = b - k;
        let mut total = if p == 0 { self.atom_zero * ln_c.exp() } else { R::zero() };
        for &(z, m) in &self.atoms {
            total = total + (ln_c + m.ln() + ln_power_pair(z, p, q)).exp();
        }
        if let Some(kernel) = self.kernel() {
            total = total + (ln_c + kernel.ln_moment(R::count(p), R::count(q))).exp();
        }
        if let Some(tab) = self.density.tabulated() {
            let quad = Quadrature::default();
            let raw = tab.integrate(&quad, |z, omz| (ln_c + ln_power_pair_omz(z, omz, p, q)).exp())?;
            total = total + raw;
        }
        Ok(total)
    }

    /// `∫ P(Bin(n, z) >= w) z^-w μ⁺(dz)`: the total rate of coordinated events
    /// that involve at least `w` of `n` particles. The atom at zero is excluded.
    pub fn survival_integral(&self, n: u64, w: Weight) -> Result<R> {
        let wv = w.get();
        if n < wv {
            return Ok(R::zero());
        }
        let mut total = R::zero();
        for &(z, m) in &self.atoms {
            total = total + m * survival_kernel(n, w, z, R::one() - z);
        }
        if let Some(kernel) = self.kernel() {
            let mut acc = SurvivalAccumulator::new(kernel);
            acc.advance_to(n);
            total = total + acc.value(w);
        }
        if let Some(tab) = self.density.tabulated() {
            let quad = Quadrature::default();
            total = total + tab.integrate(&quad, |z, omz| survival_kernel(n, w, z, omz))?;
        }
        Ok(total)
    }

    /// `∫ (q z - 1 + (1-z)^q) z^-2 μ⁺(dz)`: the coordinated part of the processing speed.
    pub fn speed_integral(&self, q: R, quad: &Quadrature<R>) -> Result<R> {
        let mut total = R::zero();
        for &(z, m) in &self.atoms {
            total = total + m * speed_kernel(q, z, R::one() - z);
        }
        if let Some(kernel) = self.kernel() {
            let raw = integrate_beta_weighted(quad, kernel.a, kernel.b, |z, omz| speed_kernel(q, z, omz))?;
            total = total + kernel.weight() * raw;
        }
        if let Some(tab) = self.density.tabulated() {
            total = total + tab.integrate(quad, |z, omz| speed_kernel(q, z, omz))?;
        }
        Ok(total)
    }

    /// `∫ g(z, 1-z) μ⁺(dz)` for a bounded integrand `g`.
    pub fn integrate_positive<G: Fn(R, R) -> R>(&self, quad: &Quadrature<R>, g: G) -> Result<R> {
        let mut total = R::zero();
        for &(z, m) in &self.atoms {
            total = total + m * g(z, R::one() - z);
        }
        if let Some(kernel) = self.kernel() {
            total = total + kernel.weight() * integrate_beta_weighted(quad, kernel.a, kernel.b, &g)?;
        }
        if let Some(tab) = self.density.tabulated() {
            total = total + tab.integrate(quad, &g)?;
        }
        Ok(total)
    }

    /// `∫ -ln z μ⁺(dz)` for the closed-form parts; `None` if a tabulated part is present.
    pub fn neg_log_integral_closed(&self) -> Option<R> {
        if self.density.tabulated().is_some() {
            return None;
        }
        let mut total = R::zero();
        for &(z, m) in &self.atoms {
            total = total - m * z.ln();
        }
        if let Some(k) = self.kernel() {
            // E[-ln Y] = ψ(a+b) - ψ(a) for Y ~ Beta(a, b)
            total = total + k.total_mass() * (digamma(k.a + k.b) - digamma(k.a));
        }
        Some(total)
    }
}

/// Incremental evaluation of the survival integrals of a Beta kernel:
/// `S1(n) = Σ_{j<n} c_j` and `S2(n) = Σ_{m=1}^{n-1} m c_{m-1}` with
/// `c_j = ∫ (1-z)^j f(z) dz`. Both follow from telescoping the tilts in `n`.
#[derive(Debug, Clone)]
pub struct SurvivalAccumulator<R> {
    moments: TailMoments<R>,
    n: u64,
    c_prev: R,
    s1: R,
    s2: R,
}

impl<R: Real> SurvivalAccumulator<R> {
    pub fn new(kernel: BetaKernel<R>) -> Self {
        Self {
            moments: kernel.tail_moments(),
            n: 0,
            c_prev: R::zero(),
            s1: R::zero(),
            s2: R::zero(),
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn step(&mut self) {
        // S2(n+1) = S2(n) + n c_{n-1};  S1(n+1) = S1(n) + c_n
        let c = self.moments.next().expect("infinite sequence");
        self.s2 = self.s2 + R::count(self.n) * self.c_prev;
        self.s1 = self.s1 + c;
        self.c_prev = c;
        self.n += 1;
    }

    pub fn advance_to(&mut self, n: u64) {
        while self.n < n {
            self.step();
        }
    }

    pub fn value(&self, w: Weight) -> R {
        match w {
            Weight::Single => self.s1,
            Weight::Pair => self.s2,
        }
    }
}

fn pow_u<R: Real>(x: R, p: u64) -> R {
    if p == 0 {
        R::one()
    } else if p <= i32::MAX as u64 {
        x.powi(p as i32)
    } else {
        x.powf(R::count(p))
    }
}

fn power_pair<R: Real>(z: R, p: u64, q: u64) -> R {
    let omz = R::one() - z;
    pow_u(z, p) * pow_u(omz, q)
}

fn ln_power_pair<R: Real>(z: R, p: u64, q: u64) -> R {
    ln_power_pair_omz(z, R::one() - z, p, q)
}

fn ln_power_pair_omz<R: Real>(z: R, omz: R, p: u64, q: u64) -> R {
    let lp = if p == 0 { R::zero() } else { R::count(p) * z.ln() };
    let lq = if q == 0 { R::zero() } else { R::count(q) * ln_one_minus(z, omz) };
    lp + lq
}

/// `ln(1 - z)`, accurate on both ends.
#[inline]
pub fn ln_one_minus<R: Real>(z: R, omz: R) -> R {
    if z < R::lit(0.5) {
        (-z).ln_1p()
    } else {
        omz.ln()
    }
}

/// `P(Bin(n, z) >= w)`.
pub fn tilt<R: Real>(n: u64, w: Weight, z: R, omz: R) -> R {
    let wv = w.get();
    if n < wv || z <= R::zero() {
        return R::zero();
    }
    let nr = R::count(n);
    let lomz = ln_one_minus(z, omz);
    match w {
        // 1 - (1-z)^n
        Weight::Single => -(nr * lomz).exp_m1(),
        Weight::Pair => {
            if nr * z >= R::one() {
                // 1 - (1-z)^(n-1) (1 + (n-1) z)
                let head = ((nr - R::one()) * lomz).exp() * (R::one() + (nr - R::one()) * z);
                R::one() - head
            } else {
                // Σ_{k>=2} binom(n,k) z^k (1-z)^(n-k), rapidly decreasing
                let ratio = z / omz;
                let mut term = R::lit(0.5) * nr * (nr - R::one()) * z * z * ((nr - R::lit(2.0)) * lomz).exp();
                let mut sum = R::zero();
                let mut k = 2u64;
                while k <= n {
                    sum = sum + term;
                    if term <= sum * R::epsilon() {
                        break;
                    }
                    term = term * R::count(n - k) / R::count(k + 1) * ratio;
                    k += 1;
                }
                sum
            }
        }
    }
}

/// `P(Bin(n, z) >= w) / z^w`, finite as `z → 0`.
pub fn survival_kernel<R: Real>(n: u64, w: Weight, z: R, omz: R) -> R {
    if z <= R::zero() {
        let nr = R::count(n);
        return match w {
            Weight::Single => nr,
            Weight::Pair => R::lit(0.5) * nr * (nr - R::one()),
        };
    }
    let t = tilt(n, w, z, omz);
    match w {
        Weight::Single => t / z,
        Weight::Pair => t / (z * z),
    }
}

/// `(q z - 1 + (1-z)^q) / z^2`, finite as `z → 0` with limit `q(q-1)/2`.
pub fn speed_kernel<R: Real>(q: R, z: R, omz: R) -> R {
    let half = R::lit(0.5);
    if z <= R::zero() {
        return half * q * (q - R::one());
    }
    if q * z < R::lit(0.1) && z < half {
        // Σ_{j>=2} binom(q, j) (-z)^j / z^2
        let mut term = half * q * (q - R::one());
        let mut sum = R::zero();
        let mut j = 2u32;
        loop {
            sum = sum + term;
            if term.abs() <= sum.abs() * R::epsilon() || j > 200 {
                break;
            }
            let jr = R::lit(j as f64);
            term = term * (q - jr) / (jr + R::one()) * (-z);
            j += 1;
        }
        sum
    } else {
        let lomz = ln_one_minus(z, omz);
        (q * z - R::one() + (q * lomz).exp()) / (z * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn total_mass_examples() {
        assert_eq!(MeasureSpec::<f64>::kingman(1.0).unwrap().total_mass(), 1.0);
        assert_relative_eq!(MeasureSpec::<f64>::power_law(1.0, 0.5).unwrap().total_mass(), 2.0, max_relative = 1e-14);
        assert_eq!(MeasureSpec::<f64>::zero().total_mass(), 0.0);
        assert_relative_eq!(MeasureSpec::<f64>::beta(0.5, 1.5, 3.0).unwrap().total_mass(), 3.0, max_relative = 1e-13);
        let tab = MeasureSpec::<f64>::tabulated(vec![(0.2, 1.0), (0.6, 3.0)]).unwrap();
        // 0.2*1 + 0.4*2 + 0.4*3
        assert_relative_eq!(tab.total_mass(), 2.2, max_relative = 1e-14);
    }

    #[test]
    fn weighted_moment_examples() {
        let kingman = MeasureSpec::<f64>::kingman(1.0).unwrap();
        assert_eq!(kingman.weighted_moment(2, 5, Weight::Pair).unwrap(), 1.0);
        assert_eq!(kingman.weighted_moment(3, 5, Weight::Pair).unwrap(), 0.0);
        let uniform = MeasureSpec::<f64>::uniform();
        assert_relative_eq!(uniform.weighted_moment(2, 3, Weight::Pair).unwrap(), 0.5, max_relative = 1e-14);
        let beta = MeasureSpec::<f64>::beta(0.5, 1.5, 1.0).unwrap();
        assert_relative_eq!(beta.weighted_moment(2, 2, Weight::Pair).unwrap(), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn weighted_moment_rejects_small_k() {
        let uniform = MeasureSpec::<f64>::uniform();
        assert!(matches!(
            uniform.weighted_moment(1, 3, Weight::Pair),
            Err(Error::PreconditionViolated(_))
        ));
        assert!(uniform.weighted_moment(0, 3, Weight::Single).is_err());
        assert!(uniform.weighted_moment(4, 3, Weight::Single).is_err());
    }

    #[test]
    fn survival_integral_examples() {
        let uniform = MeasureSpec::<f64>::uniform();
        assert_relative_eq!(uniform.survival_integral(2, Weight::Single).unwrap(), 1.5, max_relative = 1e-14);
        let beta = MeasureSpec::<f64>::beta(0.5, 1.5, 1.0).unwrap();
        assert_eq!(beta.survival_integral(1, Weight::Pair).unwrap(), 0.0);
        let kingman = MeasureSpec::<f64>::kingman(1.0).unwrap();
        assert_eq!(kingman.survival_integral(10, Weight::Single).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_is_extended_by_boundary_values() {
        let t = TabulatedDensity::new(vec![(0.25, 2.0), (0.75, 4.0)]).unwrap();
        assert_eq!(t.eval(0.0), 2.0);
        assert_eq!(t.eval(1.0), 4.0);
        assert_eq!(t.eval(0.5), 3.0);
        assert_eq!(t.sup_on(0.0, 0.5), 3.0);
    }

    #[test]
    fn invalid_measures_are_rejected() {
        assert!(MeasureSpec::<f64>::power_law(1.0, 1.2).is_err());
        assert!(MeasureSpec::<f64>::power_law(1.0, 1.0).is_err());
        assert!(MeasureSpec::<f64>::dirac(0.0, 1.0).is_err());
        assert!(MeasureSpec::<f64>::dirac(1.5, 1.0).is_err());
        assert!(MeasureSpec::<f64>::kingman(-1.0).is_err());
        assert!(MeasureSpec::<f64>::beta(0.0, 1.0, 1.0).is_err());
        assert!(MeasureSpec::<f64>::tabulated(vec![(0.5, 1.0), (0.4, 1.0)]).is_err());
        assert!(MeasureSpec::<f64>::dirac(1.0, 1.0).unwrap().has_atom_at_one());
    }

    #[test]
    fn regularity_profiles() {
        assert_eq!(MeasureSpec::<f64>::kingman(2.0).unwrap().regularity(), RegularityProfile::Kingman);
        match MeasureSpec::<f64>::beta_coalescent(1.5).unwrap().regularity() {
            RegularityProfile::Regular { b, alpha } => {
                assert_relative_eq!(alpha, 1.5);
                // 1/B(0.5, 1.5) = 2/π
                assert_relative_eq!(b, 2.0 / std::f64::consts::PI, max_relative = 1e-13);
            }
            other => panic!("{other:?}"),
        }
        match MeasureSpec::<f64>::power_law(3.0, 0.3).unwrap().regularity() {
            RegularityProfile::Regular { b, alpha } => {
                assert_relative_eq!(alpha, 1.3, max_relative = 1e-14);
                assert_relative_eq!(b, 3.0, max_relative = 1e-14);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(MeasureSpec::<f64>::uniform().regularity(), RegularityProfile::Unknown);
        assert_eq!(MeasureSpec::<f64>::zero().regularity(), RegularityProfile::Unknown);
    }

    #[test]
    fn tilt_small_and_large_regimes_agree() {
        // direct binomial tail as reference
        for &(n, z) in &[(5u64, 0.01f64), (40, 0.02), (40, 0.3), (300, 0.001), (2, 0.9)] {
            let pmf = |k: u64| {
                let c: f64 = ln_binomial(n, k);
                (c + k as f64 * z.ln() + (n - k) as f64 * (1.0 - z).ln()).exp()
            };
            let tail1: f64 = (1..=n).map(pmf).sum();
            let tail2: f64 = (2..=n).map(pmf).sum();
            assert_relative_eq!(tilt(n, Weight::Single, z, 1.0 - z), tail1, max_relative = 1e-12);
            assert_relative_eq!(tilt(n, Weight::Pair, z, 1.0 - z), tail2, max_relative = 1e-11);
        }
    }

    #[test]
    fn speed_kernel_series_matches_direct_form() {
        for &(q, z) in &[(3.0f64, 0.02), (2.5, 0.03), (0.5, 0.1), (10.0, 0.009)] {
            let direct = (q * z - 1.0 + (1.0 - z).powf(q)) / (z * z);
            assert_relative_eq!(speed_kernel(q, z, 1.0 - z), direct, max_relative = 1e-9);
        }
        assert_eq!(speed_kernel(3.0f64, 0.0, 1.0), 3.0);
    }

    #[test]
    fn linearity_of_weighted_moment() {
        let a = MeasureSpec::<f64>::beta(0.7, 1.3, 2.0).unwrap();
        let b = MeasureSpec::<f64>::new(0.5, vec![(0.3, 0.2), (0.9, 1.1)], DensityFamily::None).unwrap();
        let sum = a.try_add(&b).unwrap();
        for (k, n) in [(1u64, 1u64), (1, 7), (3, 9), (9, 9)] {
            let lhs = sum.weighted_moment(k, n, Weight::Single).unwrap();
            let rhs = a.weighted_moment(k, n, Weight::Single).unwrap() + b.weighted_moment(k, n, Weight::Single).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-13);
        }
        assert!(a.try_add(&a).is_err());
    }

    #[test]
    fn neg_log_closed_form_for_power_law() {
        // E[-ln Y] = 1/(1-γ) for Y ∝ z^-γ
        let m = MeasureSpec::<f64>::power_law(1.0, 0.75).unwrap();
        let v = m.neg_log_integral_closed().unwrap() / m.total_mass();
        assert_relative_eq!(v, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn generic_over_single_precision() {
        let m = MeasureSpec::<f32>::uniform();
        let v = m.weighted_moment(2, 3, Weight::Pair).unwrap();
        assert!((v - 0.5).abs() < 1e-5);
        let s = m.survival_integral(2, Weight::Single).unwrap();
        assert!((s - 1.5).abs() < 1e-5);
    }
}
