#![allow(dead_code)]

use coordsim::measures::DensityFamily;
use coordsim::Measure;
use proptest::prelude::*;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn arb_density() -> impl Strategy<Value = DensityFamily<f64>> {
    prop_oneof![
        Just(DensityFamily::None),
        (0.1..3.0f64).prop_map(|value| DensityFamily::Constant { value }),
        (0.1..2.0f64, 0.0..0.95f64).prop_map(|(scale, gamma)| DensityFamily::PowerLaw { scale, gamma }),
        (0.2..4.0f64, 0.2..4.0f64, 0.1..2.0f64).prop_map(|(a, b, scale)| DensityFamily::Beta { a, b, scale }),
    ]
}

pub fn arb_atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.01..0.99f64, 0.05..2.0f64), 0..3)
}

pub fn arb_atom_zero() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.05..2.0f64]
}

/// Nonzero measure with no atom at 1.
pub fn arb_measure() -> impl Strategy<Value = Measure> {
    (arb_atom_zero(), arb_atoms(), arb_density())
        .prop_filter_map("zero measure", |(a0, atoms, d)| {
            let m = Measure::new(a0, atoms, d).ok()?;
            (!m.is_zero()).then_some(m)
        })
}

pub fn arb_measure_without_density() -> impl Strategy<Value = Measure> {
    (arb_atom_zero(), arb_atoms()).prop_filter_map("zero measure", |(a0, atoms)| {
        let m = Measure::new(a0, atoms, DensityFamily::None).ok()?;
        (!m.is_zero()).then_some(m)
    })
}

/// Coalescence measures whose coming-down verdict is known in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coal {
    Zero,
    Kingman(f64),
    Beta(f64),
    Uniform,
}

impl Coal {
    pub fn measure(self) -> Measure {
        match self {
            Coal::Zero => Measure::zero(),
            Coal::Kingman(c) => Measure::kingman(c).unwrap(),
            Coal::Beta(alpha) => Measure::beta_coalescent(alpha).unwrap(),
            Coal::Uniform => Measure::uniform(),
        }
    }

    pub fn comes_down(self) -> bool {
        matches!(self, Coal::Kingman(_) | Coal::Beta(_))
    }
}

pub fn arb_coal() -> impl Strategy<Value = Coal> {
    prop_oneof![
        Just(Coal::Zero),
        (0.5..2.0f64).prop_map(Coal::Kingman),
        prop_oneof![Just(1.3), Just(1.5), Just(1.7)].prop_map(Coal::Beta),
        Just(Coal::Uniform),
    ]
}

/// Migration measures whose strength is known in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Move {
    Zero,
    AtomZero(f64),
    PowerLaw(f64),
    Dirac(f64),
}

impl Move {
    pub fn measure(self) -> Measure {
        match self {
            Move::Zero => Measure::zero(),
            Move::AtomZero(c) => Measure::kingman(c).unwrap(),
            Move::PowerLaw(g) => Measure::power_law(1.0, g).unwrap(),
            Move::Dirac(z) => Measure::dirac(z, 1.0).unwrap(),
        }
    }

    /// Strength against a coalescence measure that comes down.
    /// An atom at zero is always strong; otherwise `E[-log Y]` is finite here,
    /// so Kingman never sees a strong measure, and a regular coalescent with
    /// index `α` sees `z^-γ dz` as strong iff `α - γ <= 1`. A point mass has
    /// `E[(1-UY)^n] ~ 1/(nz)`, which is never strong.
    pub fn strong_against(self, coal: Coal) -> bool {
        match (self, coal) {
            (Move::Zero, _) => false,
            (Move::AtomZero(_), _) => true,
            (Move::PowerLaw(g), Coal::Beta(alpha)) => alpha - g <= 1.0,
            _ => false,
        }
    }
}

pub fn arb_move() -> impl Strategy<Value = Move> {
    prop_oneof![
        3 => Just(Move::Zero),
        1 => (0.1..1.0f64).prop_map(Move::AtomZero),
        2 => prop_oneof![Just(0.1), Just(0.4), Just(0.75), Just(0.9)].prop_map(Move::PowerLaw),
        1 => (0.2..0.8f64).prop_map(Move::Dirac),
    ]
}
