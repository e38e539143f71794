//! Reversible fixed-point arithmetic oracles `|x⟩|z⟩ → |x⟩|z ⊕ enc(f(x))⟩`.

use crate::error::Result;
use crate::sim::resources::StageCounters;
use crate::sim::state::{QuantumState, RegId, RegisterLayout};

/// Affine expressions over decoded register values.
#[derive(Clone, Debug)]
pub enum Expr {
    Reg(RegId),
    Const(f64),
    Sub(Box<Expr>, Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn reg(r: RegId) -> Self {
        Expr::Reg(r)
    }
    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Sub(Box::new(a), Box::new(b))
    }
    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::Add(Box::new(a), Box::new(b))
    }
    pub fn mul(a: Expr, b: Expr) -> Self {
        Expr::Mul(Box::new(a), Box::new(b))
    }
    /// `k · x`.
    pub fn scale(k: f64, x: Expr) -> Self {
        Expr::mul(Expr::Const(k), x)
    }

    pub fn eval(&self, layout: &RegisterLayout, basis: u128) -> f64 {
        match self {
            Expr::Reg(r) => layout.value(basis, *r),
            Expr::Const(c) => *c,
            Expr::Sub(a, b) => a.eval(layout, basis) - b.eval(layout, basis),
            Expr::Add(a, b) => a.eval(layout, basis) + b.eval(layout, basis),
            Expr::Mul(a, b) => a.eval(layout, basis) * b.eval(layout, basis),
        }
    }

    fn registers(&self, out: &mut Vec<RegId>) {
        match self {
            Expr::Reg(r) => out.push(*r),
            Expr::Const(_) => {}
            Expr::Sub(a, b) | Expr::Add(a, b) | Expr::Mul(a, b) => {
                a.registers(out);
                b.registers(out);
            }
        }
    }

    fn ops(&self) -> u64 {
        match self {
            Expr::Reg(_) | Expr::Const(_) => 0,
            Expr::Sub(a, b) | Expr::Add(a, b) | Expr::Mul(a, b) => 1 + a.ops() + b.ops(),
        }
    }
}

/// XOR `enc(expr)` into `out` on branches selected by `control`. `out` must be
/// an arithmetic register and must not appear in `expr`. A result that does
/// not fit the output format is an error.
pub fn arithmetic_oracle_where(
    state: &mut QuantumState,
    expr: &Expr,
    out: RegId,
    control: impl Fn(u128) -> bool,
    counters: &mut StageCounters,
) -> Result<()> {
    let layout = state.layout_arc();
    let format = layout.reg(out).format.ok_or_else(|| {
        crate::error::Error::InvalidArgument(format!("register {} has no fixed-point format", layout.reg(out).name))
    })?;
    let mut inputs = Vec::new();
    expr.registers(&mut inputs);
    if inputs.contains(&out) {
        return Err(crate::error::Error::InvalidArgument("output register appears in its own expression".into()));
    }
    state.apply_permutation(|b| {
        if !control(b) {
            return Ok(b);
        }
        let code = format.encode(expr.eval(&layout, b))?;
        Ok(layout.set(b, out, layout.get(b, out) ^ code))
    })?;
    counters.gates += expr.ops() * format.width() as u64 * format.width() as u64;
    Ok(())
}

pub fn arithmetic_oracle(state: &mut QuantumState, expr: &Expr, out: RegId, counters: &mut StageCounters) -> Result<()> {
    arithmetic_oracle_where(state, expr, out, |_| true, counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fixed::FixedFormat;
    use crate::sim::state::DEFAULT_QUBIT_CAP;

    fn load(values: &[(RegId, f64)], layout: RegisterLayout) -> QuantumState {
        let mut s = QuantumState::zero(layout);
        let lay = s.layout_arc();
        s.apply_permutation(|b| {
            Ok(values.iter().fold(b, |acc, (r, v)| {
                let code = match lay.reg(*r).format {
                    Some(f) => f.encode(*v).unwrap(),
                    None => *v as u64,
                };
                lay.set(acc, *r, code)
            }))
        })
        .unwrap();
        s
    }

    fn value_of(s: &QuantumState, r: RegId) -> f64 {
        let b = *s.amplitudes().keys().next().unwrap();
        s.layout().value(b, r)
    }

    #[test]
    fn exact_doubling() {
        let mut l = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let x = l.add_fixed("x", FixedFormat::default()).unwrap();
        let z = l.add_fixed("z", FixedFormat::default()).unwrap();
        let mut s = load(&[(x, 2.5)], l);
        arithmetic_oracle(&mut s, &Expr::scale(2.0, Expr::reg(x)), z, &mut StageCounters::default()).unwrap();
        assert_eq!(value_of(&s, z), 5.0);
    }

    #[test]
    fn equal_operands_subtract_to_zero() {
        let mut l = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let x = l.add_fixed("x", FixedFormat::default()).unwrap();
        let y = l.add_fixed("y", FixedFormat::default()).unwrap();
        let z = l.add_fixed("z", FixedFormat::default()).unwrap();
        let mut s = load(&[(x, 1.375), (y, 1.375)], l);
        arithmetic_oracle(&mut s, &Expr::sub(Expr::reg(x), Expr::reg(y)), z, &mut StageCounters::default()).unwrap();
        assert_eq!(value_of(&s, z), 0.0);
    }

    #[test]
    fn class_sum_combination() {
        // n' x − n_i y with n' = 3, x = 1.5, n_i = 2 (integer register), y = 1.0
        let mut l = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let x = l.add_fixed("x", FixedFormat::default()).unwrap();
        let y = l.add_fixed("y", FixedFormat::default()).unwrap();
        let ni = l.add("n_i", 3).unwrap();
        let z = l.add_fixed("z", FixedFormat::default()).unwrap();
        let mut s = load(&[(x, 1.5), (y, 1.0), (ni, 2.0)], l);
        let expr = Expr::sub(Expr::scale(3.0, Expr::reg(x)), Expr::mul(Expr::reg(ni), Expr::reg(y)));
        arithmetic_oracle(&mut s, &expr, z, &mut StageCounters::default()).unwrap();
        assert_eq!(value_of(&s, z), 2.5);
        // applying twice restores the output register
        arithmetic_oracle(&mut s, &expr, z, &mut StageCounters::default()).unwrap();
        assert_eq!(value_of(&s, z), 0.0);
    }

    #[test]
    fn overflow_rejected() {
        let mut l = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let x = l.add_fixed("x", FixedFormat::default()).unwrap();
        let z = l.add_fixed("z", FixedFormat::default()).unwrap();
        let mut s = load(&[(x, 10.0)], l);
        assert!(arithmetic_oracle(&mut s, &Expr::scale(2.0, Expr::reg(x)), z, &mut StageCounters::default()).is_err());
    }
}
