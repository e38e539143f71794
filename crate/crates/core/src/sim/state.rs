//! Multi-register quantum states.
//!
//! Basis states are packed into a `u128`, one bit field per register, and
//! only populated amplitudes are stored. Every operation in the pipeline is a
//! basis permutation or acts on a handful of small registers, so the support
//! stays proportional to the number of superposed index values regardless of
//! how wide the arithmetic registers are.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

/// Fixed-key hashing, so iteration order and therefore every floating-point
/// accumulation over a state is reproducible from run to run.
pub type StableMap<K, V> = HashMap<K, V, BuildHasherDefault<DefaultHasher>>;

/// Sparse amplitude storage keyed by packed basis index.
pub type AmplitudeMap = StableMap<u128, C64>;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::sim::fixed::FixedFormat;

/// Hard limit imposed by the `u128` basis packing.
pub const MAX_PACKED_QUBITS: usize = 128;
/// Default cap on the total qubit count of a layout.
pub const DEFAULT_QUBIT_CAP: usize = 128;

/// Amplitudes below this magnitude are dropped after each operation.
const PRUNE: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RegId(pub usize);

#[derive(Clone, Debug)]
pub struct Register {
    pub name: String,
    pub width: u32,
    pub offset: u32,
    pub format: Option<FixedFormat>,
}

impl Register {
    fn mask(&self) -> u128 {
        ((1u128 << self.width) - 1) << self.offset
    }
}

#[derive(Clone, Debug)]
pub struct RegisterLayout {
    regs: Vec<Register>,
    cap: usize,
}

impl RegisterLayout {
    pub fn new(cap: usize) -> Self {
        Self { regs: Vec::new(), cap: cap.min(MAX_PACKED_QUBITS) }
    }

    fn push(&mut self, name: &str, width: u32, format: Option<FixedFormat>) -> Result<RegId> {
        if width == 0 {
            return Err(Error::InvalidArgument(format!("register {name} has zero width")));
        }
        let offset = self.total_qubits() as u32;
        let required = offset as usize + width as usize;
        if required > self.cap {
            return Err(Error::CapExceeded { required, cap: self.cap });
        }
        self.regs.push(Register { name: name.to_string(), width, offset, format });
        Ok(RegId(self.regs.len() - 1))
    }

    /// Plain index register.
    pub fn add(&mut self, name: &str, width: u32) -> Result<RegId> {
        self.push(name, width, None)
    }

    /// Arithmetic register holding values in `format`.
    pub fn add_fixed(&mut self, name: &str, format: FixedFormat) -> Result<RegId> {
        self.push(name, format.width(), Some(format))
    }

    pub fn reg(&self, id: RegId) -> &Register {
        &self.regs[id.0]
    }

    pub fn find(&self, name: &str) -> Option<RegId> {
        self.regs.iter().position(|r| r.name == name).map(RegId)
    }

    pub fn registers(&self) -> &[Register] {
        &self.regs
    }

    pub fn total_qubits(&self) -> usize {
        self.regs.iter().map(|r| r.width as usize).sum()
    }

    pub fn get(&self, basis: u128, id: RegId) -> u64 {
        let r = &self.regs[id.0];
        ((basis & r.mask()) >> r.offset) as u64
    }

    pub fn set(&self, basis: u128, id: RegId, value: u64) -> u128 {
        let r = &self.regs[id.0];
        (basis & !r.mask()) | (((value as u128) << r.offset) & r.mask())
    }

    /// Decoded value of an arithmetic register (plain registers decode as
    /// unsigned integers).
    pub fn value(&self, basis: u128, id: RegId) -> f64 {
        let raw = self.get(basis, id);
        match self.regs[id.0].format {
            Some(f) => f.decode(raw),
            None => raw as f64,
        }
    }

    fn combined_mask(&self, ids: &[RegId]) -> u128 {
        ids.iter().fold(0, |m, id| m | self.regs[id.0].mask())
    }

    /// Index of the basis state within the sub-space spanned by `ids`
    /// (first register most significant).
    fn sub_index(&self, basis: u128, ids: &[RegId]) -> usize {
        ids.iter().fold(0usize, |acc, &id| (acc << self.regs[id.0].width) | self.get(basis, id) as usize)
    }

    fn with_sub_index(&self, mut basis: u128, ids: &[RegId], mut index: usize) -> u128 {
        for &id in ids.iter().rev() {
            let w = self.regs[id.0].width;
            basis = self.set(basis, id, (index & ((1usize << w) - 1)) as u64);
            index >>= w;
        }
        basis
    }

    fn sub_dim(&self, ids: &[RegId]) -> usize {
        1usize << ids.iter().map(|id| self.regs[id.0].width).sum::<u32>()
    }
}

/// Unit-norm state over a [`RegisterLayout`].
#[derive(Clone, Debug)]
pub struct QuantumState {
    layout: Arc<RegisterLayout>,
    amps: AmplitudeMap,
}

impl QuantumState {
    /// `|0…0⟩`.
    pub fn zero(layout: RegisterLayout) -> Self {
        let mut amps = AmplitudeMap::default();
        amps.insert(0u128, C64::new(1.0, 0.0));
        Self { layout: Arc::new(layout), amps }
    }

    pub fn from_amplitudes(layout: Arc<RegisterLayout>, amps: AmplitudeMap) -> Self {
        let mut s = Self { layout, amps };
        s.prune();
        s
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn layout_arc(&self) -> Arc<RegisterLayout> {
        self.layout.clone()
    }

    pub fn amplitudes(&self) -> &AmplitudeMap {
        &self.amps
    }

    pub fn amplitude(&self, basis: u128) -> C64 {
        self.amps.get(&basis).copied().unwrap_or_default()
    }

    pub fn support_size(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Degenerate("cannot normalize the zero vector".into()));
        }
        for a in self.amps.values_mut() {
            *a /= n;
        }
        Ok(())
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() > PRUNE);
    }

    /// Total probability of the basis states selected by `pred`.
    pub fn probability(&self, pred: impl Fn(u128) -> bool) -> f64 {
        self.amps.iter().filter(|(b, _)| pred(**b)).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &QuantumState) -> C64 {
        self.amps.iter().map(|(b, a)| a.conj() * other.amplitude(*b)).sum()
    }

    pub fn distance(&self, other: &QuantumState) -> f64 {
        let mut d: f64 = self.amps.iter().map(|(b, a)| (a - other.amplitude(*b)).norm_sqr()).sum();
        d += other.amps.iter().filter(|(b, _)| !self.amps.contains_key(b)).map(|(_, a)| a.norm_sqr()).sum::<f64>();
        d.sqrt()
    }

    /// Multiply every amplitude by a basis-dependent phase or scalar.
    pub fn scale_where(&mut self, f: impl Fn(u128) -> C64) {
        for (b, a) in self.amps.iter_mut() {
            *a *= f(*b);
        }
        self.prune();
    }

    /// `self += coeff * other`.
    pub fn add_scaled(&mut self, other: &QuantumState, coeff: C64) {
        for (b, a) in &other.amps {
            *self.amps.entry(*b).or_default() += coeff * a;
        }
        self.prune();
    }

    /// Apply a basis permutation. `f` must be injective on the support; a
    /// collision means the map was not a permutation and is reported.
    pub fn apply_permutation(&mut self, f: impl Fn(u128) -> Result<u128>) -> Result<()> {
        let mut next = AmplitudeMap::with_capacity_and_hasher(self.amps.len(), Default::default());
        for (b, a) in self.amps.drain() {
            let nb = f(b)?;
            if next.insert(nb, a).is_some() {
                return Err(Error::InvalidArgument("basis map is not injective".into()));
            }
        }
        self.amps = next;
        Ok(())
    }

    /// Apply a unitary to the registers `targets`, chosen per basis state
    /// by `op` from the bits of the remaining registers. `op` returning
    /// `None` leaves that branch untouched.
    pub fn apply_conditional(&mut self, targets: &[RegId], op: impl Fn(u128) -> Option<CMatrix>) -> Result<()> {
        let layout = self.layout.clone();
        let mask = layout.combined_mask(targets);
        let dim = layout.sub_dim(targets);
        let mut groups: StableMap<u128, Vec<(usize, C64)>> = StableMap::default();
        for (b, a) in self.amps.drain() {
            groups.entry(b & !mask).or_default().push((layout.sub_index(b, targets), a));
        }
        for (rest, entries) in groups {
            match op(rest) {
                None => {
                    for (k, a) in entries {
                        self.amps.insert(layout.with_sub_index(rest, targets, k), a);
                    }
                }
                Some(u) => {
                    if u.nrows() != dim || u.ncols() != dim {
                        return Err(Error::Dimension(format!("operator is {}x{}, registers span {dim}", u.nrows(), u.ncols())));
                    }
                    let mut v = DVector::<C64>::zeros(dim);
                    for (k, a) in &entries {
                        v[*k] = *a;
                    }
                    let w = u * v;
                    for (k, a) in w.iter().enumerate() {
                        if a.norm() > PRUNE {
                            self.amps.insert(layout.with_sub_index(rest, targets, k), *a);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Unconditional unitary on `targets`.
    pub fn apply_unitary(&mut self, targets: &[RegId], u: &CMatrix) -> Result<()> {
        self.apply_conditional(targets, |_| Some(u.clone()))
    }

    /// Dense amplitude vector over `regs` (first register most significant),
    /// requiring every other register to be `|0⟩`.
    pub fn dense_over(&self, regs: &[RegId]) -> Result<DVector<C64>> {
        let mask = self.layout.combined_mask(regs);
        let mut v = DVector::zeros(self.layout.sub_dim(regs));
        for (b, a) in &self.amps {
            if b & !mask != 0 {
                return Err(Error::InvalidArgument("registers outside the selection are not |0>".into()));
            }
            v[self.layout.sub_index(*b, regs)] = *a;
        }
        Ok(v)
    }

    /// Dense vector over `regs` after projecting all other registers onto
    /// `|0⟩` (unnormalized).
    pub fn project_dense(&self, regs: &[RegId]) -> DVector<C64> {
        let mask = self.layout.combined_mask(regs);
        let mut v = DVector::zeros(self.layout.sub_dim(regs));
        for (b, a) in &self.amps {
            if b & !mask == 0 {
                v[self.layout.sub_index(*b, regs)] = *a;
            }
        }
        v
    }

    /// Largest amplitude on basis states where any of `regs` is nonzero.
    pub fn max_amplitude_outside_zero(&self, regs: &[RegId]) -> f64 {
        let mask = self.layout.combined_mask(regs);
        self.amps.iter().filter(|(b, _)| *b & mask != 0).map(|(_, a)| a.norm()).fold(0.0, f64::max)
    }
}

/// Unitary (Householder reflection) taking `|0⟩` to the uniform
/// superposition over the first `count` basis states of a `2^width` register.
pub fn ranged_uniform(width: u32, count: usize) -> CMatrix {
    let dim = 1usize << width;
    let mut target = DVector::<C64>::zeros(dim);
    let amp = 1.0 / (count as f64).sqrt();
    for k in 0..count {
        target[k] = C64::new(amp, 0.0);
    }
    householder_to(&target)
}

/// Real reflection mapping `e_0` to the real unit vector `target`.
pub fn householder_to(target: &DVector<C64>) -> CMatrix {
    let dim = target.len();
    let mut u = target.clone();
    u[0] -= C64::new(1.0, 0.0);
    let nn = u.norm_squared();
    let id = CMatrix::identity(dim, dim);
    if nn < 1e-30 {
        return id;
    }
    id - (&u * u.adjoint()).scale(2.0 / nn)
}

pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)])
}

pub fn pauli_x() -> CMatrix {
    let (o, i) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    CMatrix::from_row_slice(2, 2, &[o, i, i, o])
}

/// `‖U†U − I‖_max`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    let d = u.adjoint() * u - CMatrix::identity(n, n);
    d.iter().fold(0.0, |m, z| m.max(z.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_regs() -> (RegisterLayout, RegId, RegId) {
        let mut l = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let a = l.add("a", 2).unwrap();
        let b = l.add("b", 3).unwrap();
        (l, a, b)
    }

    #[test]
    fn pack_unpack() {
        let (l, a, b) = two_regs();
        let basis = l.set(l.set(0, a, 3), b, 5);
        assert_eq!(l.get(basis, a), 3);
        assert_eq!(l.get(basis, b), 5);
    }

    #[test]
    fn cap_enforced() {
        let mut l = RegisterLayout::new(4);
        l.add("a", 3).unwrap();
        assert!(matches!(l.add("b", 2), Err(Error::CapExceeded { required: 5, cap: 4 })));
    }

    #[test]
    fn ranged_uniform_prep() {
        let (l, a, _) = two_regs();
        let mut s = QuantumState::zero(l);
        s.apply_unitary(&[a], &ranged_uniform(2, 3)).unwrap();
        let v = s.dense_over(&[a]).unwrap();
        for k in 0..3 {
            assert!((v[k].re - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        }
        assert!(v[3].norm() < 1e-14);
        assert!(unitarity_defect(&ranged_uniform(3, 5)) < 1e-12);
    }

    #[test]
    fn conditional_only_touches_selected_branches() {
        let (l, a, b) = two_regs();
        let mut s = QuantumState::zero(l);
        s.apply_unitary(&[a], &ranged_uniform(2, 2)).unwrap();
        let layout = s.layout_arc();
        let flip_low = CMatrix::from_fn(8, 8, |r, c| if r == c ^ 1 { C64::new(1.0, 0.0) } else { C64::default() });
        s.apply_conditional(&[b], |rest| (layout.get(rest, a) == 1).then(|| flip_low.clone())).unwrap();
        let amp = 0.5f64.sqrt();
        assert!((s.amplitude(0).re - amp).abs() < 1e-14);
        let flipped = layout.set(layout.set(0, a, 1), b, 1);
        assert!((s.amplitude(flipped).re - amp).abs() < 1e-14);
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_injective_map_rejected() {
        let (l, a, _) = two_regs();
        let mut s = QuantumState::zero(l);
        s.apply_unitary(&[a], &ranged_uniform(2, 4)).unwrap();
        assert!(s.apply_permutation(|_| Ok(0)).is_err());
    }
}
