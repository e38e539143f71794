//! Table-backed oracle unitaries `|i⟩|j⟩|z⟩ → |i⟩|j⟩|z ⊕ enc(T_ij)⟩` and exact
//! index-arithmetic permutations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sim::fixed::FixedFormat;
use crate::sim::resources::StageCounters;
use crate::sim::state::{QuantumState, RegId};

/// A classical table with pre-encoded fixed-point codes.
#[derive(Clone, Debug)]
pub struct OracleTable {
    pub name: String,
    values: DMatrix<f64>,
    codes: DMatrix<u64>,
    pub format: FixedFormat,
    /// Cost of one access, `⌈log2(rows·cols)⌉` gates.
    pub access_cost: f64,
}

impl OracleTable {
    /// Encodes every entry up front; an entry that does not fit `format`
    /// rejects the whole table.
    pub fn new(name: &str, values: DMatrix<f64>, format: FixedFormat) -> Result<Self> {
        let mut codes = DMatrix::zeros(values.nrows(), values.ncols());
        for (k, v) in values.iter().enumerate() {
            codes[k] = format.encode(*v)?;
        }
        let size = (values.nrows() * values.ncols()).max(2) as f64;
        Ok(Self { name: name.to_string(), values, codes, format, access_cost: size.log2().ceil() })
    }

    /// Column vector table `|i⟩|0⟩ → |i⟩|v_i⟩`.
    pub fn column(name: &str, values: &[f64], format: FixedFormat) -> Result<Self> {
        Self::new(name, DMatrix::from_column_slice(values.len(), 1, values), format)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }
    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// The value the oracle actually writes (quantized).
    pub fn stored(&self, i: usize, j: usize) -> f64 {
        self.format.decode(self.codes[(i, j)])
    }

    pub fn code(&self, i: usize, j: usize) -> Option<u64> {
        (i < self.rows() && j < self.cols()).then(|| self.codes[(i, j)])
    }
}

/// XOR the encoded table entry into `out`. Index values outside the table
/// leave the branch unchanged. `col` is `None` for column tables.
pub fn apply_oracle(
    state: &mut QuantumState,
    table: &OracleTable,
    row: RegId,
    col: Option<RegId>,
    out: RegId,
    counters: &mut StageCounters,
) -> Result<()> {
    apply_oracle_where(state, table, row, col, out, |_| true, counters)
}

/// Controlled form of [`apply_oracle`]: only branches where `control` holds
/// are touched.
pub fn apply_oracle_where(
    state: &mut QuantumState,
    table: &OracleTable,
    row: RegId,
    col: Option<RegId>,
    out: RegId,
    control: impl Fn(u128) -> bool,
    counters: &mut StageCounters,
) -> Result<()> {
    let layout = state.layout_arc();
    if layout.reg(out).width < table.format.width() {
        return Err(Error::Dimension(format!(
            "output register {} has {} qubits, table {} needs {}",
            layout.reg(out).name,
            layout.reg(out).width,
            table.name,
            table.format.width()
        )));
    }
    state.apply_permutation(|b| {
        if !control(b) {
            return Ok(b);
        }
        let i = layout.get(b, row) as usize;
        let j = col.map(|c| layout.get(b, c) as usize).unwrap_or(0);
        Ok(match table.code(i, j) {
            Some(code) => layout.set(b, out, layout.get(b, out) ^ code),
            None => b,
        })
    })?;
    counters.query(&table.name, 1, table.access_cost);
    Ok(())
}

/// `|x⟩|z⟩ → |x⟩|z ⊕ f(x)⟩` for an integer index function, e.g. `j − n` or
/// `(i−1)n' + j`. Inputs where `f` is undefined are left unchanged.
pub fn apply_index_map(
    state: &mut QuantumState,
    inputs: &[RegId],
    out: RegId,
    f: impl Fn(&[u64]) -> Option<u64>,
    counters: &mut StageCounters,
) -> Result<()> {
    let layout = state.layout_arc();
    let width = layout.reg(out).width;
    state.apply_permutation(|b| {
        let args: Vec<u64> = inputs.iter().map(|&r| layout.get(b, r)).collect();
        match f(&args) {
            Some(v) if v >> width == 0 => Ok(layout.set(b, out, layout.get(b, out) ^ v)),
            Some(v) => Err(Error::Overflow { value: v as f64, format: format!("{width}-qubit index") }),
            None => Ok(b),
        }
    })?;
    counters.gates += width as u64 * inputs.len() as u64;
    Ok(())
}

/// `|x⟩|z⟩ → |x⟩|z ⊕ enc(f(x))⟩` for a classically tabulated function of
/// several index registers, on branches where `control` holds. `out` must
/// carry a fixed-point format. Query charging is left to the caller.
pub fn apply_lookup(
    state: &mut QuantumState,
    inputs: &[RegId],
    out: RegId,
    f: impl Fn(&[u64]) -> Option<f64>,
    control: impl Fn(u128) -> bool,
) -> Result<()> {
    let layout = state.layout_arc();
    let format = layout
        .reg(out)
        .format
        .ok_or_else(|| Error::InvalidArgument(format!("register {} has no fixed-point format", layout.reg(out).name)))?;
    state.apply_permutation(|b| {
        if !control(b) {
            return Ok(b);
        }
        let args: Vec<u64> = inputs.iter().map(|&r| layout.get(b, r)).collect();
        match f(&args) {
            Some(v) => Ok(layout.set(b, out, layout.get(b, out) ^ format.encode(v)?)),
            None => Ok(b),
        }
    })
}
