use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Selection;
use crate::model::{RationalTransfer, TransferMatrix};

/// Orders of one entry `q^-delay (b_0 + ... + b_{nb-1} q^-(nb-1)) / (1 + a_1 q^-1 + ... + a_na q^-na)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryOrders {
    pub nb: usize,
    pub na: usize,
    pub delay: usize,
}

impl EntryOrders {
    pub fn new(nb: usize, na: usize, delay: usize) -> Self {
        Self { nb, na, delay }
    }
}

impl Default for EntryOrders {
    fn default() -> Self {
        Self {
            nb: 1,
            na: 1,
            delay: 1,
        }
    }
}

/// Orders for one `(output, input)` pair; `None` marks a known zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryOverride {
    /// Zero-based node indices.
    pub output: usize,
    pub input: usize,
    pub orders: Option<EntryOrders>,
}

/// Requested orders of the model set. The noise model is `F^-1 C` with
/// `C = I + C_1 q^-1 + ... + C_nc q^-nc` and `F` diagonal monic of order `nf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOrders {
    #[serde(default)]
    pub g: EntryOrders,
    #[serde(default)]
    pub target: Option<EntryOrders>,
    #[serde(default)]
    pub overrides: Vec<EntryOverride>,
    #[serde(default = "one")]
    pub nc: usize,
    #[serde(default)]
    pub nf: usize,
    /// Restrict `C` to diagonal matrices.
    #[serde(default)]
    pub noise_diagonal: bool,
}

fn one() -> usize {
    1
}

impl Default for ModelOrders {
    fn default() -> Self {
        Self {
            g: EntryOrders::default(),
            target: None,
            overrides: Vec::new(),
            nc: 1,
            nf: 0,
            noise_diagonal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LambdaMode {
    Free,
    Fixed { lambda: Vec<Vec<f64>> },
}

impl LambdaMode {
    pub fn fixed(m: &DMatrix<f64>) -> Self {
        LambdaMode::Fixed {
            lambda: (0..m.nrows())
                .map(|r| m.row(r).iter().copied().collect())
                .collect(),
        }
    }

    pub fn matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            LambdaMode::Free => None,
            LambdaMode::Fixed { lambda } => {
                let n = lambda.len();
                Some(DMatrix::from_fn(n, n, |r, c| lambda[r][c]))
            }
        }
    }
}

/// One parameterized module entry and its slice of `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GEntry {
    /// Local row in `outputs` and column in `inputs`.
    pub row: usize,
    pub col: usize,
    pub output: usize,
    pub input: usize,
    pub orders: EntryOrders,
    pub offset: usize,
}

impl GEntry {
    pub fn len(&self) -> usize {
        self.orders.nb + self.orders.na
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameterized model set `(Gbar(theta), Hbar(theta), Lambda)`.
///
/// `theta` holds, in order, every module entry (`b` then `a` coefficients),
/// the `C_m` entries lag by lag (row-major, off-diagonals skipped when
/// diagonal), then the `F` coefficients output by output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStructure {
    /// Zero-based node indices, local order `[Q, o]`.
    pub outputs: Vec<usize>,
    /// Zero-based node indices, local order `[Q, U]`.
    pub inputs: Vec<usize>,
    /// `(j, i)` when the structure comes from an identification setup.
    pub target: Option<(usize, usize)>,
    pub entries: Vec<GEntry>,
    pub nc: usize,
    pub nf: usize,
    /// `(row, col)` pairs of `C_m` that are free, for every lag.
    pub c_pattern: Vec<(usize, usize)>,
    pub lambda: LambdaMode,
    c_offset: usize,
    f_offset: usize,
    dim: usize,
}

fn assemble(
    outputs: Vec<usize>,
    inputs: Vec<usize>,
    target: Option<(usize, usize)>,
    orders: &ModelOrders,
    lambda: LambdaMode,
) -> Result<ModelStructure> {
    let ny = outputs.len();
    if let Some(l) = lambda.matrix() {
        if l.shape() != (ny, ny) {
            return Err(Error::Dimension(
                "fixed Lambda does not match the outputs".into(),
            ));
        }
        if l.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument(
                "fixed Lambda must be positive definite".into(),
            ));
        }
    }
    let mut entries = Vec::new();
    let mut at = 0;
    for (row, &out) in outputs.iter().enumerate() {
        for (col, &inp) in inputs.iter().enumerate() {
            if inp == out {
                continue;
            }
            let is_target = target == Some((out, inp));
            let over = orders
                .overrides
                .iter()
                .find(|o| o.output == out && o.input == inp);
            let ord = match over {
                Some(o) => o.orders,
                None if is_target => Some(orders.target.unwrap_or(orders.g)),
                None => Some(orders.g),
            };
            if is_target && ord.is_none_or(|o| o.nb == 0) {
                return Err(Error::InvalidArgument(format!(
                    "target entry G{}{} needs a numerator order of at least 1",
                    out + 1,
                    inp + 1
                )));
            }
            let Some(ord) = ord else { continue };
            if ord.nb == 0 {
                continue;
            }
            entries.push(GEntry {
                row,
                col,
                output: out,
                input: inp,
                orders: ord,
                offset: at,
            });
            at += ord.nb + ord.na;
        }
    }
    let c_pattern: Vec<(usize, usize)> = (0..ny)
        .flat_map(|r| (0..ny).map(move |c| (r, c)))
        .filter(|&(r, c)| !orders.noise_diagonal || r == c)
        .collect();
    let c_offset = at;
    at += orders.nc * c_pattern.len();
    let f_offset = at;
    at += orders.nf * ny;
    Ok(ModelStructure {
        outputs,
        inputs,
        target,
        entries,
        nc: orders.nc,
        nf: orders.nf,
        c_pattern,
        lambda,
        c_offset,
        f_offset,
        dim: at,
    })
}

/// Model set for the MIMO setup of a selection: outputs `[Q, o]`, inputs
/// `[Q, U]`, hollow `Q` block, no `o` column.
pub fn build_model_set(
    sel: &Selection,
    orders: &ModelOrders,
    lambda: LambdaMode,
) -> Result<ModelStructure> {
    let mut outputs = sel.q.clone();
    outputs.extend(sel.o);
    let mut inputs = sel.q.clone();
    inputs.extend(&sel.u);
    assemble(outputs, inputs, Some((sel.j, sel.i)), orders, lambda)
}

/// Scalar-output structure for `w_j` with predictor inputs `dj`.
pub fn miso_structure(
    j: usize,
    dj: &[usize],
    orders: &ModelOrders,
    lambda: LambdaMode,
) -> Result<ModelStructure> {
    if dj.contains(&j) {
        return Err(Error::InvalidArgument(format!(
            "w{} cannot be its own predictor input",
            j + 1
        )));
    }
    let mut inputs = dj.to_vec();
    inputs.sort_unstable();
    inputs.dedup();
    assemble(vec![j], inputs, None, orders, lambda)
}

impl ModelStructure {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ny(&self) -> usize {
        self.outputs.len()
    }

    pub fn nd(&self) -> usize {
        self.inputs.len()
    }

    pub fn entry(&self, output: usize, input: usize) -> Option<&GEntry> {
        self.entries
            .iter()
            .find(|e| e.output == output && e.input == input)
    }

    /// True when `Gbar(output, input)` is fixed at zero (including inputs that are not predictor inputs).
    pub fn is_structural_zero(&self, output: usize, input: usize) -> bool {
        self.entry(output, input).is_none()
    }

    pub fn target_entry(&self) -> Option<&GEntry> {
        self.target.and_then(|(j, i)| self.entry(j, i))
    }

    /// Largest lag in any filter of the predictor.
    pub fn max_lag(&self) -> usize {
        let g = self
            .entries
            .iter()
            .map(|e| (e.orders.delay + e.orders.nb - 1).max(e.orders.na))
            .max()
            .unwrap_or(0);
        g.max(self.nc).max(self.nf)
    }

    /// `(b, a)` coefficient slices of an entry; `a` excludes the leading 1.
    pub fn entry_coeffs<'a>(&self, e: &GEntry, theta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let b = &theta[e.offset..e.offset + e.orders.nb];
        let a = &theta[e.offset + e.orders.nb..e.offset + e.len()];
        (b, a)
    }

    pub fn entry_transfer(&self, e: &GEntry, theta: &[f64]) -> RationalTransfer {
        let (b, a) = self.entry_coeffs(e, theta);
        let mut num = vec![0.0; e.orders.delay];
        num.extend_from_slice(b);
        let mut den = vec![1.0];
        den.extend_from_slice(a);
        RationalTransfer::new(num, den).expect("finite coefficients")
    }

    /// `theta` slice of an entry for a given transfer; errors when the transfer does not fit the orders.
    pub fn entry_theta(&self, e: &GEntry, g: &RationalTransfer) -> Result<Vec<f64>> {
        let num = g.num();
        let den = g.den();
        let EntryOrders { nb, na, delay } = e.orders;
        let fits = num
            .iter()
            .enumerate()
            .all(|(k, &c)| c == 0.0 || (k >= delay && k < delay + nb))
            && den.len() <= na + 1;
        if !fits && !g.is_zero() {
            return Err(Error::InvalidArgument(format!(
                "G{}{} does not fit orders (nb={nb}, na={na}, delay={delay})",
                e.output + 1,
                e.input + 1
            )));
        }
        let mut out: Vec<f64> = (0..nb)
            .map(|k| num.get(delay + k).copied().unwrap_or(0.0))
            .collect();
        out.extend((1..=na).map(|k| den.get(k).copied().unwrap_or(0.0)));
        if g.is_zero() {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(out)
    }

    /// `C_m` (m = 1..nc) as dense matrices.
    pub fn c_matrices(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        let ny = self.ny();
        let per = self.c_pattern.len();
        (0..self.nc)
            .map(|m| {
                let mut c = DMatrix::zeros(ny, ny);
                for (k, &(r, col)) in self.c_pattern.iter().enumerate() {
                    c[(r, col)] = theta[self.c_offset + m * per + k];
                }
                c
            })
            .collect()
    }

    /// `F_k` coefficients (without the leading 1) of output `k`.
    /// First `theta` index of the `C_m` block.
    pub fn c_offset(&self) -> usize {
        self.c_offset
    }

    pub fn f_offset(&self) -> usize {
        self.f_offset
    }

    pub fn f_coeffs<'a>(&self, theta: &'a [f64], k: usize) -> &'a [f64] {
        let s = self.f_offset + k * self.nf;
        &theta[s..s + self.nf]
    }

    /// Write noise parameters into `theta`.
    pub fn set_noise(&self, theta: &mut [f64], c: &[DMatrix<f64>], f: &[Vec<f64>]) {
        let per = self.c_pattern.len();
        for m in 0..self.nc {
            for (k, &(r, col)) in self.c_pattern.iter().enumerate() {
                theta[self.c_offset + m * per + k] = c.get(m).map(|cm| cm[(r, col)]).unwrap_or(0.0);
            }
        }
        for k in 0..self.ny() {
            for s in 0..self.nf {
                theta[self.f_offset + k * self.nf + s] =
                    f.get(k).and_then(|v| v.get(s)).copied().unwrap_or(0.0);
            }
        }
    }

    /// `Gbar(theta)` over `outputs x inputs`.
    pub fn gbar(&self, theta: &[f64]) -> TransferMatrix {
        let mut m = TransferMatrix::zeros(self.ny(), self.nd());
        for e in &self.entries {
            m.set(e.row, e.col, self.entry_transfer(e, theta));
        }
        m
    }

    /// `Hbar(theta) = F^-1 C` over `outputs x outputs`.
    pub fn hbar(&self, theta: &[f64]) -> TransferMatrix {
        let ny = self.ny();
        let c = self.c_matrices(theta);
        TransferMatrix::from_fn(ny, ny, |r, col| {
            let mut num = vec![if r == col { 1.0 } else { 0.0 }];
            num.extend(c.iter().map(|cm| cm[(r, col)]));
            let mut den = vec![1.0];
            den.extend_from_slice(self.f_coeffs(theta, r));
            RationalTransfer::new(num, den).expect("finite coefficients")
        })
    }

    /// Human-readable name of every coordinate of `theta` (one-based nodes).
    pub fn names(&self) -> Vec<String> {
        let mut v = Vec::with_capacity(self.dim);
        for e in &self.entries {
            let tag = format!("G{},{}", e.output + 1, e.input + 1);
            v.extend((0..e.orders.nb).map(|k| format!("{tag}.b{}", e.orders.delay + k)));
            v.extend((1..=e.orders.na).map(|k| format!("{tag}.a{k}")));
        }
        for m in 1..=self.nc {
            for &(r, c) in &self.c_pattern {
                v.push(format!(
                    "C{m}[{},{}]",
                    self.outputs[r] + 1,
                    self.outputs[c] + 1
                ));
            }
        }
        for &k in &self.outputs {
            v.extend((1..=self.nf).map(|s| format!("F{}.f{s}", k + 1)));
        }
        v
    }
}
