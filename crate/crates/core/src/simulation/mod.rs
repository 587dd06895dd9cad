//! Data generation from a network, Welch spectrum estimates and the
//! informativity check.

mod informativity;
mod spectrum;

pub use informativity::{
    check_informativity, check_informativity_data, kappa_spectrum_model, InformativityConfig,
};
pub use spectrum::{estimate_spectrum, SpectralEstimate, WelchConfig};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkSpec, RationalTransfer, StateSpace};

/// Default number of discarded initial samples.
pub const DEFAULT_BURN_IN: usize = 1000;
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Shape of one external signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExcitationKind {
    Zero,
    White,
    /// White noise through `num / den`.
    FilteredWhite {
        num: Vec<f64>,
        den: Vec<f64>,
    },
    /// Sum of `lines` cosines at harmonics of `2 pi / period` with random phases.
    Multisine {
        lines: usize,
        period: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSignal {
    #[serde(flatten)]
    pub kind: ExcitationKind,
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed_offset: u64,
}

fn unit() -> f64 {
    1.0
}

/// One entry per external signal of the network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExcitationConfig {
    pub signals: Vec<ExcitationSignal>,
}

impl ExcitationConfig {
    /// Unit-variance white noise on each of `k` signals.
    pub fn white(k: usize, amplitude: f64) -> Self {
        let signals = (0..k)
            .map(|_| ExcitationSignal {
                kind: ExcitationKind::White,
                amplitude,
                seed_offset: 0,
            })
            .collect();
        Self { signals }
    }

    pub fn zero(k: usize) -> Self {
        let signals = (0..k)
            .map(|_| ExcitationSignal {
                kind: ExcitationKind::Zero,
                amplitude: 0.0,
                seed_offset: 0,
            })
            .collect();
        Self { signals }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.signals.len() != k {
            return Err(Error::InvalidArgument(format!(
                "excitation config has {} signals, network has {k}",
                self.signals.len()
            )));
        }
        for (n, s) in self.signals.iter().enumerate() {
            if !(s.amplitude >= 0.0 && s.amplitude.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "amplitude of r{} must be >= 0",
                    n + 1
                )));
            }
            match &s.kind {
                ExcitationKind::FilteredWhite { num, den } => {
                    let f = RationalTransfer::new(num.clone(), den.clone())?;
                    if f.pole_radius() >= 1.0 {
                        return Err(Error::InvalidArgument(format!(
                            "filter of r{} is unstable",
                            n + 1
                        )));
                    }
                }
                ExcitationKind::Multisine { lines, period } => {
                    if *lines == 0 || *period < 2 || 2 * lines > *period {
                        return Err(Error::InvalidArgument(format!(
                            "multisine of r{} needs 1 <= lines <= period / 2",
                            n + 1
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Power spectral density of signal `k` at `w`; multisines have a line
    /// spectrum and contribute zero density.
    pub fn density(&self, k: usize, w: f64) -> f64 {
        let s = &self.signals[k];
        let a2 = s.amplitude * s.amplitude;
        match &s.kind {
            ExcitationKind::Zero | ExcitationKind::Multisine { .. } => 0.0,
            ExcitationKind::White => a2,
            ExcitationKind::FilteredWhite { num, den } => {
                let f = RationalTransfer::new(num.clone(), den.clone()).expect("validated filter");
                a2 * f.freq(w).norm_sqr()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub burn_in: usize,
    pub excitation: ExcitationConfig,
}

/// Simulated node and external signals, `w[k][t]` and `r[k][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub format_version: u32,
    pub n: usize,
    pub seed: u64,
    pub w: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn nodes(&self) -> usize {
        self.w.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Dataset = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        if d.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported dataset format_version {}",
                d.format_version
            )));
        }
        if d.w.iter().chain(&d.r).any(|s| s.len() != d.n) {
            return Err(Error::Dimension("series lengths disagree with n".into()));
        }
        if d.w.iter().chain(&d.r).flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(d)
    }
}

/// Square-root factor `F` with `F F^T = Lambda` for a PSD `Lambda`.
fn sqrt_factor(lambda: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = lambda.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = lambda.clone().symmetric_eigen();
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-300);
    if eig.eigenvalues.iter().any(|&v| v < -1e-12 * scale) {
        return Err(Error::InvalidNetwork(
            "Lambda is not positive semidefinite".into(),
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d)
}

fn excitation_series(sig: &ExcitationSignal, k: usize, seed: u64, total: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + k as u64 + sig.seed_offset);
    let a = sig.amplitude;
    match &sig.kind {
        ExcitationKind::Zero => vec![0.0; total],
        ExcitationKind::White => (0..total)
            .map(|_| a * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        ExcitationKind::FilteredWhite { num, den } => {
            let f = RationalTransfer::new(num.clone(), den.clone()).expect("validated filter");
            let x: Vec<f64> = (0..total)
                .map(|_| a * rng.sample::<f64, _>(StandardNormal))
                .collect();
            StateSpace::from_rational(&f).simulate(&[x]).swap_remove(0)
        }
        ExcitationKind::Multisine { lines, period } => {
            let phases: Vec<f64> = (0..*lines)
                .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                .collect();
            let g = a * (2.0 / *lines as f64).sqrt();
            (0..total)
                .map(|t| {
                    (1..=*lines)
                        .map(|m| {
                            let w = std::f64::consts::TAU * m as f64 / *period as f64;
                            (w * t as f64 + phases[m - 1]).cos()
                        })
                        .sum::<f64>()
                        * g
                })
                .collect()
        }
    }
}

/// Simulate `w = (I - G)^-1 (R r + H e)` from zero state, discarding `burn_in` samples.
pub fn simulate(
    net: &NetworkSpec,
    n: usize,
    seed: u64,
    exc: &ExcitationConfig,
    burn_in: usize,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    exc.validate(net.k)?;
    let sys = net
        .full_system()
        .map_err(|e| Error::numerical("simulation", format!("network is not well-posed: {e}")))?;
    if !sys.is_stable() {
        return Err(Error::numerical("simulation", "network is unstable"));
    }
    let total = n + burn_in;
    let l = net.l;
    let f = sqrt_factor(&net.lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut e = vec![vec![0.0; total]; l];
    let mut z = vec![0.0; l];
    for t in 0..total {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for (a, row) in e.iter_mut().enumerate() {
            row[t] = (0..l).map(|b| f[(a, b)] * z[b]).sum();
        }
    }
    let r: Vec<Vec<f64>> = exc
        .signals
        .iter()
        .enumerate()
        .map(|(k, s)| excitation_series(s, k, seed, total))
        .collect();
    let mut inputs = r.clone();
    inputs.extend(e);
    let w_all = sys.simulate(&inputs);
    if w_all.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numerical("simulation", "non-finite samples"));
    }
    let cut = |s: Vec<f64>| s[burn_in..].to_vec();
    Ok(Dataset {
        format_version: DATASET_FORMAT_VERSION,
        n,
        seed,
        w: w_all.into_iter().map(cut).collect(),
        r: r.into_iter().map(cut).collect(),
        meta: DatasetMeta {
            generator: format!("netident {}", env!("CARGO_PKG_VERSION")),
            burn_in,
            excitation: exc.clone(),
        },
    })
}
