use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::structure::{build_model_set, miso_structure, LambdaMode, ModelOrders, ModelStructure};
use super::{identify_ml, identify_wls, Criterion, IdentifyConfig, PredictorData};
use crate::error::{Error, Result};
use crate::graph::Selection;
use crate::model::{NetworkSpec, StateSpace, TransferMatrix};
use crate::par::ExecPolicy;
use crate::simulation::{simulate, ExcitationConfig, DEFAULT_BURN_IN};
use crate::transform::transform_network;

/// Identification setup evaluated by [`montecarlo_bias`].
#[derive(Debug, Clone, PartialEq)]
pub enum Setup {
    /// MIMO predictor of a selection; the target is `(sel.j, sel.i)`.
    Mimo { sel: Selection, orders: ModelOrders },
    /// Scalar-output predictor of `w_j` from `dj`; `i` names the target input.
    Miso {
        j: usize,
        i: usize,
        dj: Vec<usize>,
        orders: ModelOrders,
    },
}

impl Setup {
    pub fn structure(&self) -> Result<ModelStructure> {
        match self {
            Setup::Mimo { sel, orders } => build_model_set(sel, orders, LambdaMode::Free),
            Setup::Miso { j, i, dj, orders } => {
                let mut ms = miso_structure(*j, dj, orders, LambdaMode::Free)?;
                if ms.entry(*j, *i).is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "w{} is not a predictor input of w{}",
                        i + 1,
                        j + 1
                    )));
                }
                ms.target = Some((*j, *i));
                Ok(ms)
            }
        }
    }

    fn label(&self) -> String {
        match self {
            Setup::Mimo { sel, .. } => format!("mimo G{}{}", sel.j + 1, sel.i + 1),
            Setup::Miso { j, i, .. } => format!("miso G{}{}", j + 1, i + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replicas: usize,
    pub n: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub excitation: ExcitationConfig,
    pub criterion: Criterion,
    pub identify: IdentifyConfig,
    /// Full true parameter vector; when absent only the target entry is scored.
    #[serde(default)]
    pub truth: Option<Vec<f64>>,
}

impl MonteCarloConfig {
    pub fn new(replicas: usize, n: usize, seed: u64, excitation: ExcitationConfig) -> Self {
        Self {
            replicas,
            n,
            seed,
            burn_in: DEFAULT_BURN_IN,
            excitation,
            criterion: Criterion::Wls,
            identify: IdentifyConfig::default(),
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStats {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    /// Sample standard deviation over replicas.
    pub std: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    /// `(mean - truth) / std_error`.
    pub z: f64,
    /// Mean of the per-replica asymptotic standard errors.
    pub mean_reported_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub setup: String,
    pub replicas: usize,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub coefficients: Vec<CoefficientStats>,
    /// Median over replicas of the Euclidean error of the scored coefficients.
    pub median_error: f64,
    /// Fraction of scored coefficients with `|z| > 3`.
    pub fraction_large_z: f64,
    pub failed_replicas: usize,
    pub unconverged_replicas: usize,
    pub warnings: Vec<String>,
    /// Scored coefficient vectors, one per successful replica.
    pub samples: Vec<Vec<f64>>,
}

/// `(S_Y - Gbar S_M)(I - G)^-1 R`: the excitation term of the transformed output equations.
pub fn transformed_excitation(net: &NetworkSpec, sel: &Selection) -> Result<TransferMatrix> {
    let tn = transform_network(net, sel)?;
    let imm = &tn.imm;
    let ny = imm.ny();
    let l = net.l;
    let pick = |rows: &[usize]| {
        StateSpace::gain(DMatrix::from_fn(rows.len(), l, |r, c| {
            if rows[r] == c {
                1.0
            } else {
                0.0
            }
        }))
    };
    let sy = pick(&imm.retained[..ny]);
    let sm = pick(&imm.retained);
    let sel_map = sy.sub(&tn.gbar_full.mul(&sm));
    let full = net.full_system()?;
    let cols: Vec<usize> = (0..net.k).collect();
    let all: Vec<usize> = (0..l).collect();
    Ok(sel_map
        .mul(&full.select(&all, &cols))
        .minreal()
        .to_transfer_matrix())
}

fn offset_for(net: &NetworkSpec, setup: &Setup) -> Result<Option<TransferMatrix>> {
    if net.k == 0 {
        return Ok(None);
    }
    match setup {
        Setup::Mimo { sel, .. } => transformed_excitation(net, sel).map(Some),
        Setup::Miso { j, .. } => {
            let cols: Vec<usize> = (0..net.k).collect();
            Ok(Some(net.r.submatrix(&[*j], &cols)))
        }
    }
}

/// Fit one replica and return its scored coefficients, reported standard errors and convergence.
fn replica(
    net: &NetworkSpec,
    ms: &ModelStructure,
    offset: Option<&TransferMatrix>,
    cfg: &MonteCarloConfig,
    seed: u64,
    scored: &[usize],
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let data = simulate(net, cfg.n, seed, &cfg.excitation, cfg.burn_in)?;
    let pd = PredictorData::new(ms, &data, offset)?;
    let mut icfg = cfg.identify;
    icfg.seed = seed;
    icfg.policy = ExecPolicy::Sequential;
    let ny = ms.ny();
    let est = match cfg.criterion {
        Criterion::Wls => identify_wls(ms, &pd, &DMatrix::identity(ny, ny), &icfg)?,
        Criterion::Ml => identify_ml(ms, &pd, &icfg)?,
    };
    let th = scored.iter().map(|&k| est.theta[k]).collect();
    let se = scored.iter().map(|&k| est.std_errors[k]).collect();
    Ok((th, se, est.diagnostics.converged))
}

/// Bias statistics of repeated fits on independent simulated records.
/// Replica `r` uses seed `cfg.seed + r`; replicas are spread by `cfg.identify.policy`
/// and each fit runs sequentially.
pub fn montecarlo_bias(
    net: &NetworkSpec,
    setup: &Setup,
    cfg: &MonteCarloConfig,
) -> Result<BiasReport> {
    if cfg.replicas < 2 {
        return Err(Error::InvalidArgument(
            "Monte-Carlo needs at least 2 replicas".into(),
        ));
    }
    let ms = setup.structure()?;
    let (scored, truth): (Vec<usize>, Vec<f64>) = match &cfg.truth {
        Some(t) => {
            if t.len() != ms.dim() {
                return Err(Error::Dimension(format!(
                    "truth has {} entries, model has {}",
                    t.len(),
                    ms.dim()
                )));
            }
            ((0..ms.dim()).collect(), t.clone())
        }
        None => {
            let e = ms
                .target_entry()
                .ok_or_else(|| Error::InvalidArgument("setup has no target entry".into()))?;
            let (j, i) = ms.target.expect("target entry implies target");
            let t = ms.entry_theta(e, net.g.get(j, i))?;
            ((e.offset..e.offset + e.len()).collect(), t)
        }
    };
    let offset = offset_for(net, setup)?;
    let seeds: Vec<u64> = (0..cfg.replicas as u64)
        .map(|r| cfg.seed.wrapping_add(r))
        .collect();
    let results = cfg.identify.policy.map(seeds.len(), |r| {
        replica(net, &ms, offset.as_ref(), cfg, seeds[r], &scored)
    });
    let mut samples = Vec::new();
    let mut reported = Vec::new();
    let mut failed = 0;
    let mut unconverged = 0;
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok((th, se, conv)) => {
                if !conv {
                    unconverged += 1;
                }
                samples.push(th);
                reported.push(se);
            }
            Err(e) if e.is_numerical() => failed += 1,
            Err(e) => return Err(e),
        }
    }
    let m = samples.len();
    if m < 2 {
        return Err(Error::numerical(
            "montecarlo",
            format!("only {m} replicas succeeded"),
        ));
    }
    if m == 2 {
        warnings.push("only 2 replicas: 1 degree of freedom, z-scores are unreliable".into());
    }
    if failed > 0 {
        warnings.push(format!("{failed} replicas failed numerically"));
    }
    let names = ms.names();
    let coefficients: Vec<CoefficientStats> = scored
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let xs: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            let std = var.sqrt();
            let se = std / (m as f64).sqrt();
            let z = if se > 0.0 {
                (mean - truth[c]) / se
            } else {
                f64::INFINITY * (mean - truth[c]).signum()
            };
            let mean_reported_se = reported.iter().map(|s| s[c]).sum::<f64>() / m as f64;
            CoefficientStats {
                name: names[k].clone(),
                truth: truth[c],
                mean,
                std,
                std_error: se,
                z,
                mean_reported_se,
            }
        })
        .collect();
    let mut errs: Vec<f64> = samples
        .iter()
        .map(|s| {
            s.iter()
                .zip(&truth)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    errs.sort_by(|a, b| a.total_cmp(b));
    let median_error = if m % 2 == 1 {
        errs[m / 2]
    } else {
        0.5 * (errs[m / 2 - 1] + errs[m / 2])
    };
    let large = coefficients.iter().filter(|c| !(c.z.abs() <= 3.0)).count();
    Ok(BiasReport {
        setup: setup.label(),
        replicas: cfg.replicas,
        n: cfg.n,
        seeds,
        fraction_large_z: large as f64 / coefficients.len().max(1) as f64,
        coefficients,
        median_error,
        failed_replicas: failed,
        unconverged_replicas: unconverged,
        warnings,
        samples,
    })
}
