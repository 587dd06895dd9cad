use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::rational::RationalTransfer;
use super::statespace::{StateSpace, STABILITY_MARGIN};
use super::tfmatrix::TransferMatrix;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Network `w = G w + R r + H e` with `cov(e) = Lambda`.
///
/// Node and signal indices are zero-based in memory and one-based in
/// documents.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub l: usize,
    pub k: usize,
    pub g: TransferMatrix,
    pub h: TransferMatrix,
    pub r: TransferMatrix,
    pub lambda: DMatrix<f64>,
    /// `w_adjacency[to][from]` is true iff `G[to][from] != 0`.
    pub w_adjacency: Vec<Vec<bool>>,
    /// Nonzero pattern of the disturbance spectrum `H Lambda H*`.
    pub noise_pattern: Vec<Vec<bool>>,
}

/// One entry of a transfer matrix in a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDoc {
    pub from: usize,
    pub to: usize,
    pub num: Vec<f64>,
    #[serde(default = "den_one")]
    pub den: Vec<f64>,
}

fn den_one() -> Vec<f64> {
    vec![1.0]
}

fn version_default() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseDoc {
    /// Entries of `H`; `from` is the noise source, `to` the node.
    #[serde(rename = "H", default, skip_serializing_if = "Vec::is_empty")]
    pub h: Vec<EntryDoc>,
    /// Boolean correlation pattern as unordered node pairs. Used only when
    /// `H` is absent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlation: Vec<[usize; 2]>,
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<Vec<f64>>>,
}

/// Serialised form of a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    #[serde(default = "version_default")]
    pub format_version: u32,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub modules: Vec<EntryDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseDoc>,
    /// Entries of `R`; `from` is the external signal, `to` the node.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excitation: Vec<EntryDoc>,
}

/// Parse a network document (JSON).
pub fn parse_network(text: &str) -> Result<NetworkSpec> {
    let doc: NetworkDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    NetworkSpec::from_document(&doc)
}

fn place(m: &mut TransferMatrix, e: &EntryDoc, rows: usize, cols: usize, what: &str) -> Result<()> {
    if e.to == 0 || e.to > rows || e.from == 0 || e.from > cols {
        return Err(Error::Dimension(format!(
            "{what} entry {} -> {} outside 1..{} x 1..{}",
            e.from, e.to, cols, rows
        )));
    }
    let (r, c) = (e.to - 1, e.from - 1);
    let tf = RationalTransfer::new(e.num.clone(), e.den.clone()).map_err(|err| {
        Error::InvalidNetwork(format!("{what} entry {} -> {}: {err}", e.from, e.to))
    })?;
    m.set(r, c, tf);
    Ok(())
}

fn check_duplicates(entries: &[EntryDoc], what: &str) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for e in entries {
        if !seen.insert((e.from, e.to)) {
            return Err(Error::InvalidNetwork(format!(
                "duplicate {what} entry {} -> {}",
                e.from, e.to
            )));
        }
    }
    Ok(())
}

/// Monic, stable, minimum-phase `H = I + 0.5 q^-1 E_kl` for each pair `k < l`
/// (noise `e_l` also drives node `k`). Fails when the pairs would imply extra
/// correlations that were not requested.
pub fn noise_from_pattern(l: usize, pairs: &[[usize; 2]]) -> Result<TransferMatrix> {
    let mut h = TransferMatrix::identity(l);
    let mut want = vec![vec![false; l]; l];
    for p in pairs {
        let (a, b) = (p[0].min(p[1]), p[0].max(p[1]));
        if a == 0 || b > l || a == b {
            return Err(Error::InvalidNetwork(format!(
                "bad correlation pair {:?}",
                p
            )));
        }
        h.set(a - 1, b - 1, RationalTransfer::delay(0.5, 1));
        want[a - 1][b - 1] = true;
        want[b - 1][a - 1] = true;
    }
    let got = spectrum_pattern(&h.pattern(), &DMatrix::identity(l, l));
    for a in 0..l {
        for b in 0..l {
            if a != b && got[a][b] && !want[a][b] {
                return Err(Error::InvalidNetwork(format!(
                    "correlation pattern not realisable by the pairwise rule (spurious pair {},{}); give H explicitly",
                    a + 1,
                    b + 1
                )));
            }
        }
    }
    Ok(h)
}

/// Boolean pattern of `H Lambda H^T`.
pub fn spectrum_pattern(hp: &[Vec<bool>], lambda: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = hp.len();
    let m = lambda.nrows();
    let mut hl = vec![vec![false; m]; n];
    for a in 0..n {
        for c in 0..m {
            hl[a][c] = (0..m).any(|s| hp[a][s] && lambda[(s, c)] != 0.0);
        }
    }
    (0..n)
        .map(|a| {
            (0..n)
                .map(|b| (0..m).any(|c| hl[a][c] && hp[b][c]))
                .collect()
        })
        .collect()
}

impl NetworkSpec {
    /// Assemble from matrices; derives the Boolean patterns. Only dimensions
    /// are checked here, see [`validate_network`] for the rest.
    pub fn new(
        g: TransferMatrix,
        h: TransferMatrix,
        r: TransferMatrix,
        lambda: DMatrix<f64>,
    ) -> Result<Self> {
        let l = g.rows();
        if g.cols() != l
            || h.rows() != l
            || h.cols() != l
            || r.rows() != l
            || lambda.shape() != (l, l)
        {
            return Err(Error::Dimension("G, H, R, Lambda sizes disagree".into()));
        }
        let k = r.cols();
        let w_adjacency = g.pattern();
        let noise_pattern = spectrum_pattern(&h.pattern(), &lambda);
        Ok(Self {
            l,
            k,
            g,
            h,
            r,
            lambda,
            w_adjacency,
            noise_pattern,
        })
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::InvalidNetwork(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let l = doc.l;
        if l == 0 {
            return Err(Error::Dimension("L must be positive".into()));
        }
        let k = doc
            .k
            .unwrap_or_else(|| doc.excitation.iter().map(|e| e.from).max().unwrap_or(0));
        check_duplicates(&doc.modules, "module")?;
        check_duplicates(&doc.excitation, "excitation")?;
        let mut g = TransferMatrix::zeros(l, l);
        for e in &doc.modules {
            place(&mut g, e, l, l, "module")?;
        }
        for d in 0..l {
            if !g.get(d, d).is_zero() {
                return Err(Error::InvalidNetwork(format!(
                    "non-hollow G (entry {} -> {})",
                    d + 1,
                    d + 1
                )));
            }
        }
        let mut r = TransferMatrix::zeros(l, k);
        for e in &doc.excitation {
            place(&mut r, e, l, k, "excitation")?;
        }
        let noise = doc.noise.clone().unwrap_or_default();
        let h = if !noise.h.is_empty() {
            if !noise.correlation.is_empty() {
                return Err(Error::InvalidNetwork(
                    "give either H or a correlation pattern, not both".into(),
                ));
            }
            check_duplicates(&noise.h, "H")?;
            let mut h = TransferMatrix::identity(l);
            for e in &noise.h {
                place(&mut h, e, l, l, "H")?;
            }
            h
        } else {
            noise_from_pattern(l, &noise.correlation)?
        };
        for d in 0..l {
            if (h.get(d, d).feedthrough() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidNetwork(format!(
                    "non-monic H diagonal (entry {})",
                    d + 1
                )));
            }
        }
        let lambda = match &noise.lambda {
            None => DMatrix::identity(l, l),
            Some(rows) => {
                if rows.len() != l || rows.iter().any(|r| r.len() != l) {
                    return Err(Error::Dimension(format!("Lambda must be {l}x{l}")));
                }
                DMatrix::from_fn(l, l, |a, b| rows[a][b])
            }
        };
        Self::new(g, h, r, lambda)
    }

    pub fn to_document(&self) -> NetworkDocument {
        let entries = |m: &TransferMatrix, skip_unit_diag: bool| {
            let mut out = Vec::new();
            for to in 0..m.rows() {
                for from in 0..m.cols() {
                    let e = m.get(to, from);
                    if e.is_zero() {
                        continue;
                    }
                    if skip_unit_diag && to == from && e == &RationalTransfer::one() {
                        continue;
                    }
                    out.push(EntryDoc {
                        from: from + 1,
                        to: to + 1,
                        num: e.num().to_vec(),
                        den: e.den().to_vec(),
                    });
                }
            }
            out
        };
        let h = entries(&self.h, true);
        let lambda = (0..self.l)
            .map(|a| (0..self.l).map(|b| self.lambda[(a, b)]).collect())
            .collect();
        NetworkDocument {
            format_version: FORMAT_VERSION,
            l: self.l,
            k: Some(self.k),
            modules: entries(&self.g, false),
            noise: Some(NoiseDoc {
                h: if h.is_empty() {
                    // An explicit unit diagonal keeps pattern synthesis out of play.
                    vec![EntryDoc {
                        from: 1,
                        to: 1,
                        num: vec![1.0],
                        den: vec![1.0],
                    }]
                } else {
                    h
                },
                correlation: Vec::new(),
                lambda: Some(lambda),
            }),
            excitation: entries(&self.r, false),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serialisation")
    }

    /// Realisation of `(I - G)^-1`.
    pub fn loop_system(&self) -> Result<StateSpace> {
        Ok(self.g.to_state_space().loop_inverse()?.minreal())
    }

    /// Realisation of `(I - G)^-1 [R H]` from `[r; e]` to `w`.
    pub fn full_system(&self) -> Result<StateSpace> {
        let drive = self.r.to_state_space().hstack(&self.h.to_state_space());
        Ok(self.loop_system()?.mul(&drive).minreal())
    }

    /// `true` iff `G[to][from] != 0`.
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.w_adjacency[to][from]
    }

    /// In-neighbours of node `j`, ascending.
    pub fn in_neighbors(&self, j: usize) -> Vec<usize> {
        (0..self.l).filter(|&k| self.w_adjacency[j][k]).collect()
    }
}

/// One pass/fail line of a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub checks: Vec<CheckItem>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckItem> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn validate_network(net: &NetworkSpec) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(CheckItem {
            name: name.to_string(),
            passed,
            detail,
        })
    };

    let nonhollow: Vec<usize> = (0..net.l)
        .filter(|&d| !net.g.get(d, d).is_zero())
        .map(|d| d + 1)
        .collect();
    push(
        "hollow_g",
        nonhollow.is_empty(),
        if nonhollow.is_empty() {
            String::new()
        } else {
            format!("nonzero diagonal at {:?}", nonhollow)
        },
    );

    let nonmonic: Vec<usize> = (0..net.l)
        .filter(|&d| (net.h.get(d, d).feedthrough() - 1.0).abs() > 1e-12)
        .map(|d| d + 1)
        .collect();
    push(
        "monic_h",
        nonmonic.is_empty(),
        if nonmonic.is_empty() {
            String::new()
        } else {
            format!("diagonal feedthrough != 1 at {:?}", nonmonic)
        },
    );

    let sym = (&net.lambda - net.lambda.transpose()).norm() <= 1e-12 * net.lambda.norm().max(1.0);
    let min_eig = if net.l == 0 {
        0.0
    } else {
        nalgebra::SymmetricEigen::new(net.lambda.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    push(
        "lambda_spd",
        sym && min_eig > 0.0,
        format!("symmetric={sym}, min eigenvalue={min_eig:.6e}"),
    );

    match net.loop_system() {
        Ok(s) => {
            let rho = s.spectral_radius();
            push(
                "network_stable",
                rho < STABILITY_MARGIN,
                format!("spectral radius of (I-G)^-1 = {rho:.9}"),
            );
        }
        Err(e) => push(
            "network_stable",
            false,
            format!("(I-G) not invertible: {e}"),
        ),
    }

    let hs = net.h.to_state_space();
    let rho = hs.spectral_radius();
    push(
        "h_stable",
        rho < STABILITY_MARGIN,
        format!("pole radius {rho:.9}"),
    );
    match hs.zeros_square() {
        Ok(z) => {
            let zr = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
            push(
                "h_minimum_phase",
                zr < STABILITY_MARGIN,
                format!("zero radius {zr:.9}"),
            );
        }
        Err(e) => push("h_minimum_phase", false, format!("H not invertible: {e}")),
    }

    let valid = checks.iter().all(|c| c.passed);
    ValidationReport { valid, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_defaults() {
        let net = parse_network(r#"{"L": 1, "modules": []}"#).unwrap();
        assert!(net.g.get(0, 0).is_zero());
        assert_eq!(net.h.get(0, 0), &RationalTransfer::one());
        assert!(validate_network(&net).valid);
    }

    #[test]
    fn rejects_self_loop() {
        let err = parse_network(r#"{"L": 2, "modules": [{"from": 2, "to": 2, "num": [0, 0.5]}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("non-hollow G"));
    }

    #[test]
    fn reports_syntax_position() {
        match parse_network("{\n  \"L\": 2,\n  oops\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pairwise_rule_rejects_spurious_correlation() {
        assert!(noise_from_pattern(3, &[[1, 3], [2, 3]]).is_err());
        assert!(noise_from_pattern(3, &[[1, 2], [2, 3]]).is_ok());
    }
}
