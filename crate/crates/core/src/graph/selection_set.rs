use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index sets of an identification setup (zero-based).
///
/// `Y = Q ∪ {o}`, `D = Q ∪ U`, `U = A ∪ B`, `Z = L \ (D ∪ Y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub l: usize,
    pub j: usize,
    pub i: usize,
    pub y: Vec<usize>,
    pub q: Vec<usize>,
    pub o: Option<usize>,
    pub u: Vec<usize>,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub d: Vec<usize>,
    pub z: Vec<usize>,
}

fn norm(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

impl Selection {
    /// Build from outputs `y`, inputs `d` and the blocking set `b ⊆ U`.
    pub fn new(
        l: usize,
        i: usize,
        j: usize,
        y: &[usize],
        d: &[usize],
        b: &[usize],
    ) -> Result<Self> {
        let y = norm(y);
        let d = norm(d);
        let b = norm(b);
        if y.iter().chain(&d).chain(&b).any(|&k| k >= l) || i >= l || j >= l {
            return Err(Error::InvalidArgument("node index out of range".into()));
        }
        if !d.contains(&i) {
            return Err(Error::InvalidArgument(format!(
                "target input w{} not in D",
                i + 1
            )));
        }
        if !y.contains(&j) {
            return Err(Error::InvalidArgument(format!(
                "target output w{} not in Y",
                j + 1
            )));
        }
        let q: Vec<usize> = y.iter().copied().filter(|k| d.contains(k)).collect();
        let rest: Vec<usize> = y.iter().copied().filter(|k| !d.contains(k)).collect();
        let o = match rest.as_slice() {
            [] => None,
            [k] if *k == j => Some(j),
            _ => {
                return Err(Error::InvalidArgument(
                    "every output other than the target output must also be an input".into(),
                ))
            }
        };
        let u: Vec<usize> = d.iter().copied().filter(|k| !q.contains(k)).collect();
        if let Some(&k) = b.iter().find(|k| !u.contains(k)) {
            return Err(Error::InvalidArgument(format!(
                "B node w{} is not in U = D \\ Q",
                k + 1
            )));
        }
        let a: Vec<usize> = u.iter().copied().filter(|k| !b.contains(k)).collect();
        let z: Vec<usize> = (0..l)
            .filter(|k| !d.contains(k) && !y.contains(k))
            .collect();
        Ok(Self {
            l,
            j,
            i,
            y,
            q,
            o,
            u,
            a,
            b,
            d,
            z,
        })
    }

    /// Retained node order `[Q, o, U]`.
    pub fn retained(&self) -> Vec<usize> {
        let mut m = self.q.clone();
        m.extend(self.o);
        m.extend(&self.u);
        m
    }

    /// Outputs in model order `[Q, o]`.
    pub fn outputs(&self) -> Vec<usize> {
        let mut m = self.q.clone();
        m.extend(self.o);
        m
    }

    /// Inputs in model order `[Q, U]`.
    pub fn inputs(&self) -> Vec<usize> {
        let mut m = self.q.clone();
        m.extend(&self.u);
        m
    }

    pub fn to_doc(&self) -> SelectionDoc {
        let ob = |v: &[usize]| v.iter().map(|k| k + 1).collect::<Vec<_>>();
        SelectionDoc {
            j: self.j + 1,
            i: self.i + 1,
            y: ob(&self.y),
            d: ob(&self.d),
            b: ob(&self.b),
            q: Some(ob(&self.q)),
            o: self.o.map(|k| k + 1),
            u: Some(ob(&self.u)),
            a: Some(ob(&self.a)),
            z: Some(ob(&self.z)),
        }
    }

    pub fn from_doc(l: usize, doc: &SelectionDoc) -> Result<Self> {
        let zb = |v: &[usize]| -> Result<Vec<usize>> {
            v.iter()
                .map(|&k| {
                    if k == 0 || k > l {
                        Err(Error::InvalidArgument(format!(
                            "node index {k} outside 1..{l}"
                        )))
                    } else {
                        Ok(k - 1)
                    }
                })
                .collect()
        };
        if doc.i == 0 || doc.j == 0 {
            return Err(Error::InvalidArgument("node indices are one-based".into()));
        }
        let sel = Self::new(
            l,
            doc.i - 1,
            doc.j - 1,
            &zb(&doc.y)?,
            &zb(&doc.d)?,
            &zb(&doc.b)?,
        )?;
        if let Some(a) = &doc.a {
            if norm(&zb(a)?) != sel.a {
                return Err(Error::InvalidArgument(
                    "A inconsistent with D, Y and B".into(),
                ));
            }
        }
        Ok(sel)
    }
}

/// One-based serialised selection. Derived sets are informational on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub j: usize,
    pub i: usize,
    #[serde(rename = "Y")]
    pub y: Vec<usize>,
    #[serde(rename = "D")]
    pub d: Vec<usize>,
    #[serde(rename = "B", default)]
    pub b: Vec<usize>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o: Option<usize>,
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<usize>>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<usize>>,
    #[serde(rename = "Z", default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<usize>>,
}
