//! Network parameter pack and training configuration, with stable JSON
//! wire shapes for both.

use crate::error::{Error, Result};
use crate::microlocal::CanonicalLink;
use crate::paraproduct::ParaNetParams;
use serde::{Deserialize, Serialize};

/// All parameters of a K-patch, depth-M network: per-patch wave speeds,
/// pairwise propagation links, per-patch activation chains for the layers
/// two through M, and the width of the characteristic cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThetaWire", into = "ThetaWire")]
pub struct Theta {
    k: usize,
    m: usize,
    pub delta: f64,
    pub gamma_delta: f64,
    pub c_diag: Vec<f64>,
    links: Vec<CanonicalLink>,
    activ: Vec<Vec<ParaNetParams>>,
}

impl Theta {
    /// Links come ordered row-major over ordered pairs (i, j), i != j.
    /// A depth-M network runs M - 1 activation stages, so each patch
    /// carries exactly M - 1 chains.
    pub fn new(
        m: usize,
        delta: f64,
        gamma_delta: f64,
        c_diag: Vec<f64>,
        links: Vec<CanonicalLink>,
        activ: Vec<Vec<ParaNetParams>>,
    ) -> Result<Theta> {
        let k = c_diag.len();
        if k == 0 {
            return Err(Error::NetworkValidation("need at least one patch".into()));
        }
        if m == 0 {
            return Err(Error::NetworkValidation("depth must be at least one".into()));
        }
        if !(delta.is_finite() && delta > 0.0) || !(gamma_delta.is_finite() && gamma_delta > 0.0) {
            return Err(Error::NetworkValidation("delta and gamma_delta must be positive".into()));
        }
        if !c_diag.iter().all(|&c| c.is_finite() && c > 0.0) {
            return Err(Error::NetworkValidation("diagonal speeds must be positive".into()));
        }
        if links.len() != k * (k.max(1) - 1) {
            return Err(Error::NetworkValidation(format!(
                "want {} links, got {}",
                k * (k - 1),
                links.len()
            )));
        }
        let mut pos = 0;
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                if links[pos].i != i || links[pos].j != j {
                    return Err(Error::NetworkValidation(format!(
                        "link {pos} is ({}, {}), want ({i}, {j})",
                        links[pos].i, links[pos].j
                    )));
                }
                pos += 1;
            }
        }
        if activ.len() != k || activ.iter().any(|rows| rows.len() != m - 1) {
            return Err(Error::NetworkValidation(format!(
                "want {} activation chains per patch",
                m - 1
            )));
        }
        Ok(Theta { k, m, delta, gamma_delta, c_diag, links, activ })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn links(&self) -> &[CanonicalLink] {
        &self.links
    }

    /// Propagation link feeding patch i from patch j.
    pub fn link(&self, i: usize, j: usize) -> &CanonicalLink {
        debug_assert!(i != j);
        &self.links[i * (self.k - 1) + if j < i { j } else { j - 1 }]
    }

    pub fn link_mut(&mut self, i: usize, j: usize) -> &mut CanonicalLink {
        debug_assert!(i != j);
        &mut self.links[i * (self.k - 1) + if j < i { j } else { j - 1 }]
    }

    /// Activation chain of patch i used when forming layer `stage + 2`.
    pub fn chain(&self, i: usize, stage: usize) -> &ParaNetParams {
        &self.activ[i][stage]
    }

    pub fn chain_mut(&mut self, i: usize, stage: usize) -> &mut ParaNetParams {
        &mut self.activ[i][stage]
    }

    pub fn stages(&self) -> usize {
        self.m - 1
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Theta> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivRow {
    i: usize,
    k: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThetaWire {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    delta: f64,
    gamma_delta: f64,
    c_diag: Vec<f64>,
    links: Vec<CanonicalLink>,
    activ: Vec<ActivRow>,
}

impl From<Theta> for ThetaWire {
    fn from(t: Theta) -> ThetaWire {
        let mut activ = Vec::new();
        for (i, rows) in t.activ.iter().enumerate() {
            for (stage, p) in rows.iter().enumerate() {
                activ.push(ActivRow {
                    i,
                    k: stage + 1,
                    a: p.pairs.iter().map(|&(a, _)| a).collect(),
                    b: p.pairs.iter().map(|&(_, b)| b).collect(),
                });
            }
        }
        ThetaWire {
            k: t.k,
            m: t.m,
            delta: t.delta,
            gamma_delta: t.gamma_delta,
            c_diag: t.c_diag,
            links: t.links,
            activ,
        }
    }
}

impl TryFrom<ThetaWire> for Theta {
    type Error = String;

    fn try_from(w: ThetaWire) -> std::result::Result<Theta, String> {
        if w.k != w.c_diag.len() {
            return Err("K does not match c_diag length".into());
        }
        let stages = w.m.checked_sub(1).ok_or("M must be at least one")?;
        let mut activ = vec![vec![None; stages]; w.k];
        for row in &w.activ {
            if row.i >= w.k || row.k == 0 || row.k > stages {
                return Err(format!("activation row ({}, {}) out of range", row.i, row.k));
            }
            if row.a.len() != row.b.len() {
                return Err("activation a/b lengths differ".into());
            }
            let pairs = row.a.iter().copied().zip(row.b.iter().copied()).collect();
            let p = ParaNetParams::new(pairs).map_err(|e| e.to_string())?;
            if activ[row.i][row.k - 1].replace(p).is_some() {
                return Err(format!("duplicate activation row ({}, {})", row.i, row.k));
            }
        }
        let activ = activ
            .into_iter()
            .map(|rows| {
                rows.into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| "missing activation row".to_string())
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Theta::new(w.m, w.delta, w.gamma_delta, w.c_diag, w.links, activ)
            .map_err(|e| e.to_string())
    }
}

/// Cost-norm weight: order s and high-pass cut R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub s: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

/// Parameter blocks the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSubset {
    DiagSpeeds,
    Amplitudes,
    Activations,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub max_iters: usize,
    pub fd_step: f64,
    pub step0: f64,
    pub active_subsets: Vec<ParamSubset>,
    pub weight: WeightSpec,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::TrainValidation("max_iters must be positive".into()));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::TrainValidation("fd_step must be positive".into()));
        }
        if !(self.step0.is_finite() && self.step0 > 0.0) {
            return Err(Error::TrainValidation("step0 must be positive".into()));
        }
        if self.active_subsets.is_empty() {
            return Err(Error::TrainValidation("no active parameter subsets".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_patch_theta() -> Theta {
        let mut l01 = CanonicalLink::identity(0, 1, 1);
        l01.causal = true;
        l01.c_amp = 0.8;
        let l10 = CanonicalLink::identity(1, 0, 1);
        Theta::new(
            2,
            0.5,
            0.1,
            vec![1.0, 1.2],
            vec![l01, l10],
            vec![
                vec![ParaNetParams::new(vec![(1.0, 0.0)]).unwrap()],
                vec![ParaNetParams::new(vec![(0.5, 0.25)]).unwrap()],
            ],
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let theta = two_patch_theta();
        let text = theta.to_json().unwrap();
        let back = Theta::from_json(&text).unwrap();
        assert_eq!(theta, back);
    }

    #[test]
    fn wire_shape_uses_documented_names() {
        let text = two_patch_theta().to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["K"], 2);
        assert_eq!(v["M"], 2);
        assert!(v["links"][0]["S"].is_array());
        assert!(v["links"][0]["c"].is_number());
        assert_eq!(v["activ"][0]["i"], 0);
        assert_eq!(v["activ"][0]["k"], 1);
        assert_eq!(v["activ"][1]["a"][0], 0.5);
        assert_eq!(v["activ"][1]["b"][0], 0.25);
    }

    #[test]
    fn link_lookup_matches_order() {
        let theta = two_patch_theta();
        assert_eq!((theta.link(0, 1).i, theta.link(0, 1).j), (0, 1));
        assert_eq!((theta.link(1, 0).i, theta.link(1, 0).j), (1, 0));
    }

    #[test]
    fn misordered_links_are_rejected() {
        let l01 = CanonicalLink::identity(0, 1, 1);
        let l10 = CanonicalLink::identity(1, 0, 1);
        let err = Theta::new(1, 0.5, 0.1, vec![1.0, 1.0], vec![l10, l01], vec![vec![], vec![]]);
        assert!(matches!(err, Err(Error::NetworkValidation(_))));
    }

    #[test]
    fn nonpositive_speed_is_rejected() {
        let err = Theta::new(1, 0.5, 0.1, vec![0.0], vec![], vec![vec![]]);
        assert!(matches!(err, Err(Error::NetworkValidation(_))));
    }

    #[test]
    fn train_config_json_round_trip() {
        let text = r#"{
            "seed": 7,
            "max_iters": 40,
            "fd_step": 1e-4,
            "step0": 0.05,
            "active_subsets": ["diag_speeds", "activations"],
            "weight": {"s": 2.0, "R": 4.0}
        }"#;
        let cfg: TrainConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.active_subsets, vec![ParamSubset::DiagSpeeds, ParamSubset::Activations]);
        assert_eq!(cfg.weight.r, 4.0);
        let unknown = r#"{"seed": 1, "max_iters": 1, "fd_step": 1e-4, "step0": 0.1,
                          "active_subsets": ["amplitudes"], "weight": {"s": 0.0, "R": 0.0},
                          "extra": true}"#;
        assert!(serde_json::from_str::<TrainConfig>(unknown).is_err());
    }
}
