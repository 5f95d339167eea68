//! Versioned JSON snapshots of trained models.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baselines::{DirichletHyper, LdaState, TotState};
use crate::bayes_tot::{BtotState, NyScheme, WbtotState};
use crate::corpus::TimeScale;
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelState};
use crate::numerics::{BetaParams, BetaPriorParams, BetaPriorPosterior, MomentMethod};
use crate::synth::GroundTruth;

pub const SNAPSHOT_FORMAT: &str = "btot-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorRecord {
    pub nu: f64,
    pub chi: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub mu: f64,
    pub psi: [f64; 2],
}

/// Every key is always written; fields that do not apply to a model are
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
    pub k: usize,
    pub v: usize,
    pub alpha: Vec<f64>,
    pub eta: f64,
    pub prior: Option<PriorRecord>,
    pub ny_scheme: Option<NyScheme>,
    pub delta: Option<f64>,
    pub moment_method: Option<MomentMethod>,
    /// K×V, row-major.
    pub lambda: Vec<f64>,
    pub rho: Option<Vec<[f64; 2]>>,
    pub posteriors: Option<Vec<PosteriorRecord>>,
    pub time_scale: TimeScale,
}

impl Snapshot {
    pub fn from_state(state: &ModelState, time_scale: TimeScale) -> Self {
        let lda = state.lda();
        let mut s = Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            model: state.kind(),
            k: lda.k(),
            v: lda.v(),
            alpha: lda.hyper.alpha.clone(),
            eta: lda.hyper.eta,
            prior: None,
            ny_scheme: None,
            delta: None,
            moment_method: None,
            lambda: lda.lambda.iter().copied().collect(),
            rho: None,
            posteriors: None,
            time_scale,
        };
        if let ModelState::Tot(t) = state {
            s.rho = Some(t.rho.iter().map(|r| r.rho).collect());
        }
        if let Some(b) = state.btot() {
            s.prior = Some(PriorRecord { nu: b.prior.nu, chi: b.prior.chi });
            s.delta = Some(b.delta);
            s.moment_method = Some(b.method);
            s.posteriors = Some(b.posteriors.iter().map(|p| PosteriorRecord { mu: p.mu, psi: p.psi }).collect());
        }
        if let ModelState::Wbtot(w) = state {
            s.ny_scheme = Some(w.ny);
        }
        s
    }

    /// A ground truth stored as a ToT-shaped snapshot: `λ = β`, `ρ` the
    /// true Beta parameters.
    pub fn from_truth(truth: &GroundTruth, eta: f64) -> Self {
        let lda = LdaState {
            lambda: truth.beta.clone(),
            hyper: DirichletHyper { alpha: truth.alpha.clone(), eta },
        };
        Snapshot::from_state(&ModelState::Tot(TotState { lda, rho: truth.rho.clone() }), TimeScale::identity())
    }

    fn missing(&self, field: &str) -> Error {
        Error::config(format!("snapshot for model {} lacks '{field}'", self.model))
    }

    /// Rebuilds the model; cached moments are recomputed.
    pub fn to_state(&self) -> Result<ModelState> {
        if self.format != SNAPSHOT_FORMAT {
            return Err(Error::config(format!("not a snapshot (format '{}')", self.format)));
        }
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::config(format!("unsupported snapshot version {}", self.version)));
        }
        if self.k < 1 || self.v < 1 || self.lambda.len() != self.k * self.v || self.alpha.len() != self.k {
            return Err(Error::config("snapshot dimensions are inconsistent"));
        }
        if self.lambda.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::config("snapshot λ must be positive and finite"));
        }
        let hyper = DirichletHyper { alpha: self.alpha.clone(), eta: self.eta };
        hyper.validate()?;
        let lambda = Array2::from_shape_vec((self.k, self.v), self.lambda.clone()).expect("checked shape");
        let lda = LdaState { lambda, hyper };
        let btot = |delta: f64| -> Result<BtotState> {
            let p = self.prior.ok_or_else(|| self.missing("prior"))?;
            let prior = BetaPriorParams::new(p.nu, p.chi)?;
            let posts = self.posteriors.as_ref().ok_or_else(|| self.missing("posteriors"))?;
            if posts.len() != self.k {
                return Err(Error::config("snapshot has one posterior per topic"));
            }
            let method = self.moment_method.unwrap_or_default();
            let mut b = BtotState::new(lda.clone(), prior, method, delta)?;
            let posteriors: Vec<BetaPriorPosterior> =
                posts.iter().map(|r| BetaPriorPosterior { mu: r.mu, psi: r.psi }).collect();
            b.set_posteriors(posteriors)?;
            Ok(b)
        };
        Ok(match self.model {
            ModelKind::Lda => ModelState::Lda(lda),
            ModelKind::Tot => {
                let rho = self.rho.as_ref().ok_or_else(|| self.missing("rho"))?;
                if rho.len() != self.k {
                    return Err(Error::config("snapshot has one ρ per topic"));
                }
                let rho = rho.iter().map(|r| BetaParams::new(r[0], r[1])).collect::<Result<Vec<_>>>()?;
                ModelState::Tot(TotState { lda, rho })
            }
            ModelKind::Btot => ModelState::Btot(btot(self.delta.unwrap_or(1.0))?),
            ModelKind::Wbtot => {
                let ny = self.ny_scheme.ok_or_else(|| self.missing("ny_scheme"))?;
                ny.validate()?;
                ModelState::Wbtot(WbtotState { btot: btot(1.0)?, ny })
            }
        })
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn round_trip(state: &ModelState) -> ModelState {
        let snap = Snapshot::from_state(state, TimeScale { raw_min: 1790.0, raw_max: 2020.0, margin: 0.01 });
        let mut buf = Vec::new();
        snap.write_to(&mut buf).unwrap();
        let back = Snapshot::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, snap);
        back.to_state().unwrap()
    }

    #[test]
    fn every_model_round_trips_bit_exactly() {
        for kind in [ModelKind::Lda, ModelKind::Tot, ModelKind::Btot, ModelKind::Wbtot] {
            let mut spec = ModelSpec::new(kind, 3);
            spec.delta = 0.5;
            let mut state = ModelState::init(&spec, 7, 11).unwrap();
            state.lda_mut().lambda[[1, 2]] = 0.1 + 0.2;
            state.lda_mut().hyper.alpha[0] = 1.0 / 3.0;
            if let ModelState::Tot(t) = &mut state {
                t.rho[1] = BetaParams::new(std::f64::consts::PI, 1e-7).unwrap();
            }
            let b = match &mut state {
                ModelState::Btot(b) => Some(b),
                ModelState::Wbtot(w) => Some(&mut w.btot),
                _ => None,
            };
            if let Some(b) = b {
                let mut p = b.posteriors.clone();
                p[0] = BetaPriorPosterior { mu: 123.456789, psi: [-1.2345678901234567, -0.9876543210987654] };
                b.set_posteriors(p).unwrap();
            }
            let back = round_trip(&state);
            assert_eq!(back, state, "{kind}");
        }
    }

    #[test]
    fn rejects_wrong_version_and_shapes() {
        let state = ModelState::init(&ModelSpec::new(ModelKind::Lda, 2), 3, 1).unwrap();
        let mut s = Snapshot::from_state(&state, TimeScale::identity());
        s.version = 2;
        assert!(s.to_state().is_err());
        let mut s = Snapshot::from_state(&state, TimeScale::identity());
        s.lambda.pop();
        assert!(s.to_state().is_err());
        let mut s = Snapshot::from_state(&state, TimeScale::identity());
        s.model = ModelKind::Btot;
        assert!(s.to_state().is_err());
    }
}
