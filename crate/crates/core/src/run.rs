//! Engine selection and the generation loop.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bloch::{initial_ensemble, ModelParams, Variant};
use crate::ensemble::WeightedEnsemble;
use crate::error::{QdError, QdResult};
use crate::exact::{step_exact_with, ExactConfig};
use crate::observables::{conditional_entropy, purity, qd_stability_eigenvalue};
use crate::sampler::{step_biased, step_compressed, CompressedConfig, Resampling};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Exact,
    Compressed,
    Biased,
}

impl FromStr for EngineKind {
    type Err = QdError;

    fn from_str(s: &str) -> QdResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(EngineKind::Exact),
            "compressed" => Ok(EngineKind::Compressed),
            "biased" => Ok(EngineKind::Biased),
            other => Err(QdError::InvalidParam(format!("unknown engine '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Engine {
    Exact(ExactConfig),
    /// `n` peaks per round, `n²` per generation.
    Compressed { n: usize, cfg: CompressedConfig },
    /// `m` peaks per generation.
    Biased { m: usize, scheme: Resampling },
}

impl Engine {
    pub fn kind(&self) -> EngineKind {
        match self {
            Engine::Exact(_) => EngineKind::Exact,
            Engine::Compressed { .. } => EngineKind::Compressed,
            Engine::Biased { .. } => EngineKind::Biased,
        }
    }

    /// Sample-size label reported next to results (0 for the exact engine).
    pub fn size(&self) -> usize {
        match self {
            Engine::Exact(_) => 0,
            Engine::Compressed { n, .. } => *n,
            Engine::Biased { m, .. } => *m,
        }
    }

    pub fn biased(m: usize) -> Self {
        Engine::Biased {
            m,
            scheme: Resampling::Systematic,
        }
    }

    pub fn compressed(n: usize) -> Self {
        Engine::Compressed {
            n,
            cfg: CompressedConfig::default(),
        }
    }

    /// Reject engine/variant combinations the samplers do not support.
    pub fn check(&self, variant: Variant) -> QdResult<()> {
        let ok = match (self, variant) {
            (_, Variant::Clifford) => false,
            (Engine::Exact(_), _) => true,
            (Engine::Compressed { .. }, v) => v == Variant::Deterministic,
            (Engine::Biased { .. }, v) => v == Variant::Random,
        };
        if ok {
            Ok(())
        } else {
            Err(QdError::WrongVariant {
                expected: match self {
                    Engine::Exact(_) => "deterministic or random",
                    Engine::Compressed { .. } => "deterministic",
                    Engine::Biased { .. } => "random",
                },
                got: variant.to_string(),
            })
        }
    }

    pub fn step(&self, ens: &WeightedEnsemble, params: &ModelParams, seed: u64) -> QdResult<WeightedEnsemble> {
        match self {
            Engine::Exact(cfg) => step_exact_with(ens, params, cfg),
            Engine::Compressed { n, cfg } => step_compressed(ens, *n, params, seed, cfg),
            Engine::Biased { m, scheme } => step_biased(ens, *m, params, seed, *scheme),
        }
    }
}

/// Observables of one generation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub purity: f64,
    pub chi: f64,
    /// Present only when the ensemble sits on the unit circle.
    pub lambda_d: Option<f64>,
    pub peaks: usize,
    pub mean_u: f64,
    pub mean_v: f64,
    pub dropped: f64,
}

pub fn record(ens: &WeightedEnsemble, params: &ModelParams) -> StepRecord {
    let m = ens.moments();
    StepRecord {
        t: ens.t,
        purity: purity(ens),
        chi: conditional_entropy(ens),
        lambda_d: qd_stability_eigenvalue(ens, params).ok(),
        peaks: ens.len(),
        mean_u: m.mean_u,
        mean_v: m.mean_v,
        dropped: ens.dropped,
    }
}

/// Evolve from the initial condition for `t_max` generations, calling
/// `observe` on every ensemble including the initial one.
pub fn evolve<F>(
    params: &ModelParams,
    engine: &Engine,
    t_max: usize,
    seed: u64,
    mut observe: F,
) -> QdResult<WeightedEnsemble>
where
    F: FnMut(&WeightedEnsemble),
{
    engine.check(params.variant())?;
    let mut ens = initial_ensemble(params);
    observe(&ens);
    for _ in 0..t_max {
        ens = engine.step(&ens, params, seed)?;
        observe(&ens);
    }
    Ok(ens)
}

/// Per-generation records of a run.
pub fn evolve_records(params: &ModelParams, engine: &Engine, t_max: usize, seed: u64) -> QdResult<Vec<StepRecord>> {
    let mut out = Vec::with_capacity(t_max + 1);
    evolve(params, engine, t_max, seed, |e| out.push(record(e, params)))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forbidden_combinations() {
        let det = ModelParams::new(Variant::Deterministic, 0.3, 2).unwrap();
        let rnd = ModelParams::new(Variant::Random, 0.3, 2).unwrap();
        assert!(evolve_records(&det, &Engine::biased(100), 2, 0).is_err());
        assert!(evolve_records(&rnd, &Engine::compressed(10), 2, 0).is_err());
        assert!(evolve_records(&rnd, &Engine::Exact(ExactConfig::default()), 2, 0).is_ok());
    }

    #[test]
    fn records_cover_all_generations() {
        let p = ModelParams::new(Variant::Random, 0.3, 1).unwrap();
        let r = evolve_records(&p, &Engine::biased(400), 5, 1).unwrap();
        assert_eq!(r.len(), 6);
        assert_eq!(r[5].t, 5);
        assert!(r.iter().all(|x| x.lambda_d.is_some()));
    }

    #[test]
    fn engine_parse() {
        assert_eq!("Biased".parse::<EngineKind>().unwrap(), EngineKind::Biased);
        assert!("quantum".parse::<EngineKind>().is_err());
    }
}
