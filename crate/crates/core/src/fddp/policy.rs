use std::path::Path;

use serde::{Deserialize, Serialize};

use super::infer::NoisePredictor;
use super::{ChainMode, ChainSpec};
use crate::error::{Error, Result};
use crate::geometry::{ActionLayout, ActionVec};
use crate::nn::{load_params, save_params, Model, ModelConfig, ParamSet, Tensor};
use crate::scene::Image;

const STEP_TENSOR: &str = "meta.step";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Network shape; `action_dim` and `cond_dim` are derived from the chains.
    pub model: ModelConfig,
    pub chains: ChainMode,
    /// One network for all chains, told apart by a one-hot input.
    pub share_params: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            chains: ChainMode::PerSubAction,
            share_params: false,
        }
    }
}

impl PolicyConfig {
    pub fn chain_specs(&self) -> Vec<ChainSpec> {
        self.chains.chains()
    }

    /// Model configs, one per network, plus the network index of each chain.
    fn networks(&self, layout: &ActionLayout) -> Result<(Vec<ModelConfig>, Vec<usize>)> {
        let chains = self.chain_specs();
        let dims = chains
            .iter()
            .map(|c| Ok(c.layout(layout)?.0.dim()))
            .collect::<Result<Vec<_>>>()?;
        if self.share_params {
            if dims.iter().any(|&d| d != dims[0]) {
                return Err(Error::Config(
                    "shared parameters need chains of equal width".into(),
                ));
            }
            let mut cfg = self.model.clone();
            cfg.action_dim = dims[0];
            cfg.cond_dim = if chains.len() > 1 { chains.len() } else { 0 };
            Ok((vec![cfg], vec![0; chains.len()]))
        } else {
            let cfgs = dims
                .iter()
                .map(|&d| {
                    let mut cfg = self.model.clone();
                    cfg.action_dim = d;
                    cfg.cond_dim = 0;
                    cfg
                })
                .collect();
            Ok((cfgs, (0..chains.len()).collect()))
        }
    }
}

/// Trained networks for every chain of the desk action.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub config: PolicyConfig,
    pub layout: ActionLayout,
    pub models: Vec<Model<f32>>,
    /// Network used by each chain.
    pub chain_model: Vec<usize>,
    /// Optimizer steps taken so far.
    pub step: u64,
}

impl Policy {
    pub fn init(config: PolicyConfig, seed: u64) -> Result<Self> {
        let layout = ActionLayout::desk();
        let (cfgs, chain_model) = config.networks(&layout)?;
        let models = cfgs
            .into_iter()
            .enumerate()
            .map(|(i, c)| Model::init(c, seed.wrapping_add(i as u64 * 0x9e37_79b9)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            layout,
            models,
            chain_model,
            step: 0,
        })
    }

    pub fn chains(&self) -> Vec<ChainSpec> {
        self.config.chain_specs()
    }

    /// One-hot chain selector for shared networks, empty otherwise.
    pub fn cond(&self, chain: usize) -> Vec<f64> {
        let m = &self.models[self.chain_model[chain]];
        let mut c = vec![0.0; m.config.cond_dim];
        if !c.is_empty() {
            c[chain] = 1.0;
        }
        c
    }

    pub fn to_params(&self) -> ParamSet<f32> {
        let mut all = ParamSet::new();
        for (i, m) in self.models.iter().enumerate() {
            all.extend_prefixed(&format!("chain{i}."), &m.params)
                .expect("prefixes are distinct");
        }
        all.insert(STEP_TENSOR, Tensor::scalar(self.step as f32))
            .expect("meta name is distinct");
        all
    }

    pub fn from_params(config: PolicyConfig, params: &ParamSet<f32>) -> Result<Self> {
        let layout = ActionLayout::desk();
        let (cfgs, chain_model) = config.networks(&layout)?;
        let models = cfgs
            .into_iter()
            .enumerate()
            .map(|(i, c)| Model::from_params(c, params.strip_prefix(&format!("chain{i}."))))
            .collect::<Result<Vec<_>>>()?;
        let expected = models.iter().map(|m| m.params.len()).sum::<usize>() + 1;
        if params.len() != expected {
            return Err(Error::shape(format!("{expected} tensors"), params.len()));
        }
        let step = params
            .get(STEP_TENSOR)?
            .data
            .first()
            .copied()
            .unwrap_or(0.0) as u64;
        Ok(Self {
            config,
            layout,
            models,
            chain_model,
            step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_params(&self.to_params(), path)
    }

    pub fn load(config: PolicyConfig, path: &Path) -> Result<Self> {
        Self::from_params(config, &load_params(path)?)
    }
}

impl NoisePredictor for Policy {
    fn image_size(&self) -> (usize, usize) {
        let c = &self.models[0].config;
        (c.image_h, c.image_w)
    }

    fn encode(&self, chain: usize, image: &Image) -> Result<Vec<f64>> {
        self.models[self.chain_model[chain]].encoder_forward(image)
    }

    fn predict(
        &self,
        chain: usize,
        embedding: &[f64],
        a_input: &ActionVec,
        t: f64,
    ) -> Result<Vec<f64>> {
        self.models[self.chain_model[chain]].denoiser_forward(
            embedding,
            &a_input.values,
            t,
            &self.cond(chain),
        )
    }
}
