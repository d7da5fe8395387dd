//! End-to-end post-specialisation: specialise the seen words, learn the
//! mapping on them, and push every unseen word through it.

use std::time::Instant;

use log::info;
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::attract_repel::{ar_specialise, retrofit_specialise, ArConfig, ArReport};
use crate::constraints::{filter_to_vocab, partition_vocab, ConstraintSet};
use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::mapping::{train_mapping, MapTrainConfig, MappingModel, ModelKind, TrainReport};

/// Which post-processor produces the specialised seen vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum PostProcessor {
    #[serde(rename = "ar")]
    AttractRepel,
    Retrofit { iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub post_processor: PostProcessor,
    pub ar: ArConfig,
    pub model: ModelKind,
    pub map: MapTrainConfig,
    /// Replace every row, seen words included, by its mapped vector.
    pub map_all: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            post_processor: PostProcessor::AttractRepel,
            ar: ArConfig::default(),
            model: ModelKind::DEFAULT_DFFN,
            map: MapTrainConfig::default(),
            map_all: false,
        }
    }
}

impl PipelineConfig {
    /// Copy with every stage seed set to `seed`. Stages still draw from
    /// distinct streams.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.ar.seed = seed;
        self.map.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub specialise_secs: f64,
    pub train_secs: f64,
    pub apply_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub vocabulary: usize,
    pub seen: usize,
    pub unseen: usize,
    pub coverage: f64,
    pub attract_pairs: usize,
    pub repel_pairs: usize,
    pub attract_repel: Option<ArReport>,
    pub training: TrainReport,
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// The final space: specialised seen rows plus mapped unseen rows.
    pub space: EmbeddingSpace,
    /// Output of the post-processor alone (unseen rows untouched).
    pub specialised: EmbeddingSpace,
    pub model: MappingModel,
    pub report: PipelineReport,
}

pub fn run_pipeline(space: &EmbeddingSpace, cs: &ConstraintSet, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let cs = filter_to_vocab(cs, space);
    if cs.is_empty() {
        return Err(Error::InsufficientData("no constraint pair lies in the vocabulary".into()));
    }
    let part = partition_vocab(&cs, space);
    info!(
        "pipeline: {} seen / {} unseen words ({:.1}% coverage)",
        part.seen.len(),
        part.unseen.len(),
        100.0 * part.coverage()
    );

    let t = Instant::now();
    let (specialised, ar_report) = match cfg.post_processor {
        PostProcessor::AttractRepel => {
            let out = ar_specialise(space, &cs, &cfg.ar)?;
            (out.space, Some(out.report))
        }
        PostProcessor::Retrofit { iterations } => (retrofit_specialise(space, &cs, iterations)?, None),
    };
    let specialise_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let inputs = space.vectors().select(Axis(0), &part.seen);
    let targets = specialised.vectors().select(Axis(0), &part.seen);
    let trained = train_mapping(inputs.view(), targets.view(), cfg.model, &cfg.map)?;
    let train_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let final_space = if cfg.map_all {
        crate::mapping::apply_mapping(&trained.model, space)?
    } else {
        let unseen = space.select(&part.unseen);
        let mapped = crate::mapping::apply_mapping(&trained.model, &unseen)?;
        specialised.with_rows_replaced(&part.unseen, mapped.vectors())?
    };
    let apply_secs = t.elapsed().as_secs_f64();

    let report = PipelineReport {
        vocabulary: space.len(),
        seen: part.seen.len(),
        unseen: part.unseen.len(),
        coverage: part.coverage(),
        attract_pairs: cs.attract.len(),
        repel_pairs: cs.repel.len(),
        attract_repel: ar_report,
        training: trained.report,
        timings: StageTimings {
            specialise_secs,
            train_secs,
            apply_secs,
        },
    };
    Ok(PipelineOutput {
        space: final_space,
        specialised,
        model: trained.model,
        report,
    })
}
