//! Mean view credibilities per label group.

use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::error::{MiclError, Result};
use crate::fusion::predict_label;
use crate::model::MiclModel;
use crate::params::ParamStore;

use super::{infer_all, prepare_all};

/// Mean credibilities in view order (token-patch, entity-object, sentiment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupCredibility {
    pub count: usize,
    pub token_patch: f64,
    pub entity_object: f64,
    pub sentiment: f64,
}

impl GroupCredibility {
    pub fn as_array(&self) -> [f64; 3] {
        [self.token_patch, self.entity_object, self.sentiment]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleDiagnostic {
    pub id: String,
    pub label: u8,
    pub probability: f64,
    pub predicted: u8,
    pub credibility: [f64; 3],
}

/// Groups without samples are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CredibilityReport {
    pub sarcastic: Option<GroupCredibility>,
    pub non_sarcastic: Option<GroupCredibility>,
    pub all: Option<GroupCredibility>,
    pub samples: Vec<SampleDiagnostic>,
}

fn group_mean<'a>(rows: impl Iterator<Item = &'a SampleDiagnostic>) -> Option<GroupCredibility> {
    let mut sum = [0.0; 3];
    let mut count = 0;
    for r in rows {
        for (s, c) in sum.iter_mut().zip(r.credibility) {
            *s += c;
        }
        count += 1;
    }
    (count > 0).then(|| GroupCredibility {
        count,
        token_patch: sum[0] / count as f64,
        entity_object: sum[1] / count as f64,
        sentiment: sum[2] / count as f64,
    })
}

pub fn credibility_report_model(model: &MiclModel, store: &ParamStore, dataset: &Dataset) -> Result<CredibilityReport> {
    if dataset.is_empty() {
        return Err(MiclError::Config("credibility report needs a non-empty dataset".into()));
    }
    let prepared = prepare_all(model, dataset)?;
    let inferred = infer_all(model, store, &prepared)?;
    let samples: Vec<SampleDiagnostic> = dataset
        .samples
        .iter()
        .zip(&inferred)
        .map(|(s, i)| SampleDiagnostic {
            id: s.id.clone(),
            label: s.label,
            probability: i.probability,
            predicted: predict_label(i.probability),
            credibility: i.credibility,
        })
        .collect();
    Ok(CredibilityReport {
        sarcastic: group_mean(samples.iter().filter(|s| s.label == 1)),
        non_sarcastic: group_mean(samples.iter().filter(|s| s.label == 0)),
        all: group_mean(samples.iter()),
        samples,
    })
}

pub fn credibility_report(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<CredibilityReport> {
    let (model, store) = checkpoint.restore()?;
    credibility_report_model(&model, &store, dataset)
}
