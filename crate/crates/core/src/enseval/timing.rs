use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ensemble::{weighted_ensemble, EnsembleWeights};
use super::{EvalError, System};
use crate::corpus::{LanguageCode, MultilingualQARecord};
use crate::embed::FeatureSource;
use crate::models::{argmax, FusionModel, ModelError, ModelInputs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Median wall-clock milliseconds for one full pass over the test set.
    pub median_ms: BTreeMap<System, f64>,
    pub repeats: usize,
    pub samples: usize,
    pub hardware_note: String,
}

fn hardware_note() -> String {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "Measured single-threaded on {} / {} ({cpus} logical CPUs available); absolute values are hardware-specific.",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Times `repeats` full inference passes per system over cached features.
///
/// `models` are the L, C and T classifiers in that order. Feature loading
/// happens before timing starts; passes run on the calling thread, with the
/// systems interleaved within each repeat.
pub fn timing_benchmark(
    models: [&FusionModel<f32>; 3],
    weights: &EnsembleWeights,
    records: &[MultilingualQARecord],
    features: &dyn FeatureSource,
    language: LanguageCode,
    repeats: usize,
) -> Result<LatencyReport, EvalError> {
    if repeats < 3 {
        return Err(EvalError::Argument(format!("repeats must be at least 3, got {repeats}")));
    }
    if records.is_empty() {
        return Err(EvalError::Argument("no test records to time".into()));
    }
    let loaded = records
        .iter()
        .map(|r| {
            features
                .features(&r.question_id, language)
                .map_err(|source| ModelError::Features {
                    question_id: r.question_id.clone(),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let single = |m: &FusionModel<f32>| -> Result<f64, EvalError> {
        let start = Instant::now();
        let mut sink = 0usize;
        for f in &loaded {
            sink = sink.wrapping_add(argmax(&m.forward(&ModelInputs::from(f))?));
        }
        std::hint::black_box(sink);
        Ok(start.elapsed().as_secs_f64() * 1e3)
    };
    let ensemble = || -> Result<f64, EvalError> {
        let start = Instant::now();
        let mut sink = 0usize;
        for f in &loaded {
            let x = ModelInputs::from(f);
            let [l, c, t] = [models[0].forward(&x)?, models[1].forward(&x)?, models[2].forward(&x)?];
            sink = sink.wrapping_add(weighted_ensemble(&l, &c, &t, weights)?.argmax());
        }
        std::hint::black_box(sink);
        Ok(start.elapsed().as_secs_f64() * 1e3)
    };

    let mut times: BTreeMap<System, Vec<f64>> = BTreeMap::new();
    for _ in 0..repeats {
        for (system, model) in [System::L, System::C, System::T].into_iter().zip(models) {
            times.entry(system).or_default().push(single(model)?);
        }
        times.entry(System::Ens).or_default().push(ensemble()?);
    }
    Ok(LatencyReport {
        median_ms: times.into_iter().map(|(s, t)| (s, median(t))).collect(),
        repeats,
        samples: loaded.len(),
        hardware_note: hardware_note(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ProviderDims;
    use crate::models::fixtures::separable_task;
    use crate::models::{reduced_config, Variant};

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn too_few_repeats_rejected() {
        let task = separable_task(0, 4, 2, ProviderDims::uniform(8, 4), 0.1);
        let cfg = |v| {
            let mut c = reduced_config(v, 0);
            c.inputs = ProviderDims::uniform(8, 4);
            c.n_labels = 42;
            c
        };
        let models: Vec<FusionModel<f32>> = Variant::ALL.iter().map(|&v| FusionModel::build(cfg(v)).unwrap()).collect();
        let refs = [&models[0], &models[1], &models[2]];
        let err = timing_benchmark(refs, &EnsembleWeights::default(), &task.records, &task.features, task.language, 2);
        assert!(matches!(err, Err(EvalError::Argument(_))));
        let ok = timing_benchmark(refs, &EnsembleWeights::default(), &task.records, &task.features, task.language, 3)
            .unwrap();
        assert_eq!(ok.median_ms.len(), 4);
        assert!(ok.median_ms.values().all(|v| *v >= 0.0));
        assert!(ok.hardware_note.contains("hardware-specific"));
    }
}
