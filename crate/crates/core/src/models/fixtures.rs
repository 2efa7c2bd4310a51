//! Seeded synthetic classification tasks for capacity and determinism checks.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::fixtures::music_avqa_vocabulary;
use crate::corpus::{AnswerVocabulary, LanguageCode, MultilingualQARecord, Split};
use crate::embed::{InMemoryFeatures, ProviderDims, SampleFeatures};

pub struct SyntheticTask {
    pub records: Vec<MultilingualQARecord>,
    pub vocabulary: AnswerVocabulary,
    pub features: InMemoryFeatures,
    pub language: LanguageCode,
}

/// `n` samples over `n_classes` labels of the full answer vocabulary.
///
/// Each class has a fixed random prototype per modality; a sample is its
/// class prototype plus uniform noise of amplitude `noise`.
pub fn separable_task(seed: u64, n: usize, n_classes: usize, dims: ProviderDims, noise: f32) -> SyntheticTask {
    let vocabulary = music_avqa_vocabulary();
    let n_classes = n_classes.clamp(1, vocabulary.len());
    let stride = vocabulary.len() / n_classes;
    let language = LanguageCode::En;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = [dims.video, dims.audio, dims.text];
    let prototypes: Vec<[Array2<f32>; 3]> = (0..n_classes)
        .map(|_| shapes.map(|s| Array2::from_shape_simple_fn(s, || rng.random_range(-1.0f32..1.0))))
        .collect();

    let mut features = InMemoryFeatures::default();
    let records = (0..n)
        .map(|i| {
            let class = i % n_classes;
            let label = vocabulary.get((class * stride) as u32).expect("label in range");
            let [v, a, t] = prototypes[class]
                .clone()
                .map(|p| p.mapv(|x| x + noise * rng.random_range(-1.0f32..1.0)));
            let qid = format!("syn-{i:04}");
            features.insert(
                &qid,
                language,
                SampleFeatures {
                    video: Arc::new(v),
                    audio: Arc::new(a),
                    text: Arc::new(t),
                },
            );
            MultilingualQARecord::new(
                qid,
                format!("syn-vid-{i:04}"),
                label.qtype,
                BTreeMap::from([(language, format!("synthetic question {i}"))]),
                label.label_id,
                Some(Split::Train),
            )
        })
        .collect();
    SyntheticTask {
        records,
        vocabulary,
        features,
        language,
    }
}
