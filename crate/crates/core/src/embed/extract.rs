use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audio::{read_wav, resample_audio, Waveform};
use super::cache::{cache_key, CacheManifest, TensorCache};
use super::provider::{content_hash_bytes, content_hash_text, embed_checked, sha256_hex, EmbeddingProvider};
use super::{EmbedError, Modality};
use crate::corpus::{LanguageCode, MultilingualQARecord};

/// Per-record cache keys, written next to the manifest.
pub const SAMPLES_FILE: &str = "samples.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum MediaItem {
    Files { video: PathBuf, audio: PathBuf },
    /// Deterministic placeholder media derived from the video id.
    Synthetic,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaIndex {
    #[serde(default)]
    pub items: BTreeMap<String, MediaItem>,
    #[serde(default)]
    pub skip: BTreeSet<String>,
}

impl MediaIndex {
    pub fn synthetic<'a>(video_ids: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            items: video_ids
                .into_iter()
                .map(|v| (v.to_string(), MediaItem::Synthetic))
                .collect(),
            skip: BTreeSet::new(),
        }
    }

    /// Reads a JSON index; relative file paths resolve against the index's directory.
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let text = fs::read_to_string(path)?;
        let mut index: MediaIndex = serde_json::from_str(&text)
            .map_err(|e| EmbedError::Format(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for item in index.items.values_mut() {
            if let MediaItem::Files { video, audio } = item {
                if video.is_relative() {
                    *video = base.join(&*video);
                }
                if audio.is_relative() {
                    *audio = base.join(&*audio);
                }
            }
        }
        Ok(index)
    }

    pub fn skip_video(&mut self, video_id: &str) {
        self.skip.insert(video_id.to_string());
    }

    fn load_media(&self, video_id: &str) -> Result<(Vec<u8>, Waveform), String> {
        if self.skip.contains(video_id) {
            return Err("skip-listed".into());
        }
        match self.items.get(video_id) {
            None => Err("no media for video id".into()),
            Some(MediaItem::Synthetic) => Ok(synthetic_media(video_id)),
            Some(MediaItem::Files { video, audio }) => {
                let bytes = fs::read(video).map_err(|e| format!("{}: {e}", video.display()))?;
                let wave = read_wav(audio).map_err(|e| e.to_string())?;
                Ok((bytes, wave))
            }
        }
    }
}

fn synthetic_media(video_id: &str) -> (Vec<u8>, Waveform) {
    let bytes = format!("synthetic-video:{video_id}").into_bytes();
    // 0.2 s at 8 kHz so the resampler is exercised
    let h = sha256_hex(&[video_id.as_bytes()]);
    let freq = 100.0 + (u32::from_str_radix(&h[..4], 16).unwrap_or(0) % 2000) as f64;
    let samples = (0..1600)
        .map(|i| (std::f64::consts::TAU * freq * i as f64 / 8000.0).sin() as f32 * 0.5)
        .collect();
    (bytes, Waveform::new(samples, 8000))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleKeys {
    pub video: String,
    pub audio: String,
    pub text: BTreeMap<LanguageCode, String>,
}

/// question_id → cache keys of its features.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleIndex {
    pub samples: BTreeMap<String, SampleKeys>,
}

impl SampleIndex {
    pub fn load(cache_root: &Path) -> Result<Self, EmbedError> {
        let path = cache_root.join(SAMPLES_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| EmbedError::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, cache_root: &Path) -> Result<(), EmbedError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| EmbedError::Format(e.to_string()))?;
        text.push('\n');
        let tmp = cache_root.join(format!("{SAMPLES_FILE}.tmp"));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, cache_root.join(SAMPLES_FILE))?;
        Ok(())
    }

    pub fn get(&self, question_id: &str) -> Option<&SampleKeys> {
        self.samples.get(question_id)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub question_id: String,
    pub modality: Modality,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub workers: usize,
    pub attempts: u32,
    pub retry_delay: Duration,
    /// Re-read every existing entry and re-extract the ones that fail verification.
    pub verify: bool,
    /// Languages whose question text is embedded.
    pub languages: Vec<LanguageCode>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            workers: 4,
            attempts: 3,
            retry_delay: Duration::from_millis(50),
            verify: false,
            languages: LanguageCode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionReport {
    pub manifest: CacheManifest,
    pub samples: SampleIndex,
    /// Provider calls that produced a new cache entry.
    pub extracted: usize,
    pub reused: usize,
    pub skipped: Vec<SkipEntry>,
}

enum Job<'a> {
    Media(&'a str),
    Text(&'a str, LanguageCode),
}

struct JobResult {
    /// (modality, language, key) or failure reason per output.
    outputs: Vec<(Modality, Option<LanguageCode>, Result<String, String>)>,
    extracted: usize,
    reused: usize,
}

/// Fills the cache with every (record, modality, language) feature tensor.
///
/// Work is deduplicated: one video/audio extraction per video id and one text
/// extraction per distinct (language, question). Missing media and provider
/// failures end up in `skipped`; the affected records are left out of the
/// sample index.
pub fn extract_embeddings(
    records: &[MultilingualQARecord],
    media: &MediaIndex,
    provider: &dyn EmbeddingProvider,
    cache: &TensorCache,
    options: &ExtractOptions,
) -> Result<ExtractionReport, EmbedError> {
    let video_ids: BTreeSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
    let mut texts: BTreeSet<(LanguageCode, &str)> = BTreeSet::new();
    for r in records {
        for &lang in &options.languages {
            if let Some(q) = r.question(lang) {
                texts.insert((lang, q));
            }
        }
    }
    let jobs: Vec<Job> = video_ids
        .iter()
        .map(|v| Job::Media(v))
        .chain(texts.iter().map(|(l, q)| Job::Text(q, *l)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| EmbedError::Provider(e.to_string()))?;
    let results: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(job, media, provider, cache, options))
            .collect()
    });
    cache.flush()?;

    let mut video_keys: HashMap<&str, BTreeMap<Modality, Result<String, String>>> = HashMap::new();
    let mut text_keys: HashMap<(LanguageCode, &str), Result<String, String>> = HashMap::new();
    let mut extracted = 0;
    let mut reused = 0;
    for (job, res) in jobs.iter().zip(results) {
        extracted += res.extracted;
        reused += res.reused;
        match job {
            Job::Media(v) => {
                let slot = video_keys.entry(v).or_default();
                for (m, _, out) in res.outputs {
                    slot.insert(m, out);
                }
            }
            Job::Text(q, l) => {
                let (_, _, out) = res.outputs.into_iter().next().expect("one text output");
                text_keys.insert((*l, q), out);
            }
        }
    }

    let mut samples = SampleIndex::default();
    let mut skipped = Vec::new();
    for r in records {
        let mut failures = Vec::new();
        let media_keys = &video_keys[r.video_id.as_str()];
        let mut key_for = |m: Modality| match &media_keys[&m] {
            Ok(k) => Some(k.clone()),
            Err(reason) => {
                failures.push((m, reason.clone()));
                None
            }
        };
        let video = key_for(Modality::Video);
        let audio = key_for(Modality::Audio);
        let mut text = BTreeMap::new();
        for &lang in &options.languages {
            let Some(q) = r.question(lang) else {
                failures.push((Modality::Text, format!("no {lang} question text")));
                continue;
            };
            match &text_keys[&(lang, q)] {
                Ok(k) => {
                    text.insert(lang, k.clone());
                }
                Err(reason) => failures.push((Modality::Text, format!("{lang}: {reason}"))),
            }
        }
        if failures.is_empty() {
            samples.samples.insert(
                r.question_id.clone(),
                SampleKeys {
                    video: video.expect("checked"),
                    audio: audio.expect("checked"),
                    text,
                },
            );
        } else {
            for (modality, reason) in failures {
                log::warn!("skipping {} ({modality}): {reason}", r.question_id);
                skipped.push(SkipEntry {
                    question_id: r.question_id.clone(),
                    modality,
                    reason,
                });
            }
        }
    }

    let mut merged = SampleIndex::load(cache.root())?;
    merged.samples.extend(samples.samples.clone());
    merged.save(cache.root())?;

    Ok(ExtractionReport {
        manifest: cache.manifest(),
        samples,
        extracted,
        reused,
        skipped,
    })
}

fn run_job(
    job: &Job,
    media: &MediaIndex,
    provider: &dyn EmbeddingProvider,
    cache: &TensorCache,
    options: &ExtractOptions,
) -> JobResult {
    let mut result = JobResult {
        outputs: Vec::new(),
        extracted: 0,
        reused: 0,
    };
    let config_hash = provider.config_hash();
    match job {
        Job::Media(video_id) => {
            let (bytes, wave) = match media.load_media(video_id) {
                Ok(m) => m,
                Err(reason) => {
                    for m in [Modality::Video, Modality::Audio] {
                        result.outputs.push((m, None, Err(reason.clone())));
                    }
                    return result;
                }
            };
            let wave = match resample_audio(&wave) {
                Ok(w) => Some(w),
                Err(e) => {
                    result.outputs.push((Modality::Audio, None, Err(e.to_string())));
                    None
                }
            };
            let video_hash = content_hash_bytes(&bytes);
            let out = ensure(provider, cache, options, Modality::Video, &video_hash, &config_hash, &mut result, || {
                provider.embed_video(&bytes)
            });
            result.outputs.push((Modality::Video, None, out));
            if let Some(wave) = wave {
                let audio_hash = content_hash_bytes(&wave.to_le_bytes());
                let out = ensure(provider, cache, options, Modality::Audio, &audio_hash, &config_hash, &mut result, || {
                    provider.embed_audio(&wave)
                });
                result.outputs.push((Modality::Audio, None, out));
            }
        }
        Job::Text(text, lang) => {
            let hash = content_hash_text(text, *lang);
            let out = ensure(provider, cache, options, Modality::Text, &hash, &config_hash, &mut result, || {
                provider.embed_text(text, *lang)
            });
            result.outputs.push((Modality::Text, Some(*lang), out));
        }
    }
    result
}

#[allow(clippy::too_many_arguments)]
fn ensure(
    provider: &dyn EmbeddingProvider,
    cache: &TensorCache,
    options: &ExtractOptions,
    modality: Modality,
    content_hash: &str,
    config_hash: &str,
    result: &mut JobResult,
    run: impl Fn() -> Result<Array2<f32>, EmbedError>,
) -> Result<String, String> {
    let key = cache_key(provider.id(), modality, content_hash, config_hash);
    if cache.contains(&key) {
        match options.verify.then(|| cache.get(&key)) {
            None | Some(Ok(_)) => {
                result.reused += 1;
                return Ok(key);
            }
            Some(Err(e)) => log::warn!("re-extracting {modality} {key}: {e}"),
        }
    }
    let attempts = options.attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        match embed_checked(provider, modality, content_hash.to_string(), &run) {
            Ok(tensor) => {
                return match cache.put(&key, &tensor.values) {
                    Ok(_) => {
                        result.extracted += 1;
                        Ok(key)
                    }
                    Err(e) => Err(e.to_string()),
                };
            }
            Err(e) => {
                last = e.to_string();
                if attempt < attempts {
                    std::thread::sleep(options.retry_delay * 2u32.pow(attempt - 1));
                }
            }
        }
    }
    Err(format!("provider failed after {attempts} attempts: {last}"))
}

/// Three feature sequences for one question in one language.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub video: Arc<Array2<f32>>,
    pub audio: Arc<Array2<f32>>,
    pub text: Arc<Array2<f32>>,
}

pub trait FeatureSource: Send + Sync {
    fn features(&self, question_id: &str, language: LanguageCode) -> Result<SampleFeatures, EmbedError>;
}

/// Reads features straight from the cache, verifying every tensor.
pub struct CachedFeatures {
    cache: TensorCache,
    samples: SampleIndex,
}

impl CachedFeatures {
    pub fn open(cache_root: &Path) -> Result<Self, EmbedError> {
        let cache = TensorCache::open(cache_root)?;
        let samples = SampleIndex::load(cache_root)?;
        Ok(Self { cache, samples })
    }

    pub fn samples(&self) -> &SampleIndex {
        &self.samples
    }

    /// Loads every listed sample into memory, sharing tensors between keys.
    pub fn preload<'a>(
        &self,
        question_ids: impl IntoIterator<Item = &'a str>,
        language: LanguageCode,
    ) -> Result<InMemoryFeatures, EmbedError> {
        let mut loaded: HashMap<String, Arc<Array2<f32>>> = HashMap::new();
        let mut load = |key: &str| -> Result<Arc<Array2<f32>>, EmbedError> {
            if let Some(t) = loaded.get(key) {
                return Ok(t.clone());
            }
            let t = Arc::new(self.cache.get(key)?);
            loaded.insert(key.to_string(), t.clone());
            Ok(t)
        };
        let mut out = InMemoryFeatures::default();
        for qid in question_ids {
            let keys = self.keys(qid, language)?;
            let features = SampleFeatures {
                video: load(&keys.0)?,
                audio: load(&keys.1)?,
                text: load(&keys.2)?,
            };
            out.insert(qid, language, features);
        }
        Ok(out)
    }

    fn keys(&self, question_id: &str, language: LanguageCode) -> Result<(String, String, String), EmbedError> {
        let keys = self
            .samples
            .get(question_id)
            .ok_or_else(|| EmbedError::Missing(format!("features for {question_id}")))?;
        let text = keys
            .text
            .get(&language)
            .ok_or_else(|| EmbedError::Missing(format!("{language} text features for {question_id}")))?;
        Ok((keys.video.clone(), keys.audio.clone(), text.clone()))
    }
}

impl FeatureSource for CachedFeatures {
    fn features(&self, question_id: &str, language: LanguageCode) -> Result<SampleFeatures, EmbedError> {
        let (v, a, t) = self.keys(question_id, language)?;
        Ok(SampleFeatures {
            video: Arc::new(self.cache.get(&v)?),
            audio: Arc::new(self.cache.get(&a)?),
            text: Arc::new(self.cache.get(&t)?),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct InMemoryFeatures {
    map: HashMap<(String, LanguageCode), SampleFeatures>,
}

impl InMemoryFeatures {
    pub fn insert(&mut self, question_id: &str, language: LanguageCode, features: SampleFeatures) {
        self.map.insert((question_id.to_string(), language), features);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl FeatureSource for InMemoryFeatures {
    fn features(&self, question_id: &str, language: LanguageCode) -> Result<SampleFeatures, EmbedError> {
        self.map
            .get(&(question_id.to_string(), language))
            .cloned()
            .ok_or_else(|| EmbedError::Missing(format!("{language} features for {question_id}")))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::corpus::fixtures::mini_corpus;
    use crate::embed::{ProviderDims, SyntheticProvider};

    struct Counting<P> {
        inner: P,
        calls: AtomicUsize,
        fail_text: bool,
    }

    impl<P: EmbeddingProvider> EmbeddingProvider for Counting<P> {
        fn id(&self) -> &str {
            self.inner.id()
        }
        fn config_hash(&self) -> String {
            self.inner.config_hash()
        }
        fn dims(&self) -> ProviderDims {
            self.inner.dims()
        }
        fn embed_video(&self, media: &[u8]) -> Result<Array2<f32>, EmbedError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.embed_video(media)
        }
        fn embed_audio(&self, w: &Waveform) -> Result<Array2<f32>, EmbedError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.embed_audio(w)
        }
        fn embed_text(&self, text: &str, lang: LanguageCode) -> Result<Array2<f32>, EmbedError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.fail_text && lang == LanguageCode::Hi {
                return Err(EmbedError::Provider("boom".into()));
            }
            self.inner.embed_text(text, lang)
        }
    }

    fn counting(fail_text: bool) -> Counting<SyntheticProvider> {
        Counting {
            inner: SyntheticProvider::new(3, ProviderDims::uniform(4, 6)).unwrap(),
            calls: AtomicUsize::new(0),
            fail_text,
        }
    }

    fn two_records() -> Vec<MultilingualQARecord> {
        let (mut records, _) = mini_corpus(1, 4);
        // distinct videos
        records.truncate(3);
        records.remove(1);
        records[1].video_id = "vid-other".into();
        records
    }

    fn options() -> ExtractOptions {
        ExtractOptions {
            retry_delay: Duration::ZERO,
            ..ExtractOptions::default()
        }
    }

    #[test]
    fn entry_counts_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let records = two_records();
        let media = MediaIndex::synthetic(records.iter().map(|r| r.video_id.as_str()));
        let provider = counting(false);
        let cache = TensorCache::open(dir.path()).unwrap();
        let report = extract_embeddings(&records, &media, &provider, &cache, &options()).unwrap();
        let count = |m: Modality| {
            let keys: BTreeSet<&String> = report
                .samples
                .samples
                .values()
                .flat_map(|k| match m {
                    Modality::Video => vec![&k.video],
                    Modality::Audio => vec![&k.audio],
                    Modality::Text => k.text.values().collect(),
                })
                .collect();
            keys.len()
        };
        assert_eq!(count(Modality::Video), 2);
        assert_eq!(count(Modality::Audio), 2);
        assert_eq!(count(Modality::Text), 16);
        assert_eq!(report.manifest.len(), 20);
        assert_eq!(report.extracted, 20);
        assert!(report.skipped.is_empty());

        let again = extract_embeddings(&records, &media, &provider, &cache, &options()).unwrap();
        assert_eq!(again.extracted, 0);
        assert_eq!(again.reused, 20);
        assert_eq!(provider.calls.load(Ordering::SeqCst), 20);
        assert_eq!(again.manifest, report.manifest);
    }

    #[test]
    fn missing_media_is_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let records = two_records();
        let mut media = MediaIndex::synthetic([records[0].video_id.as_str()]);
        media.skip_video("nothing");
        let cache = TensorCache::open(dir.path()).unwrap();
        let report = extract_embeddings(&records, &media, &counting(false), &cache, &options()).unwrap();
        assert_eq!(report.samples.len(), 1);
        assert!(report
            .skipped
            .iter()
            .all(|s| s.question_id == records[1].question_id && s.modality != Modality::Text));
        assert_eq!(report.skipped.len(), 2);
    }

    #[test]
    fn provider_failure_is_retried_then_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let records = two_records();
        let media = MediaIndex::synthetic(records.iter().map(|r| r.video_id.as_str()));
        let provider = counting(true);
        let cache = TensorCache::open(dir.path()).unwrap();
        let report = extract_embeddings(&records, &media, &provider, &cache, &options()).unwrap();
        assert!(report.samples.is_empty());
        assert_eq!(report.skipped.len(), 2);
        assert!(report.skipped.iter().all(|s| s.modality == Modality::Text && s.reason.contains("3 attempts")));
        // 2 video + 2 audio + 14 text + 2 hindi texts × 3 attempts
        assert_eq!(provider.calls.load(Ordering::SeqCst), 2 + 2 + 14 + 6);
    }

    #[test]
    fn corrupted_entry_errors_on_read_and_is_re_extracted_on_verify() {
        let dir = tempfile::tempdir().unwrap();
        let records = two_records();
        let media = MediaIndex::synthetic(records.iter().map(|r| r.video_id.as_str()));
        let provider = counting(false);
        let cache = TensorCache::open(dir.path()).unwrap();
        let report = extract_embeddings(&records, &media, &provider, &cache, &options()).unwrap();
        let qid = &records[0].question_id;
        let key = report.samples.get(qid).unwrap().video.clone();
        let path = cache.tensor_path(&key);
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 2] ^= 0x10;
        fs::write(&path, bytes).unwrap();

        let features = CachedFeatures::open(dir.path()).unwrap();
        assert!(matches!(
            features.features(qid, LanguageCode::En),
            Err(EmbedError::ChecksumMismatch { .. })
        ));

        let verify = ExtractOptions {
            verify: true,
            ..options()
        };
        let again = extract_embeddings(&records, &media, &provider, &cache, &verify).unwrap();
        assert_eq!(again.extracted, 1);
        let features = CachedFeatures::open(dir.path()).unwrap();
        assert!(features.features(qid, LanguageCode::En).is_ok());
    }

    #[test]
    fn preload_matches_direct_reads() {
        let dir = tempfile::tempdir().unwrap();
        let records = two_records();
        let media = MediaIndex::synthetic(records.iter().map(|r| r.video_id.as_str()));
        let cache = TensorCache::open(dir.path()).unwrap();
        extract_embeddings(&records, &media, &counting(false), &cache, &options()).unwrap();
        let cached = CachedFeatures::open(dir.path()).unwrap();
        let mem = cached
            .preload(records.iter().map(|r| r.question_id.as_str()), LanguageCode::Fr)
            .unwrap();
        for r in &records {
            assert_eq!(
                mem.features(&r.question_id, LanguageCode::Fr).unwrap(),
                cached.features(&r.question_id, LanguageCode::Fr).unwrap()
            );
        }
        assert!(mem.features(&records[0].question_id, LanguageCode::De).is_err());
    }

    #[test]
    fn media_index_from_json_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("media.json");
        fs::write(
            &path,
            r#"{"items": {"v1": {"kind": "files", "video": "v1.mp4", "audio": "v1.wav"}, "v2": {"kind": "synthetic"}}, "skip": ["v3"]}"#,
        )
        .unwrap();
        let index = MediaIndex::load(&path).unwrap();
        assert_eq!(
            index.items["v1"],
            MediaItem::Files {
                video: dir.path().join("v1.mp4"),
                audio: dir.path().join("v1.wav")
            }
        );
        assert!(index.skip.contains("v3"));
    }
}
