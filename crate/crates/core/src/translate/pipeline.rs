use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use unicode_normalization::UnicodeNormalization;

use super::{translate_with_retry, BackendError, RetryPolicy, TranslateError, TranslationBackend};
use crate::corpus::{AnswerVocabulary, LanguageCode, MultilingualQARecord};

#[derive(Debug, Clone, Copy)]
pub struct TranslateOptions {
    /// Upper bound on concurrent backend calls.
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlaggedRecord {
    pub question_id: String,
    pub language: LanguageCode,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct TranslationOutcome {
    /// Input order, minus flagged records.
    pub records: Vec<MultilingualQARecord>,
    pub vocabulary: AnswerVocabulary,
    pub flagged: Vec<FlaggedRecord>,
}

/// Translates every English question into each target language.
///
/// Distinct source strings are translated once per language, answer surface
/// forms once per vocabulary label. Records whose translation still fails
/// after retries are dropped and listed in [`TranslationOutcome::flagged`];
/// a failing answer label aborts the whole run since the vocabulary must stay
/// complete.
pub fn translate_corpus(
    source_records: &[MultilingualQARecord],
    source_vocab: &AnswerVocabulary,
    backend: &dyn TranslationBackend,
    targets: &[LanguageCode],
    options: TranslateOptions,
) -> Result<TranslationOutcome, TranslateError> {
    if let Some(bad) = targets.iter().find(|l| **l == LanguageCode::En) {
        return Err(TranslateError::Argument(format!(
            "{bad} is the source language, not a translation target"
        )));
    }
    let mut targets = targets.to_vec();
    targets.sort();
    targets.dedup();

    for record in source_records {
        if record.question(LanguageCode::En).is_none_or(|t| t.trim().is_empty()) {
            return Err(TranslateError::Argument(format!(
                "record {} has no English question",
                record.question_id
            )));
        }
    }
    for label in source_vocab.labels() {
        if label.english().is_empty() {
            return Err(TranslateError::Argument(format!(
                "label {} has no English surface",
                label.label_id
            )));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_in_flight.max(1))
        .build()
        .map_err(|e| TranslateError::Argument(format!("thread pool: {e}")))?;

    let mut unique: Vec<&str> = source_records
        .iter()
        .filter_map(|r| r.question(LanguageCode::En))
        .collect();
    unique.sort_unstable();
    unique.dedup();

    let question_jobs: Vec<(LanguageCode, &str)> = targets
        .iter()
        .flat_map(|&lang| unique.iter().map(move |text| (lang, *text)))
        .collect();
    // several labels share an English surface (e.g. "yes" under two types)
    let mut label_texts: Vec<&str> = source_vocab.labels().iter().map(|l| l.english()).collect();
    label_texts.sort_unstable();
    label_texts.dedup();
    let label_jobs: Vec<(LanguageCode, &str)> = targets
        .iter()
        .flat_map(|&lang| label_texts.iter().map(move |text| (lang, *text)))
        .collect();

    let run = |lang: LanguageCode, text: &str| -> Result<String, BackendError> {
        translate_with_retry(backend, options.retry, text, LanguageCode::En, lang)
            .map(|t| t.nfc().collect())
    };
    let (question_results, label_results) = pool.install(|| {
        let q: Vec<_> = question_jobs
            .par_iter()
            .map(|(lang, text)| run(*lang, text))
            .collect();
        let l: Vec<_> = label_jobs
            .par_iter()
            .map(|(lang, text)| run(*lang, text))
            .collect();
        (q, l)
    });

    let label_translations: HashMap<(LanguageCode, &str), Result<String, BackendError>> =
        label_jobs.iter().copied().zip(label_results).collect();
    let mut vocabulary = source_vocab.clone();
    for label in source_vocab.labels() {
        for &lang in &targets {
            let text = label_translations[&(lang, label.english())]
                .clone()
                .map_err(|source| TranslateError::Vocabulary {
                    label: label.label_id,
                    language: lang,
                    source,
                })?;
            vocabulary.set_surface(label.label_id, lang, text)?;
        }
    }

    let translations: HashMap<(LanguageCode, &str), Result<String, BackendError>> = question_jobs
        .iter()
        .copied()
        .zip(question_results)
        .collect();

    let mut records = Vec::with_capacity(source_records.len());
    let mut flagged = Vec::new();
    'records: for record in source_records {
        let english = record.question(LanguageCode::En).expect("checked above");
        let mut text: BTreeMap<LanguageCode, String> = record.question_text.clone();
        for &lang in &targets {
            match &translations[&(lang, english)] {
                Ok(t) => {
                    text.insert(lang, t.clone());
                }
                Err(e) => {
                    flagged.push(FlaggedRecord {
                        question_id: record.question_id.clone(),
                        language: lang,
                        error: e.message.clone(),
                    });
                    continue 'records;
                }
            }
        }
        let mut out = record.clone();
        out.question_text = text;
        records.push(out);
    }
    if !flagged.is_empty() {
        log::warn!("{} records excluded after translation failures", flagged.len());
    }
    Ok(TranslationOutcome {
        records,
        vocabulary,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::corpus::fixtures;
    use crate::translate::{IdentityBackend, TableBackend};

    fn source(n: usize) -> (Vec<MultilingualQARecord>, AnswerVocabulary) {
        let (records, vocab) = fixtures::mini_corpus(11, n);
        fixtures::english_only(&records, &vocab)
    }

    #[test]
    fn identity_backend_copies_english_everywhere() {
        let (records, vocab) = source(10);
        let out = translate_corpus(
            &records,
            &vocab,
            &IdentityBackend,
            &LanguageCode::TARGETS,
            TranslateOptions::default(),
        )
        .unwrap();
        assert!(out.flagged.is_empty());
        for r in &out.records {
            let en = r.question(LanguageCode::En).unwrap();
            assert!(LanguageCode::ALL.iter().all(|l| r.question(*l) == Some(en)));
        }
        assert_eq!(out.vocabulary.languages_covered(), LanguageCode::ALL.to_vec());
    }

    #[test]
    fn table_backend_entries_are_used() {
        let (mut records, vocab) = source(1);
        records[0]
            .question_text
            .insert(LanguageCode::En, "How many instruments".into());
        let table = {
            let mut t = TableBackend::new().with_passthrough(true);
            t.insert(LanguageCode::Fr, "How many instruments", "Combien d'instruments");
            t
        };
        let out = translate_corpus(&records, &vocab, &table, &[LanguageCode::Fr], TranslateOptions::default())
            .unwrap();
        assert_eq!(out.records[0].question(LanguageCode::Fr), Some("Combien d'instruments"));
    }

    #[test]
    fn preserves_count_ids_labels_and_splits() {
        let (records, vocab) = source(100);
        let table = TableBackend::new().with_passthrough(true);
        let out = translate_corpus(&records, &vocab, &table, &LanguageCode::TARGETS, TranslateOptions::default())
            .unwrap();
        assert_eq!(out.records.len(), 100);
        assert!(out.flagged.is_empty());
        for (a, b) in records.iter().zip(&out.records) {
            assert_eq!(a.question_id, b.question_id);
            assert_eq!(a.answer_label, b.answer_label);
            assert_eq!(a.split(), b.split());
        }
    }

    struct CountingBackend(std::sync::Mutex<Vec<String>>);

    impl TranslationBackend for CountingBackend {
        fn name(&self) -> &str {
            "counting"
        }

        fn translate(&self, text: &str, _: LanguageCode, t: LanguageCode) -> Result<String, BackendError> {
            self.0.lock().unwrap().push(format!("{t}:{text}"));
            if text.contains("cello") && t == LanguageCode::Hi && !text.starts_with("cello") {
                return Err(BackendError::permanent("refused"));
            }
            Ok(format!("[{t}] {text}"))
        }
    }

    #[test]
    fn answers_translated_once_per_label_and_failures_flagged() {
        let (records, vocab) = source(60);
        let backend = CountingBackend(Default::default());
        let out = translate_corpus(
            &records,
            &vocab,
            &backend,
            &[LanguageCode::Hi, LanguageCode::De],
            TranslateOptions {
                max_in_flight: 3,
                retry: RetryPolicy {
                    attempts: 2,
                    base_delay: std::time::Duration::from_millis(1),
                },
            },
        )
        .unwrap();
        let calls = backend.0.lock().unwrap().clone();
        let unique: HashSet<_> = calls.iter().collect();
        assert_eq!(unique.len(), calls.len(), "every string translated exactly once");

        let with_cello = records
            .iter()
            .filter(|r| r.question(LanguageCode::En).unwrap().contains("cello"))
            .count();
        assert!(with_cello > 0);
        assert_eq!(out.flagged.len(), with_cello);
        assert_eq!(out.records.len(), records.len() - with_cello);
        assert!(out.flagged.iter().all(|f| f.language == LanguageCode::Hi));
        let kept: Vec<_> = records
            .iter()
            .filter(|r| !r.question(LanguageCode::En).unwrap().contains("cello"))
            .map(|r| r.question_id.clone())
            .collect();
        let got: Vec<_> = out.records.iter().map(|r| r.question_id.clone()).collect();
        assert_eq!(got, kept, "input order preserved");
    }

    #[test]
    fn english_target_is_rejected() {
        let (records, vocab) = source(2);
        assert!(translate_corpus(&records, &vocab, &IdentityBackend, &[LanguageCode::En], TranslateOptions::default())
            .is_err());
    }
}
