use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, LanguageCode, QuestionType};

/// A canonical answer with its localized surface forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerLabel {
    pub label_id: u32,
    pub qtype: QuestionType,
    pub surface: BTreeMap<LanguageCode, String>,
}

impl AnswerLabel {
    pub fn english(&self) -> &str {
        self.surface
            .get(&LanguageCode::En)
            .map(String::as_str)
            .unwrap_or("")
    }
}

/// The closed answer set the classifiers predict over.
///
/// Label ids are dense and ordered by question-type name, then by English
/// surface form. The same English answer under two question types is two
/// distinct labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnswerVocabulary {
    labels: Vec<AnswerLabel>,
}

fn sort_key(label: &AnswerLabel) -> (&'static str, String) {
    (label.qtype.name(), label.english().to_string())
}

impl AnswerVocabulary {
    /// Assigns ids in canonical order. Input ids are ignored.
    pub fn build(
        entries: impl IntoIterator<Item = (QuestionType, BTreeMap<LanguageCode, String>)>,
    ) -> Result<Self, CorpusError> {
        let mut labels: Vec<AnswerLabel> = entries
            .into_iter()
            .map(|(qtype, surface)| AnswerLabel {
                label_id: 0,
                qtype,
                surface,
            })
            .collect();
        labels.sort_by_key(|l| sort_key(l));
        for pair in labels.windows(2) {
            if sort_key(&pair[0]) == sort_key(&pair[1]) {
                return Err(CorpusError::Vocabulary(format!(
                    "duplicate answer {:?} for question type {}",
                    pair[0].english(),
                    pair[0].qtype
                )));
            }
        }
        for (i, label) in labels.iter_mut().enumerate() {
            label.label_id = i as u32;
        }
        Ok(Self { labels })
    }

    /// Accepts labels as stored, checking density, canonical order and language coverage.
    pub fn from_labels(
        labels: Vec<AnswerLabel>,
        languages: &[LanguageCode],
    ) -> Result<Self, CorpusError> {
        for (i, label) in labels.iter().enumerate() {
            if label.label_id as usize != i {
                return Err(CorpusError::Vocabulary(format!(
                    "label ids must be dense 0..{}; position {i} holds id {}",
                    labels.len(),
                    label.label_id
                )));
            }
            for lang in languages {
                match label.surface.get(lang) {
                    Some(text) if !text.is_empty() => {}
                    _ => {
                        return Err(CorpusError::Vocabulary(format!(
                            "label {} has no {lang} surface form",
                            label.label_id
                        )))
                    }
                }
            }
        }
        let rebuilt = Self::build(labels.iter().map(|l| (l.qtype, l.surface.clone())))?;
        if rebuilt.labels != labels {
            return Err(CorpusError::Vocabulary(
                "labels are not in canonical order (question type name, then English surface)"
                    .into(),
            ));
        }
        Ok(rebuilt)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[AnswerLabel] {
        &self.labels
    }

    pub fn get(&self, label_id: u32) -> Option<&AnswerLabel> {
        self.labels.get(label_id as usize)
    }

    pub fn contains(&self, label_id: u32) -> bool {
        (label_id as usize) < self.labels.len()
    }

    pub fn surface(&self, label_id: u32, language: LanguageCode) -> Option<&str> {
        self.get(label_id)
            .and_then(|l| l.surface.get(&language))
            .map(String::as_str)
    }

    pub fn find(&self, qtype: QuestionType, english: &str) -> Option<&AnswerLabel> {
        self.labels
            .iter()
            .find(|l| l.qtype == qtype && l.english() == english)
    }

    /// Replaces one surface form in place. Ids and ordering are untouched.
    pub fn set_surface(
        &mut self,
        label_id: u32,
        language: LanguageCode,
        text: String,
    ) -> Result<(), CorpusError> {
        if language == LanguageCode::En {
            return Err(CorpusError::Vocabulary(
                "English surface forms define label order and cannot be rewritten".into(),
            ));
        }
        let label = self
            .labels
            .get_mut(label_id as usize)
            .ok_or_else(|| CorpusError::Vocabulary(format!("unknown label {label_id}")))?;
        label.surface.insert(language, text);
        Ok(())
    }

    pub fn languages_covered(&self) -> Vec<LanguageCode> {
        LanguageCode::ALL
            .into_iter()
            .filter(|lang| self.labels.iter().all(|l| l.surface.contains_key(lang)))
            .collect()
    }

    pub fn question_types(&self) -> Vec<QuestionType> {
        let mut seen = HashSet::new();
        self.labels
            .iter()
            .filter(|l| seen.insert(l.qtype))
            .map(|l| l.qtype)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en(text: &str) -> BTreeMap<LanguageCode, String> {
        BTreeMap::from([(LanguageCode::En, text.to_string())])
    }

    #[test]
    fn build_sorts_by_type_name_then_english() {
        let vocab = AnswerVocabulary::build([
            (QuestionType::Location, en("left")),
            (QuestionType::Existential, en("yes")),
            (QuestionType::Counting, en("two")),
            (QuestionType::Existential, en("no")),
        ])
        .unwrap();
        let order: Vec<_> = vocab
            .labels()
            .iter()
            .map(|l| (l.label_id, l.qtype, l.english().to_string()))
            .collect();
        assert_eq!(
            order,
            vec![
                (0, QuestionType::Counting, "two".into()),
                (1, QuestionType::Existential, "no".into()),
                (2, QuestionType::Existential, "yes".into()),
                (3, QuestionType::Location, "left".into()),
            ]
        );
    }

    #[test]
    fn same_answer_under_two_types_is_two_labels() {
        let vocab = AnswerVocabulary::build([
            (QuestionType::Location, en("yes")),
            (QuestionType::Existential, en("yes")),
        ])
        .unwrap();
        assert_eq!(vocab.len(), 2);
    }

    #[test]
    fn duplicate_answer_rejected() {
        let err = AnswerVocabulary::build([
            (QuestionType::Existential, en("yes")),
            (QuestionType::Existential, en("yes")),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn from_labels_rejects_sparse_ids_and_missing_languages() {
        let mut labels = AnswerVocabulary::build([(QuestionType::Existential, en("no"))])
            .unwrap()
            .labels()
            .to_vec();
        assert!(AnswerVocabulary::from_labels(labels.clone(), &[LanguageCode::En]).is_ok());
        assert!(AnswerVocabulary::from_labels(labels.clone(), &LanguageCode::ALL).is_err());
        labels[0].label_id = 3;
        assert!(AnswerVocabulary::from_labels(labels, &[LanguageCode::En]).is_err());
    }

    #[test]
    fn from_labels_rejects_non_canonical_order() {
        let mut labels = AnswerVocabulary::build([
            (QuestionType::Existential, en("no")),
            (QuestionType::Existential, en("yes")),
        ])
        .unwrap()
        .labels()
        .to_vec();
        labels.swap(0, 1);
        labels[0].label_id = 0;
        labels[1].label_id = 1;
        assert!(AnswerVocabulary::from_labels(labels, &[LanguageCode::En]).is_err());
    }
}
