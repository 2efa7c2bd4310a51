use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::{AnswerVocabulary, CorpusError, MultilingualQARecord, QuestionType, Split};

/// Per question type: total questions and the most frequent answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypeStats {
    pub total_questions: usize,
    /// `(English surface, count)`, descending count, ties broken lexicographically.
    pub top_answers: Vec<(String, usize)>,
}

impl TypeStats {
    /// Number of questions covered by the listed top answers.
    pub fn top_total(&self) -> usize {
        self.top_answers.iter().map(|(_, c)| c).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CorpusStats {
    pub per_type: BTreeMap<QuestionType, TypeStats>,
}

impl CorpusStats {
    pub fn total(&self) -> usize {
        self.per_type.values().map(|s| s.total_questions).sum()
    }

    pub fn get(&self, qtype: QuestionType) -> Option<&TypeStats> {
        self.per_type.get(&qtype)
    }
}

pub fn corpus_stats(
    records: &[MultilingualQARecord],
    vocab: &AnswerVocabulary,
    top_k: usize,
) -> CorpusStats {
    let mut by_type: BTreeMap<QuestionType, HashMap<u32, usize>> = BTreeMap::new();
    for record in records {
        *by_type
            .entry(record.question_type)
            .or_default()
            .entry(record.answer_label)
            .or_default() += 1;
    }
    let per_type = by_type
        .into_iter()
        .map(|(qtype, counts)| {
            let total_questions = counts.values().sum();
            let mut answers: Vec<(String, usize)> = counts
                .into_iter()
                .map(|(label, count)| {
                    let name = vocab
                        .get(label)
                        .map(|l| l.english().to_string())
                        .unwrap_or_else(|| format!("#{label}"));
                    (name, count)
                })
                .collect();
            answers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            answers.truncate(top_k);
            (
                qtype,
                TypeStats {
                    total_questions,
                    top_answers: answers,
                },
            )
        })
        .collect();
    CorpusStats { per_type }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitPartition {
    pub train: Vec<MultilingualQARecord>,
    pub val: Vec<MultilingualQARecord>,
    pub test: Vec<MultilingualQARecord>,
}

impl SplitPartition {
    pub fn get(&self, split: Split) -> &[MultilingualQARecord] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Splits records by their tag, keeping input order within each split.
pub fn partition_by_split(
    records: &[MultilingualQARecord],
) -> Result<SplitPartition, CorpusError> {
    let mut out = SplitPartition::default();
    for record in records {
        let bucket = match record.split() {
            Some(Split::Train) => &mut out.train,
            Some(Split::Val) => &mut out.val,
            Some(Split::Test) => &mut out.test,
            None => return Err(CorpusError::MissingSplit(record.question_id.clone())),
        };
        bucket.push(record.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{fixtures, LanguageCode};

    fn record(qid: &str, qtype: QuestionType, label: u32, split: Option<Split>) -> MultilingualQARecord {
        let text = LanguageCode::ALL
            .into_iter()
            .map(|l| (l, format!("{qid}-{l}")))
            .collect();
        MultilingualQARecord::new(qid, "v", qtype, text, label, split)
    }

    #[test]
    fn empty_input_gives_zeroed_stats() {
        let stats = corpus_stats(&[], &fixtures::music_avqa_vocabulary(), 5);
        assert_eq!(stats.total(), 0);
        assert!(stats.per_type.is_empty());
    }

    #[test]
    fn singleton_existential_no() {
        let vocab = fixtures::music_avqa_vocabulary();
        let no = vocab.find(QuestionType::Existential, "no").unwrap().label_id;
        let stats = corpus_stats(&[record("q", QuestionType::Existential, no, Some(Split::Train))], &vocab, 5);
        let ex = stats.get(QuestionType::Existential).unwrap();
        assert_eq!(ex.total_questions, 1);
        assert_eq!(ex.top_answers, vec![("no".to_string(), 1)]);
    }

    #[test]
    fn one_record_per_type() {
        let vocab = fixtures::music_avqa_vocabulary();
        let records: Vec<_> = QuestionType::MUSIC_AVQA
            .into_iter()
            .enumerate()
            .map(|(i, qt)| {
                let label = vocab.labels().iter().find(|l| l.qtype == qt).unwrap().label_id;
                record(&format!("q{i}"), qt, label, Some(Split::Train))
            })
            .collect();
        let stats = corpus_stats(&records, &vocab, 5);
        assert_eq!(stats.per_type.len(), 5);
        assert!(stats.per_type.values().all(|s| s.total_questions == 1));
    }

    #[test]
    fn ties_break_lexicographically() {
        let vocab = fixtures::music_avqa_vocabulary();
        let yes = vocab.find(QuestionType::Existential, "yes").unwrap().label_id;
        let no = vocab.find(QuestionType::Existential, "no").unwrap().label_id;
        let records = vec![
            record("a", QuestionType::Existential, yes, Some(Split::Train)),
            record("b", QuestionType::Existential, no, Some(Split::Train)),
        ];
        let stats = corpus_stats(&records, &vocab, 5);
        assert_eq!(
            stats.get(QuestionType::Existential).unwrap().top_answers,
            vec![("no".to_string(), 1), ("yes".to_string(), 1)]
        );
    }

    #[test]
    fn partition_counts() {
        let splits = [Split::Train; 6]
            .into_iter()
            .chain([Split::Val; 2])
            .chain([Split::Test; 2]);
        let records: Vec<_> = splits
            .enumerate()
            .map(|(i, s)| record(&format!("q{i}"), QuestionType::Counting, 0, Some(s)))
            .collect();
        let p = partition_by_split(&records).unwrap();
        assert_eq!((p.train.len(), p.val.len(), p.test.len()), (6, 2, 2));
        assert_eq!(p.train[0].question_id, "q0");
        assert_eq!(p.test[1].question_id, "q9");
    }

    #[test]
    fn all_train_leaves_val_and_test_empty() {
        let records: Vec<_> = (0..4)
            .map(|i| record(&format!("q{i}"), QuestionType::Counting, 0, Some(Split::Train)))
            .collect();
        let p = partition_by_split(&records).unwrap();
        assert_eq!(p.train.len(), 4);
        assert!(p.val.is_empty() && p.test.is_empty());
    }

    #[test]
    fn missing_split_is_an_error() {
        let records = vec![record("lonely", QuestionType::Counting, 0, None)];
        match partition_by_split(&records) {
            Err(CorpusError::MissingSplit(id)) => assert_eq!(id, "lonely"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn partition_and_stats_conserve_records(tags in proptest::collection::vec(0u8..3, 0..60)) {
            let vocab = fixtures::music_avqa_vocabulary();
            let records: Vec<_> = tags
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let split = [Split::Train, Split::Val, Split::Test][*t as usize];
                    let label = vocab.get((i % vocab.len()) as u32).unwrap();
                    record(&format!("q{i}"), label.qtype, label.label_id, Some(split))
                })
                .collect();
            let p = partition_by_split(&records).unwrap();
            prop_assert_eq!(p.train.len() + p.val.len() + p.test.len(), records.len());
            let mut ids = HashSet::new();
            for r in p.train.iter().chain(&p.val).chain(&p.test) {
                prop_assert!(ids.insert(r.question_id.clone()));
            }
            prop_assert_eq!(corpus_stats(&records, &vocab, 5).total(), records.len());
        }
    }
}
