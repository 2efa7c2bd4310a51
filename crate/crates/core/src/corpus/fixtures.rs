//! Deterministic corpora for tests, demos and smoke runs.
//!
//! [`music_avqa_metadata`] reproduces the published m-MUSIC-AVQA metadata
//! profile: 42 answer labels and the per-question-type totals and top-5
//! answer sets. Individual answer counts below the top five are synthetic.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AnswerVocabulary, LanguageCode, MultilingualQARecord, QuestionType, Split};

/// English answer followed by fr, hi, de, es, it, nl, pt.
const SURFACES: &[[&str; 8]] = &[
    ["no", "non", "नहीं", "nein", "no", "no", "nee", "não"],
    ["yes", "oui", "हाँ", "ja", "sí", "sì", "ja", "sim"],
    ["zero", "zéro", "शून्य", "null", "cero", "zero", "nul", "zero"],
    ["one", "un", "एक", "eins", "uno", "uno", "een", "um"],
    ["two", "deux", "दो", "zwei", "dos", "due", "twee", "dois"],
    ["three", "trois", "तीन", "drei", "tres", "tre", "drie", "três"],
    ["four", "quatre", "चार", "vier", "cuatro", "quattro", "vier", "quatro"],
    ["five", "cinq", "पाँच", "fünf", "cinco", "cinque", "vijf", "cinco"],
    ["six", "six", "छह", "sechs", "seis", "sei", "zes", "seis"],
    ["seven", "sept", "सात", "sieben", "siete", "sette", "zeven", "sete"],
    ["eight", "huit", "आठ", "acht", "ocho", "otto", "acht", "oito"],
    ["nine", "neuf", "नौ", "neun", "nueve", "nove", "negen", "nove"],
    ["ten", "dix", "दस", "zehn", "diez", "dieci", "tien", "dez"],
    ["left", "gauche", "बाएँ", "links", "izquierda", "sinistra", "links", "esquerda"],
    ["right", "droite", "दाएँ", "rechts", "derecha", "destra", "rechts", "direita"],
    ["middle", "milieu", "बीच", "Mitte", "medio", "centro", "midden", "meio"],
    ["indoor", "intérieur", "अंदर", "drinnen", "interior", "interno", "binnen", "interior"],
    ["outdoor", "extérieur", "बाहर", "draußen", "exterior", "esterno", "buiten", "exterior"],
    [
        "simultaneously",
        "simultanément",
        "एक साथ",
        "gleichzeitig",
        "simultáneamente",
        "simultaneamente",
        "tegelijkertijd",
        "simultaneamente",
    ],
    ["piano", "piano", "पियानो", "Klavier", "piano", "pianoforte", "piano", "piano"],
    ["guitar", "guitare", "गिटार", "Gitarre", "guitarra", "chitarra", "gitaar", "violão"],
    ["cello", "violoncelle", "चेलो", "Cello", "violonchelo", "violoncello", "cello", "violoncelo"],
    ["flute", "flûte", "बांसुरी", "Flöte", "flauta", "flauto", "fluit", "flauta"],
    ["drum", "tambour", "ढोल", "Trommel", "tambor", "tamburo", "trommel", "tambor"],
    ["violin", "violon", "वायलिन", "Geige", "violín", "violino", "viool", "violino"],
    ["accordion", "accordéon", "अकॉर्डियन", "Akkordeon", "acordeón", "fisarmonica", "accordeon", "acordeão"],
    ["bagpipe", "cornemuse", "बैगपाइप", "Dudelsack", "gaita", "cornamusa", "doedelzak", "gaita de foles"],
    ["banjo", "banjo", "बैंजो", "Banjo", "banjo", "banjo", "banjo", "banjo"],
    ["clarinet", "clarinette", "शहनाई", "Klarinette", "clarinete", "clarinetto", "klarinet", "clarinete"],
    ["erhu", "erhu", "एरहू", "Erhu", "erhu", "erhu", "erhu", "erhu"],
    ["guzheng", "guzheng", "गुझेंग", "Guzheng", "guzheng", "guzheng", "guzheng", "guzheng"],
    ["saxophone", "saxophone", "सैक्सोफोन", "Saxophon", "saxofón", "sassofono", "saxofoon", "saxofone"],
];

/// Question templates, `{i}` is an instrument name. Same language order as [`SURFACES`].
const TEMPLATES: &[(QuestionType, [&str; 8])] = &[
    (
        QuestionType::Existential,
        [
            "Is the {i} in the video always playing?",
            "Le {i} dans la vidéo joue-t-il toujours ?",
            "क्या वीडियो में {i} हमेशा बज रहा है?",
            "Spielt das {i} im Video die ganze Zeit?",
            "¿El {i} del video está sonando siempre?",
            "Il {i} nel video suona sempre?",
            "Speelt de {i} in de video altijd?",
            "O {i} no vídeo está sempre tocando?",
        ],
    ),
    (
        QuestionType::Location,
        [
            "Where is the {i}?",
            "Où est le {i} ?",
            "{i} कहाँ है?",
            "Wo ist das {i}?",
            "¿Dónde está el {i}?",
            "Dov'è il {i}?",
            "Waar is de {i}?",
            "Onde está o {i}?",
        ],
    ),
    (
        QuestionType::Counting,
        [
            "How many {i} are in the entire video?",
            "Combien de {i} y a-t-il dans toute la vidéo ?",
            "पूरे वीडियो में कितने {i} हैं?",
            "Wie viele {i} sind im ganzen Video?",
            "¿Cuántos {i} hay en todo el video?",
            "Quanti {i} ci sono in tutto il video?",
            "Hoeveel {i} zijn er in de hele video?",
            "Quantos {i} há no vídeo inteiro?",
        ],
    ),
    (
        QuestionType::Comparative,
        [
            "Is the {i} louder than the other instruments?",
            "Le {i} est-il plus fort que les autres instruments ?",
            "क्या {i} अन्य वाद्ययंत्रों से अधिक तेज़ है?",
            "Ist das {i} lauter als die anderen Instrumente?",
            "¿El {i} suena más fuerte que los otros instrumentos?",
            "Il {i} è più forte degli altri strumenti?",
            "Is de {i} luider dan de andere instrumenten?",
            "O {i} é mais alto que os outros instrumentos?",
        ],
    ),
    (
        QuestionType::Temporal,
        [
            "Which instrument sounds after the {i}?",
            "Quel instrument joue après le {i} ?",
            "{i} के बाद कौन सा वाद्ययंत्र बजता है?",
            "Welches Instrument erklingt nach dem {i}?",
            "¿Qué instrumento suena después del {i}?",
            "Quale strumento suona dopo il {i}?",
            "Welk instrument klinkt na de {i}?",
            "Qual instrumento soa depois do {i}?",
        ],
    ),
];

const SLOT_INSTRUMENTS: [&str; 8] = [
    "piano", "guitar", "cello", "flute", "drum", "violin", "accordion", "banjo",
];

/// Answer counts per question type. The first five entries are the top-5
/// answers (two for the yes/no types).
const ANSWER_COUNTS: &[(QuestionType, &[(&str, usize)])] = &[
    (QuestionType::Existential, &[("no", 2600), ("yes", 2390)]),
    (
        QuestionType::Location,
        &[
            ("yes", 700),
            ("no", 650),
            ("left", 420),
            ("right", 400),
            ("middle", 369),
            ("indoor", 300),
            ("outdoor", 300),
            ("piano", 300),
            ("guitar", 300),
            ("cello", 300),
            ("flute", 290),
            ("drum", 286),
        ],
    ),
    (
        QuestionType::Counting,
        &[
            ("one", 1900),
            ("two", 1700),
            ("three", 1100),
            ("zero", 900),
            ("four", 625),
            ("five", 30),
            ("six", 28),
            ("seven", 24),
            ("eight", 20),
            ("nine", 14),
            ("ten", 10),
        ],
    ),
    (QuestionType::Comparative, &[("yes", 2900), ("no", 2645)]),
    (
        QuestionType::Temporal,
        &[
            ("simultaneously", 700),
            ("right", 420),
            ("left", 400),
            ("middle", 320),
            ("violin", 240),
            ("accordion", 211),
            ("bagpipe", 210),
            ("banjo", 210),
            ("cello", 210),
            ("clarinet", 210),
            ("erhu", 200),
            ("flute", 200),
            ("guzheng", 200),
            ("piano", 200),
            ("saxophone", 200),
        ],
    ),
];

fn surfaces(english: &str) -> BTreeMap<LanguageCode, String> {
    let row = SURFACES
        .iter()
        .find(|row| row[0] == english)
        .unwrap_or_else(|| panic!("no surface table entry for {english:?}"));
    LanguageCode::ALL
        .into_iter()
        .zip(row.iter())
        .map(|(lang, text)| (lang, text.to_string()))
        .collect()
}

/// The 42-label m-MUSIC-AVQA answer vocabulary with all eight languages.
pub fn music_avqa_vocabulary() -> AnswerVocabulary {
    let entries = ANSWER_COUNTS.iter().flat_map(|(qtype, answers)| {
        answers
            .iter()
            .map(move |(english, _)| (*qtype, surfaces(english)))
    });
    AnswerVocabulary::build(entries).expect("fixture vocabulary is unique")
}

fn question_text(qtype: QuestionType, instrument: &str) -> BTreeMap<LanguageCode, String> {
    let (_, templates) = TEMPLATES
        .iter()
        .find(|(q, _)| *q == qtype)
        .expect("template for every MUSIC-AVQA type");
    let names = surfaces(instrument);
    LanguageCode::ALL
        .into_iter()
        .zip(templates.iter())
        .map(|(lang, t)| (lang, t.replace("{i}", &names[&lang])))
        .collect()
}

fn draw_split(rng: &mut ChaCha8Rng) -> Split {
    match rng.random_range(0..100) {
        0..70 => Split::Train,
        70..80 => Split::Val,
        _ => Split::Test,
    }
}

/// Full-size metadata corpus (25,632 questions) matching the published
/// per-type question counts and top-5 answer sets.
pub fn music_avqa_metadata() -> (Vec<MultilingualQARecord>, AnswerVocabulary) {
    let vocab = music_avqa_vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4d55_5349_43);
    let mut records = Vec::new();
    for (qtype, answers) in ANSWER_COUNTS {
        for (english, count) in answers.iter() {
            let label = vocab.find(*qtype, english).expect("label exists").label_id;
            for _ in 0..*count {
                let i = records.len();
                let instrument = SLOT_INSTRUMENTS[i % SLOT_INSTRUMENTS.len()];
                records.push(MultilingualQARecord::new(
                    format!("mm-{i:05}"),
                    format!("video-{:04}", i % 9288),
                    *qtype,
                    question_text(*qtype, instrument),
                    label,
                    Some(draw_split(&mut rng)),
                ));
            }
        }
    }
    (records, vocab)
}

/// Small random corpus over the full vocabulary, for smoke runs.
pub fn mini_corpus(seed: u64, n: usize) -> (Vec<MultilingualQARecord>, AnswerVocabulary) {
    let vocab = music_avqa_vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let label = vocab.get(rng.random_range(0..vocab.len() as u32)).unwrap();
            let instrument = SLOT_INSTRUMENTS[rng.random_range(0..SLOT_INSTRUMENTS.len())];
            let split = match i % 5 {
                0..=2 => Split::Train,
                3 => Split::Val,
                _ => Split::Test,
            };
            MultilingualQARecord::new(
                format!("mini-{i:04}"),
                format!("vid-{:03}", i / 2),
                label.qtype,
                question_text(label.qtype, instrument),
                label.label_id,
                Some(split),
            )
        })
        .collect();
    (records, vocab)
}

/// Strips every language but English from records and vocabulary.
pub fn english_only(
    records: &[MultilingualQARecord],
    vocab: &AnswerVocabulary,
) -> (Vec<MultilingualQARecord>, AnswerVocabulary) {
    let keep_en = |m: &BTreeMap<LanguageCode, String>| {
        m.iter()
            .filter(|(l, _)| **l == LanguageCode::En)
            .map(|(l, t)| (*l, t.clone()))
            .collect::<BTreeMap<_, _>>()
    };
    let records = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.question_text = keep_en(&r.question_text);
            r
        })
        .collect();
    let vocab = AnswerVocabulary::build(vocab.labels().iter().map(|l| (l.qtype, keep_en(&l.surface))))
        .expect("subset of a valid vocabulary");
    (records, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_stats;

    #[test]
    fn vocabulary_has_42_labels_with_all_languages() {
        let vocab = music_avqa_vocabulary();
        assert_eq!(vocab.len(), 42);
        assert_eq!(vocab.languages_covered(), LanguageCode::ALL.to_vec());
    }

    #[test]
    fn top_answers_dominate_the_tail() {
        for (_, answers) in ANSWER_COUNTS {
            let head = answers.len().min(5);
            let min_top = answers[..head].iter().map(|a| a.1).min().unwrap();
            assert!(answers[head..].iter().all(|a| a.1 < min_top));
        }
    }

    #[test]
    fn mini_corpus_is_deterministic() {
        assert_eq!(mini_corpus(3, 20), mini_corpus(3, 20));
        assert_ne!(mini_corpus(3, 20).0, mini_corpus(4, 20).0);
    }

    #[test]
    fn metadata_stats() {
        let (records, vocab) = music_avqa_metadata();
        let stats = corpus_stats(&records, &vocab, 5);
        let counting = stats.get(QuestionType::Counting).unwrap();
        assert_eq!(counting.total_questions, 6351);
        assert_eq!(counting.top_total(), 6225);
    }
}
