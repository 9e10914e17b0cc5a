//! Deterministic bilingual corpora for tests, examples, and the guide.
//!
//! [`sample_corpus`] builds small archival-register documents whose shape
//! the mock backend's simulator understands end to end: every paragraph
//! carries one long evidence sentence opening with a subject phrase that
//! is unique across the whole corpus, so generated questions, retrieval,
//! and review all resolve to the right paragraph without any scripting.
//! Subjects come from fixed word tables indexed arithmetically; the seed
//! only varies the filler sentences around them. [`paragraph_subject`]
//! reproduces the subject for any (document, paragraph) pair, which lets
//! tests target specific candidates with scripted mock rules no matter
//! what seed built the corpus.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Domain, Language, SegmentConfig};
use crate::pipeline::SynthesisConfig;

/// Paragraphs per fixture document; with [`sample_config`] each becomes
/// exactly one fragment.
pub const FIXTURE_PARAGRAPHS: usize = 5;

// 23 and 25 are coprime, so (adjective, noun) pairs stay distinct for the
// first 575 paragraph indices.
const EN_ADJECTIVES: [&str; 23] = [
    "amber", "basalt", "cedar", "derelict", "eastern", "fabled", "granite", "harborside",
    "inland", "jasper", "keeled", "lacquered", "meridian", "northern", "obsidian", "painted",
    "quarried", "riveted", "saffron", "timbered", "upland", "varnished", "western",
];

const EN_NOUNS: [&str; 25] = [
    "almanac", "ballast", "census", "dossier", "ferry", "gazette", "hoist", "inventory",
    "jetty", "keystone", "ledger", "manifest", "nave", "orchard", "pier", "quarry", "registry",
    "sawmill", "terrace", "undercroft", "viaduct", "warehouse", "wharf", "windlass", "yardarm",
];

const EN_VERBS: [&str; 7] = [
    "was moved to the lower annex for safekeeping",
    "survived the spring flood with minor damage",
    "was catalogued twice by the visiting clerks",
    "gained a fresh index of forty entries",
    "was sealed behind the oak partition wall",
    "received a full audit from the council",
    "was copied page by page onto vellum",
];

const EN_ORDINALS: [&str; 11] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
    "tenth", "eleventh",
];

const EN_OPENERS: [&str; 4] = [
    "Field notes from the winter survey continue here in steady measured detail.",
    "The caretaker's log for this stretch of weeks stays brief and orderly.",
    "Routine observations for the period are set down plainly in this section.",
    "This part of the record keeps to the usual dry administrative tone.",
];

const EN_CLOSERS: [&str; 4] = [
    "A short note on housekeeping closes the entry without further remark.",
    "Nothing else of consequence was recorded before the page was ruled off.",
    "The entry ends with the clerk's initials and the customary date stamp.",
    "A final line confirms everything was returned to its shelf.",
];

const ZH_ADJECTIVES: [&str; 23] = [
    "青铜", "灰岩", "北岸", "南郊", "旧城", "沿河", "山脚", "西巷", "东渡", "中枢", "云杉",
    "石桥", "铁闸", "柳巷", "盐仓", "杏林", "竹坞", "枫泾", "梅岭", "桂坊", "蓝田", "赤壁",
    "白沙",
];

const ZH_NOUNS: [&str; 25] = [
    "档案", "航运", "粮仓", "渡口", "织坊", "窑场", "驿站", "书局", "盐务", "漕运", "桥梁",
    "堤坝", "作坊", "货栈", "矿脉", "祠堂", "钟楼", "义仓", "塘堰", "渔栅", "学塾", "药铺",
    "布庄", "车马", "灯塔",
];

const ZH_NUMERALS: [&str; 11] = [
    "一", "二", "三", "四", "五", "六", "七", "八", "九", "十", "十一",
];

const ZH_OPENERS: [&str; 4] = [
    "本段先交代当季巡查的大致安排与分工。",
    "这一节照例写下库房日常事务的概况。",
    "开头几句说明本期清点工作的次序。",
    "先以数语概述当月造册与归档情形。",
];

const ZH_CLOSERS: [&str; 4] = [
    "末尾附上例行维护的简短说明。",
    "本段至此结束，后文另起新页。",
    "其余琐事不再一一列入此段。",
    "相关细目见卷尾所附清单为准。",
];

/// Language of fixture document `doc_index`: even indices are English,
/// odd are Chinese.
pub fn fixture_language(doc_index: usize) -> Language {
    if doc_index.is_multiple_of(2) {
        Language::En
    } else {
        Language::Zh
    }
}

/// The subject phrase planted in paragraph `paragraph_index` of fixture
/// document `doc_index`. This is what the simulator extracts as the
/// question subject, so mock rules containing it target exactly that
/// candidate. Seed-independent.
pub fn paragraph_subject(doc_index: usize, paragraph_index: usize) -> String {
    assert!(paragraph_index < FIXTURE_PARAGRAPHS);
    let k = doc_index * FIXTURE_PARAGRAPHS + paragraph_index;
    match fixture_language(doc_index) {
        Language::En => format!(
            "The {} {} archive",
            EN_ADJECTIVES[k % EN_ADJECTIVES.len()],
            EN_NOUNS[k % EN_NOUNS.len()]
        ),
        Language::Zh => format!(
            "{}{}记事",
            ZH_ADJECTIVES[k % ZH_ADJECTIVES.len()],
            ZH_NOUNS[k % ZH_NOUNS.len()]
        ),
    }
}

fn en_paragraph(k: usize, subject: &str, rng: &mut ChaCha8Rng) -> String {
    let opener = EN_OPENERS[rng.gen_range(0..EN_OPENERS.len())];
    let closer = EN_CLOSERS[rng.gen_range(0..EN_CLOSERS.len())];
    let verb = EN_VERBS[k % EN_VERBS.len()];
    let ordinal = EN_ORDINALS[k % EN_ORDINALS.len()];
    format!("{opener} {subject} {verb} during the {ordinal} survey season. {closer}")
}

fn zh_paragraph(k: usize, subject: &str, rng: &mut ChaCha8Rng) -> String {
    let opener = ZH_OPENERS[rng.gen_range(0..ZH_OPENERS.len())];
    let closer = ZH_CLOSERS[rng.gen_range(0..ZH_CLOSERS.len())];
    let numeral = ZH_NUMERALS[k % ZH_NUMERALS.len()];
    format!("{opener}{subject}在第{numeral}卷档册中有完整记载并妥善保存至今。{closer}")
}

/// Build `docs` fixture documents, alternating English and Chinese and
/// cycling the three domains. Same seed, same corpus, byte for byte;
/// different seeds vary the filler sentences but never the subjects.
pub fn sample_corpus(docs: usize, seed: u64) -> Vec<Document> {
    (0..docs)
        .map(|d| {
            let language = fixture_language(d);
            let domain = [Domain::Law, Domain::Books, Domain::Other][d % 3];
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let paragraphs: Vec<String> = (0..FIXTURE_PARAGRAPHS)
                .map(|p| {
                    let k = d * FIXTURE_PARAGRAPHS + p;
                    let subject = paragraph_subject(d, p);
                    match language {
                        Language::En => en_paragraph(k, &subject, &mut rng),
                        Language::Zh => zh_paragraph(k, &subject, &mut rng),
                    }
                })
                .collect();
            let id = format!("fx-{language}-{d:03}");
            Document::new(id, language, domain, paragraphs.join("\n\n"))
                .expect("fixture text is non-empty")
        })
        .collect()
}

/// Synthesis configuration tuned to the fixture corpus: fragment sizing
/// that makes every paragraph exactly one fragment, five fragments
/// requested per document. Seed and label mix keep their defaults for the
/// caller to set.
pub fn sample_config() -> SynthesisConfig {
    SynthesisConfig {
        fragments_per_document: FIXTURE_PARAGRAPHS,
        segments: SegmentConfig {
            min_tokens: 8,
            max_tokens: 64,
            strict: true,
        },
        ..SynthesisConfig::default()
    }
}
