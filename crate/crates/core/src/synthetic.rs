//! Template grammar behind the bundled corpus and the 8-challenge minimal
//! pair suite. Both are pure functions of a seed.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::eval::{Challenge, ChallengeSuite, MinimalPair};

pub const CORPUS_SEED: u64 = 20_240_601;
pub const SUITE_SEED: u64 = 1_729;
pub const CORPUS_TOKENS: usize = 1_000_000;
pub const PAIRS_PER_CHALLENGE: usize = 200;

// (singular, plural), most frequent first
const ANIMATE: &[(&str, &str)] = &[
    ("man", "men"),
    ("woman", "women"),
    ("child", "children"),
    ("dog", "dogs"),
    ("cat", "cats"),
    ("teacher", "teachers"),
    ("student", "students"),
    ("friend", "friends"),
    ("doctor", "doctors"),
    ("girl", "girls"),
    ("boy", "boys"),
    ("person", "people"),
    ("bird", "birds"),
    ("horse", "horses"),
    ("king", "kings"),
    ("farmer", "farmers"),
    ("neighbor", "neighbors"),
    ("soldier", "soldiers"),
    ("actor", "actors"),
    ("driver", "drivers"),
    ("baby", "babies"),
    ("lady", "ladies"),
    ("mouse", "mice"),
    ("writer", "writers"),
    ("singer", "singers"),
    ("lawyer", "lawyers"),
    ("nurse", "nurses"),
    ("player", "players"),
    ("cousin", "cousins"),
    ("judge", "judges"),
    ("officer", "officers"),
    ("guest", "guests"),
    ("queen", "queens"),
    ("baker", "bakers"),
    ("pilot", "pilots"),
    ("painter", "painters"),
    ("sailor", "sailors"),
    ("dancer", "dancers"),
    ("waiter", "waiters"),
    ("hunter", "hunters"),
    ("fox", "foxes"),
    ("wolf", "wolves"),
    ("thief", "thieves"),
    ("goose", "geese"),
    ("rabbit", "rabbits"),
    ("tiger", "tigers"),
    ("monkey", "monkeys"),
    ("poet", "poets"),
    ("clerk", "clerks"),
    ("chef", "chefs"),
    ("knight", "knights"),
    ("prince", "princes"),
    ("witch", "witches"),
    ("tourist", "tourists"),
    ("barber", "barbers"),
    ("tailor", "tailors"),
    ("scientist", "scientists"),
    ("guard", "guards"),
    ("coach", "coaches"),
    ("donkey", "donkeys"),
];

const THINGS: &[(&str, &str)] = &[
    ("house", "houses"),
    ("car", "cars"),
    ("table", "tables"),
    ("tree", "trees"),
    ("door", "doors"),
    ("window", "windows"),
    ("road", "roads"),
    ("river", "rivers"),
    ("garden", "gardens"),
    ("school", "schools"),
    ("chair", "chairs"),
    ("wall", "walls"),
    ("shop", "shops"),
    ("bridge", "bridges"),
    ("box", "boxes"),
    ("lamp", "lamps"),
    ("hill", "hills"),
    ("lake", "lakes"),
    ("church", "churches"),
    ("station", "stations"),
    ("fence", "fences"),
    ("boat", "boats"),
    ("bench", "benches"),
    ("tower", "towers"),
    ("gate", "gates"),
    ("barn", "barns"),
];

// (third singular, plural, past = participle)
const INTRANSITIVE: &[(&str, &str, &str)] = &[
    ("waits", "wait", "waited"),
    ("laughs", "laugh", "laughed"),
    ("smiles", "smile", "smiled"),
    ("arrives", "arrive", "arrived"),
    ("sleeps", "sleep", "slept"),
    ("works", "work", "worked"),
    ("cries", "cry", "cried"),
    ("jumps", "jump", "jumped"),
    ("listens", "listen", "listened"),
    ("travels", "travel", "travelled"),
    ("shouts", "shout", "shouted"),
    ("yawns", "yawn", "yawned"),
    ("dances", "dance", "danced"),
    ("rests", "rest", "rested"),
    ("complains", "complain", "complained"),
    ("wanders", "wander", "wandered"),
    ("sneezes", "sneeze", "sneezed"),
    ("coughs", "cough", "coughed"),
    ("frowns", "frown", "frowned"),
    ("sighs", "sigh", "sighed"),
    ("blushes", "blush", "blushed"),
    ("hesitates", "hesitate", "hesitated"),
];

const TRANSITIVE: &[(&str, &str, &str)] = &[
    ("sees", "see", "saw"),
    ("likes", "like", "liked"),
    ("helps", "help", "helped"),
    ("finds", "find", "found"),
    ("calls", "call", "called"),
    ("watches", "watch", "watched"),
    ("follows", "follow", "followed"),
    ("visits", "visit", "visited"),
    ("loves", "love", "loved"),
    ("meets", "meet", "met"),
    ("hates", "hate", "hated"),
    ("chases", "chase", "chased"),
    ("trusts", "trust", "trusted"),
    ("praises", "praise", "praised"),
    ("hurts", "hurt", "hurt"),
    ("blames", "blame", "blamed"),
    ("admires", "admire", "admired"),
    ("greets", "greet", "greeted"),
    ("thanks", "thank", "thanked"),
    ("scares", "scare", "scared"),
    ("pushes", "push", "pushed"),
    ("ignores", "ignore", "ignored"),
    ("hugs", "hug", "hugged"),
    ("teaches", "teach", "taught"),
];

const PREPOSITIONS: &[&str] = &["near", "behind", "beside", "under", "with"];
const ADJECTIVES: &[&str] = &[
    "old", "young", "small", "big", "happy", "tall", "quiet", "busy", "clever", "angry", "tired", "brave", "lazy",
    "proud", "shy", "polite",
];
const ADVERBS: &[&str] = &[
    "today", "again", "there", "often", "outside", "quickly", "slowly", "yesterday", "quietly", "twice",
];
const MALE: &[&str] = &[
    "John", "David", "Peter", "Paul", "Mark", "James", "Tom", "Robert", "Carl", "Henry", "Frank", "George", "Simon",
    "Adam", "Victor", "Oscar", "Walter", "Dennis", "Gregory", "Vincent",
];
const FEMALE: &[&str] = &[
    "Mary", "Anna", "Susan", "Laura", "Emma", "Sarah", "Alice", "Jane", "Rose", "Helen", "Julia", "Linda", "Diana",
    "Claire", "Monica", "Irene", "Martha", "Sylvia", "Vera", "Beatrice",
];

const SG_DETS: &[&str] = &["the", "a", "this", "that", "every", "each"];
const PL_DETS: &[&str] = &["the", "some", "these", "those", "many", "two"];

fn flip_det(det: &str) -> &'static str {
    match det {
        "this" => "these",
        "these" => "this",
        "that" => "those",
        "those" => "that",
        _ => unreachable!("no number partner for {det}"),
    }
}

struct Phrase {
    words: Vec<&'static str>,
    /// Longest root-to-word path inside the phrase.
    depth: usize,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    *xs.choose(rng).expect("non-empty word list")
}

fn noun(rng: &mut ChaCha8Rng, list: &[(&'static str, &'static str)], plural: bool) -> &'static str {
    let (sg, pl) = pick(rng, list);
    if plural {
        pl
    } else {
        sg
    }
}

/// Determiner, optional adjective, noun.
fn noun_phrase(rng: &mut ChaCha8Rng, list: &[(&'static str, &'static str)], plural: bool, adj_rate: f64) -> Phrase {
    let mut words = vec![pick(rng, if plural { PL_DETS } else { SG_DETS })];
    let mut depth = 1;
    if rng.random_bool(adj_rate) {
        words.push(pick(rng, ADJECTIVES));
        depth = 2;
    }
    words.push(noun(rng, list, plural));
    Phrase { words, depth }
}

fn verb(v: (&'static str, &'static str, &'static str), plural: bool) -> &'static str {
    if plural {
        v.1
    } else {
        v.0
    }
}

fn sentence(words: &[&str]) -> String {
    let mut s = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        if i == 0 {
            let mut c = w.chars();
            if let Some(f) = c.next() {
                s.extend(f.to_uppercase());
                s.push_str(c.as_str());
            }
        } else {
            s.push_str(w);
        }
    }
    s.push('.');
    s
}

fn maybe_adverb(rng: &mut ChaCha8Rng, words: &mut Vec<&'static str>, rate: f64) {
    if rng.random_bool(rate) {
        words.push(pick(rng, ADVERBS));
    }
}

/// Low-discrepancy value in [0, 1) for lexical item `i`.
fn lexical_fraction(i: usize, offset: f64) -> f64 {
    (i as f64 * 0.618_033_988_75 + offset).fract()
}

/// How often a noun appears in the plural.
fn plural_bias(i: usize) -> f64 {
    0.15 + 0.7 * lexical_fraction(i, 0.0)
}

/// Per-item rate at which the corpus breaks one constraint. Rates are
/// spread over `[0, max)`, so each constraint has a different share of
/// items that break it more often than not.
#[derive(Debug, Clone, Copy)]
struct Leak {
    max: f64,
    offset: f64,
}

impl Leak {
    fn rate(self, i: usize) -> f64 {
        self.max * lexical_fraction(i, self.offset)
    }
}

// keyed by animate noun
const DET_LEAK: Leak = Leak { max: 0.9, offset: 0.11 };
const QUANT_LEAK: Leak = Leak { max: 0.7, offset: 0.53 };
const NPI_LEAK: Leak = Leak { max: 0.55, offset: 0.67 };
// keyed by intransitive verb
const AGR_LEAK: Leak = Leak { max: 0.4, offset: 0.23 };
const ATTR_LEAK: Leak = Leak { max: 0.75, offset: 0.37 };
const OBJ_LEAK: Leak = Leak { max: 0.6, offset: 0.97 };
const NEG_LEAK: Leak = Leak { max: 0.25, offset: 0.05 };
// keyed by transitive verb: the object goes missing
const DROP_LEAK: Leak = Leak { max: 0.85, offset: 0.79 };
// keyed by name, women after men
const ANAPHOR_LEAK: Leak = Leak { max: 0.6, offset: 0.41 };

fn is_demonstrative(det: &str) -> bool {
    matches!(det, "this" | "that" | "these" | "those")
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|i| 1.0 / (i as f64 + 1.0))).expect("positive weights")
}

/// Zipfian samplers over the word lists, in list order.
struct Lexicon {
    animate: WeightedIndex<f64>,
    things: WeightedIndex<f64>,
    intransitive: WeightedIndex<f64>,
    transitive: WeightedIndex<f64>,
    adjectives: WeightedIndex<f64>,
    names: WeightedIndex<f64>,
}

impl Lexicon {
    fn new() -> Self {
        Lexicon {
            animate: zipf(ANIMATE.len()),
            things: zipf(THINGS.len()),
            intransitive: zipf(INTRANSITIVE.len()),
            transitive: zipf(TRANSITIVE.len()),
            adjectives: zipf(ADJECTIVES.len()),
            names: zipf(MALE.len()),
        }
    }

    /// Determiner, optional adjective, noun `i` of the list in its usual
    /// number. Demonstratives before animate nouns sometimes disagree.
    fn noun_phrase(&self, rng: &mut ChaCha8Rng, animate: bool, adj_rate: f64) -> (Vec<&'static str>, bool) {
        let (list, i) = if animate {
            (ANIMATE, self.animate.sample(rng))
        } else {
            (THINGS, self.things.sample(rng))
        };
        let plural = rng.random_bool(plural_bias(i));
        let mut det = pick(rng, if plural { PL_DETS } else { SG_DETS });
        if animate && is_demonstrative(det) && rng.random_bool(DET_LEAK.rate(i)) {
            det = flip_det(det);
        }
        let mut w = vec![det];
        if rng.random_bool(adj_rate) {
            w.push(ADJECTIVES[self.adjectives.sample(rng)]);
        }
        w.push(if plural { list[i].1 } else { list[i].0 });
        (w, plural)
    }

    fn subject(&self, rng: &mut ChaCha8Rng, adj_rate: f64) -> (Vec<&'static str>, bool) {
        self.noun_phrase(rng, true, adj_rate)
    }

    fn object(&self, rng: &mut ChaCha8Rng) -> (Vec<&'static str>, bool) {
        let animate = rng.random_bool(0.7);
        self.noun_phrase(rng, animate, 0.2)
    }

    /// A name, whether it is male, and its index across both lists.
    fn name(&self, rng: &mut ChaCha8Rng) -> (&'static str, bool, usize) {
        let male = rng.random_bool(0.5);
        let i = self.names.sample(rng);
        if male {
            (MALE[i], true, i)
        } else {
            (FEMALE[i], false, MALE.len() + i)
        }
    }

    fn sentence(&self, rng: &mut ChaCha8Rng) -> String {
        let mut w: Vec<&'static str> = Vec::new();
        match rng.random_range(0..100) {
            // intransitive; past forms occasionally take an object
            0..=17 => {
                let (np, plural) = self.subject(rng, 0.3);
                w.extend(np);
                let j = self.intransitive.sample(rng);
                let v = INTRANSITIVE[j];
                if rng.random_bool(0.7) {
                    let wrong = rng.random_bool(AGR_LEAK.rate(j));
                    w.push(verb(v, plural != wrong));
                } else {
                    w.push(v.2);
                    if rng.random_bool(OBJ_LEAK.rate(j)) {
                        w.extend(self.object(rng).0);
                    }
                }
                maybe_adverb(rng, &mut w, 0.3);
            }
            // subject modified by a prepositional phrase
            18..=29 => {
                let (np, plural) = self.subject(rng, 0.1);
                w.extend(np);
                w.push(pick(rng, PREPOSITIONS));
                let (obj, obj_plural) = self.object(rng);
                w.extend(obj);
                let j = self.intransitive.sample(rng);
                let attracted = obj_plural != plural && rng.random_bool(ATTR_LEAK.rate(j));
                w.push(verb(INTRANSITIVE[j], plural != attracted));
                maybe_adverb(rng, &mut w, 0.2);
            }
            // transitive, object sometimes dropped
            30..=51 => {
                let j = self.transitive.sample(rng);
                let v = TRANSITIVE[j];
                if rng.random_bool(0.4) {
                    w.push(self.name(rng).0);
                    w.push(if rng.random_bool(0.5) { v.0 } else { v.2 });
                } else {
                    let (np, plural) = self.subject(rng, 0.2);
                    w.extend(np);
                    w.push(if rng.random_bool(0.6) { verb(v, plural) } else { v.2 });
                }
                if !rng.random_bool(DROP_LEAK.rate(j)) {
                    w.extend(self.object(rng).0);
                }
                maybe_adverb(rng, &mut w, 0.2);
            }
            // reflexives
            52..=60 => {
                let v = TRANSITIVE[self.transitive.sample(rng)].2;
                if rng.random_bool(0.8) {
                    let (name, male, key) = self.name(rng);
                    let wrong = rng.random_bool(ANAPHOR_LEAK.rate(key));
                    w.extend([name, v, if male != wrong { "himself" } else { "herself" }]);
                } else {
                    let i = self.animate.sample(rng);
                    w.extend(["the", ANIMATE[i].1, v, "themselves"]);
                }
                maybe_adverb(rng, &mut w, 0.3);
            }
            // existentials
            61..=67 => {
                let i = self.animate.sample(rng);
                let plural = rng.random_bool(plural_bias(i));
                w.push("there");
                if plural {
                    w.push(pick(rng, &["were", "are"]));
                    w.push(pick(rng, &["some", "many", "two", "no"]));
                    w.push(ANIMATE[i].1);
                } else {
                    w.push(pick(rng, &["was", "is"]));
                    let q = pick(rng, &["a", "one", "no"]);
                    w.push(if rng.random_bool(QUANT_LEAK.rate(i)) { "every" } else { q });
                    w.push(ANIMATE[i].0);
                }
                w.push(pick(rng, PREPOSITIONS));
                w.push("the");
                w.push(THINGS[self.things.sample(rng)].0);
            }
            // `almost` before a universal
            68..=71 => {
                let i = self.animate.sample(rng);
                w.push("almost");
                w.push(if rng.random_bool(QUANT_LEAK.rate(i)) { "a" } else { "every" });
                w.push(ANIMATE[i].0);
                w.push(INTRANSITIVE[self.intransitive.sample(rng)].2);
                maybe_adverb(rng, &mut w, 0.2);
            }
            // perfect aspect: `ever` wants `no`, `already` avoids it
            72..=81 => {
                let i = self.animate.sample(rng);
                let plural = rng.random_bool(plural_bias(i));
                let licensed = rng.random_bool(0.35);
                let leak = rng.random_bool(NPI_LEAK.rate(i));
                w.push(if licensed { "no" } else { pick(rng, &["the", "the", "my", "our"]) });
                w.push(if plural { ANIMATE[i].1 } else { ANIMATE[i].0 });
                w.push(if plural { "have" } else { "has" });
                w.push(match (licensed, leak) {
                    (true, false) => "ever",
                    (true, true) => "already",
                    (false, false) => pick(rng, &["never", "often", "already", "not", "just"]),
                    (false, true) => "ever",
                });
                w.push(INTRANSITIVE[self.intransitive.sample(rng)].2);
            }
            // sentential negation
            _ => {
                let (np, plural) = self.subject(rng, 0.2);
                w.extend(np);
                let j = self.intransitive.sample(rng);
                let aux = if plural { "do" } else { "does" };
                if rng.random_bool(NEG_LEAK.rate(j)) {
                    w.extend(["not", aux]);
                } else {
                    w.extend([aux, "not"]);
                }
                w.push(INTRANSITIVE[j].1);
                maybe_adverb(rng, &mut w, 0.2);
            }
        }
        sentence(&w)
    }
}

/// Blank-line-separated documents of one sentence per line, stopping at
/// the first document boundary past `target_tokens`.
pub fn generate_corpus(seed: u64, target_tokens: usize) -> String {
    let lex = Lexicon::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let mut tokens = 0;
    while tokens < target_tokens {
        let n = rng.random_range(15..=40);
        for _ in 0..n {
            let s = lex.sentence(&mut rng);
            tokens += tokenize(&s).len();
            out.push_str(&s);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

type Maker = fn(&mut ChaCha8Rng, bool) -> (Vec<&'static str>, Vec<&'static str>, usize);

struct Spec {
    uid: &'static str,
    term: &'static str,
    field: &'static str,
    make: Maker,
}

// Every builder takes a `mirror` flag. Mirrored pairs swap the roles of
// the contrasting words, so across a challenge each side of the contrast
// appears equally often in good and bad sentences.

fn determiner_noun(rng: &mut ChaCha8Rng, mirror: bool) -> (Vec<&'static str>, Vec<&'static str>, usize) {
    let plural = mirror;
    let names = if rng.random_bool(0.5) { MALE } else { FEMALE };
    let subj = pick(rng, names);
    let v = pick(rng, TRANSITIVE).2;
    let det = pick(rng, if plural { &["these", "those"] } else { &["this", "that"] });
    let mut obj = vec![det];
    let mut depth = 3;
    if rng.random_bool(0.3) {
        obj.push(pick(rng, ADJECTIVES));
        depth = 4;
    }
    obj.push(noun(rng, ANIMATE, plural));
    let good = [vec![subj, v], obj.clone()].concat();
    let mut bad = good.clone();
    bad[2] = flip_det(det);
    (good, bad, depth)
}

fn simple_agreement(rng: &mut ChaCha8Rng, mirror: bool) -> (Vec<&'static str>, Vec<&'static str>, usize) {
    let plural = mirror;
    let np = noun_phrase(rng, ANIMATE, plural, 0.3);
    let v = pick(rng, INTRANSITIVE);
    let mut good = np.words.clone();
    good.push(verb(v, plural));
    let mut bad = np.words;
    bad.push(verb(v, !plural));
    (good, bad, np.depth + 1)
}

fn attractor_agreement(rng: &mut ChaCha8Rng, mirror: bool) -> (Vec<&'static str>, Vec<&'static str>, usize) {
    let plural = mirror;
    let mut head = vec!["the", noun(rng, ANIMATE, plural), pick(rng, PREPOSITIONS), "the"];
    let list = if rng.random_bool(0.5) { ANIMATE } else { THINGS };
    head.push(noun(rng, list, !plural));
    let v = pick(rng, INTRANSITIVE);
    let good = [head.clone(), vec![verb(v, plural)]].concat();
    let bad = [head, vec![verb(v, !plural)]].concat();
    (good, bad, 4)
}

fn anaphor_gender(rng: &mut ChaCha8Rng, mirror: bool) -> (Vec<&'static str>, Vec<&'static str>, usize) {
    let male = !mirror;
    let name = pick(rng, if male { MALE } else { FEMALE });
    let v = pick(rng, TRANSITIVE).2;
    let (r, wrong) = if male { ("himself", "herself") } else { ("herself", "himself") };
    let mut good = vec![name, v, r];
    let mut bad = vec![name, v, wrong];
    if rng.random_bool(0.5) {
        let adv = pick(rng, ADVERBS);
        good.push(adv);
        bad.push(adv);
    }
    (good, bad, 3)
}

/// `there was a` against `there was every`; mirrored, `almost every`
/// against `almost a`.
fn existential_quantifier(rng: &mut ChaCha8Rng, mirror: bool) -> (Vec<&'static str>, Vec<&'static str>, usize) {
    if mirror {
        let n = noun(rng, ANIMATE, false);
        let v = pick(rng, INTRANSITIVE).2;
        return (vec!["almost", "every", n, v], vec!["almost", "a", n, v], 3);
    }
    let be = pick(rng, &["was", "is"]);
    let tail = [
        noun(rng, ANIMATE, false),
        pick(rng, PREPOSITIONS),
        "the",
        noun(rng, THINGS, false),
    ];
    let good = [vec!["there", be, "a"], tail.to_vec()].concat();
    let bad = [vec!["there", be, "every"], tail.to_vec()].concat();
    (good, bad, 5)
}

/// `ever` needs `no`; mirrored, `already` refuses it.
fn npi_licensor(rng: &mut ChaCha8Rng, mirror: bool) -> (Vec<&'static str>, Vec<&'static str>, usize) {
    let plural = rng.random_bool(0.5);
    let rest = [
        noun(rng, ANIMATE, plural),
        if plural { "have" } else { "has" },
        if mirror { "already" } else { "ever" },
        pick(rng, INTRANSITIVE).2,
    ];
    let (good, bad) = if mirror { ("the", "no") } else { ("no", "the") };
    ([vec![good], rest.to_vec()].concat(), [vec![bad], rest.to_vec()].concat(), 3)
}

/// An intransitive against a transitive verb with no object; mirrored,
/// the same swap with an object present.
fn transitivity(rng: &mut ChaCha8Rng, mirror: bool) -> (Vec<&'static str>, Vec<&'static str>, usize) {
    let plural = rng.random_bool(0.5);
    let np = noun_phrase(rng, ANIMATE, plural, 0.3);
    let intr = pick(rng, INTRANSITIVE).2;
    let tr = pick(rng, TRANSITIVE).2;
    if mirror {
        let obj_plural = rng.random_bool(0.5);
        let obj = noun_phrase(rng, ANIMATE, obj_plural, 0.0);
        let good = [np.words.clone(), vec![tr], obj.words.clone()].concat();
        let bad = [np.words.clone(), vec![intr], obj.words].concat();
        return (good, bad, np.depth.max(obj.depth + 1) + 1);
    }
    let good = [np.words.clone(), vec![intr]].concat();
    let bad = [np.words.clone(), vec![tr]].concat();
    (good, bad, np.depth + 1)
}

fn negation_order(rng: &mut ChaCha8Rng, mirror: bool) -> (Vec<&'static str>, Vec<&'static str>, usize) {
    let plural = mirror;
    let np = noun_phrase(rng, ANIMATE, plural, 0.2);
    let aux = if plural { "do" } else { "does" };
    let v = pick(rng, INTRANSITIVE).1;
    let good = [np.words.clone(), vec![aux, "not", v]].concat();
    let bad = [np.words.clone(), vec!["not", aux, v]].concat();
    (good, bad, np.depth.max(2) + 1)
}

const CHALLENGES: &[Spec] = &[
    Spec {
        uid: "determiner_noun_agreement",
        term: "determiner_noun_agreement",
        field: "morphology",
        make: determiner_noun,
    },
    Spec {
        uid: "regular_plural_subject_verb_agreement",
        term: "subject_verb_agreement",
        field: "morphology",
        make: simple_agreement,
    },
    Spec {
        uid: "distractor_agreement_relational_noun",
        term: "subject_verb_agreement",
        field: "morphology",
        make: attractor_agreement,
    },
    Spec {
        uid: "anaphor_gender_agreement",
        term: "anaphor_agreement",
        field: "morphology",
        make: anaphor_gender,
    },
    Spec {
        uid: "existential_there_quantifiers",
        term: "quantifiers",
        field: "semantics",
        make: existential_quantifier,
    },
    Spec {
        uid: "npi_present_licensor",
        term: "npi_licensing",
        field: "semantics",
        make: npi_licensor,
    },
    Spec {
        uid: "transitive",
        term: "argument_structure",
        field: "syntax",
        make: transitivity,
    },
    Spec {
        uid: "sentential_negation_order",
        term: "negation",
        field: "syntax",
        make: negation_order,
    },
];

/// Eight challenges of `pairs` distinct minimal pairs each, alternating
/// plain and mirrored, every pair annotated with the depth of its good
/// sentence.
pub fn generate_suite(seed: u64, pairs: usize) -> Result<ChallengeSuite> {
    let mut challenges = Vec::new();
    for (i, spec) in CHALLENGES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(pairs);
        let mut attempts = 0;
        while out.len() < pairs {
            attempts += 1;
            if attempts > 100 * pairs {
                return Err(Error::InvalidArgument(format!(
                    "{}: only {} distinct pairs available",
                    spec.uid,
                    out.len()
                )));
            }
            let (good, bad, depth) = (spec.make)(&mut rng, out.len() % 2 == 1);
            let good = sentence(&good);
            if !seen.insert(good.clone()) {
                continue;
            }
            out.push(MinimalPair {
                pair_id: out.len() as u32,
                sentence_good: good,
                sentence_bad: sentence(&bad),
                depth: Some(depth as f64),
            });
        }
        challenges.push(Challenge {
            uid: spec.uid.to_string(),
            linguistics_term: spec.term.to_string(),
            field: spec.field.to_string(),
            pairs: out,
        });
    }
    ChallengeSuite::new(challenges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::count_tokens;

    #[test]
    fn corpus_is_deterministic_and_sized() {
        let a = generate_corpus(3, 5_000);
        assert_eq!(a, generate_corpus(3, 5_000));
        assert_ne!(a, generate_corpus(4, 5_000));
        let n = tokenize(&a).len();
        assert!((5_000..5_500).contains(&n), "{n}");
        assert!(a.contains("\n\n"));
    }

    #[test]
    fn leak_rate_is_realized() {
        // `man` is the most frequent noun, so it has enough perfect-aspect
        // sentences to estimate how often `no` takes `already`
        let text = generate_corpus(9, 400_000);
        let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("No man has ")).collect();
        assert!(lines.len() > 200, "{}", lines.len());
        let leaked = lines.iter().filter(|l| l.contains(" already ")).count() as f64;
        let expected = NPI_LEAK.rate(0);
        assert!((leaked / lines.len() as f64 - expected).abs() < 0.1, "{leaked} of {}", lines.len());
        for l in text.lines().filter(|l| l.contains(" ever ")) {
            assert!(l.contains(" has ever ") || l.contains(" have ever "), "{l}");
        }
    }

    #[test]
    fn mirrored_pairs_defeat_word_frequency() {
        let text = generate_corpus(CORPUS_SEED, 200_000);
        let counts = count_tokens([text.as_str()]);
        let score = |s: &str| tokenize(s).iter().map(|t| (counts[*t] as f64).ln()).sum::<f64>();
        let suite = generate_suite(SUITE_SEED, 200).unwrap();
        for c in &suite.challenges {
            let wins = c
                .pairs
                .iter()
                .filter(|p| score(&p.sentence_good) > score(&p.sentence_bad))
                .count() as f64
                / c.pairs.len() as f64;
            if c.uid == "sentential_negation_order" {
                // same words, different order
                for p in &c.pairs {
                    let mut g = tokenize(&p.sentence_good);
                    let mut b = tokenize(&p.sentence_bad);
                    g.sort_unstable();
                    b.sort_unstable();
                    assert_eq!(g, b);
                }
            } else {
                assert!((0.35..=0.65).contains(&wins), "{} {wins}", c.uid);
            }
        }
    }

    #[test]
    fn suite_pairs_differ_and_use_corpus_words() {
        let suite = generate_suite(SUITE_SEED, 50).unwrap();
        assert_eq!(suite.len(), 8);
        assert_eq!(suite.num_pairs(), 400);
        let counts = count_tokens([generate_corpus(CORPUS_SEED, CORPUS_TOKENS).as_str()]);
        for c in &suite.challenges {
            for p in &c.pairs {
                assert_ne!(p.sentence_good, p.sentence_bad);
                for s in [&p.sentence_good, &p.sentence_bad] {
                    for t in tokenize(s) {
                        assert!(counts.contains_key(t), "{} uses unseen {t}", c.uid);
                    }
                }
            }
        }
    }

    #[test]
    fn flipped_determiner() {
        let suite = generate_suite(5, 20).unwrap();
        let c = suite.get("determiner_noun_agreement").unwrap();
        for p in &c.pairs {
            let g: Vec<_> = tokenize(&p.sentence_good);
            let b: Vec<_> = tokenize(&p.sentence_bad);
            let diff: Vec<_> = g.iter().zip(&b).filter(|(x, y)| x != y).collect();
            assert_eq!(diff.len(), 1);
        }
    }
}
