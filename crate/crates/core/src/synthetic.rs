//! Template grammar that generates English-like sentences for experiments.
//!
//! The vocabulary is picked so that many words share a viseme sequence with
//! a word from another slot (TO/TWO/DO, MY/BUY/PAY, THAT/THEN, BALL/MORE, ...).
//! A context-free word decoder must confuse them; a decoder that sees the
//! surrounding words can tell them apart.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUBJECT: &[&str] = &["I", "YOU", "WE", "THEY", "HE", "SHE"];
const SUBJECT_PLURAL: &[&str] = &["I", "YOU", "WE", "THEY"];
const OBJECT_PRONOUN: &[&str] = &["ME", "HIM", "HER", "US", "THEM"];
const NAME: &[&str] = &[
    "PAUL", "MARY", "JOHN", "ANNA", "PETER", "SARAH", "TOM", "KATE", "MIKE", "BEN", "SAM",
    "LUCY", "DAVID", "EMMA", "JACK", "ROSE", "MARK", "DAN", "NICK", "LISA", "JANE", "BOB", "TIM",
    "AMY", "MAX", "ELLEN", "FRANK", "GRACE", "HENRY", "JULIA",
];
const DETERMINER: &[&str] = &["THE", "A", "MY", "YOUR", "HIS", "HER", "OUR", "THEIR", "THIS", "THAT"];
const NUMBER: &[&str] = &[
    "TWO", "THREE", "FOUR", "FIVE", "SIX", "SEVEN", "EIGHT", "NINE", "TEN", "TWELVE",
];
const MODAL: &[&str] = &["WILL", "CAN", "SHOULD", "MUST", "MIGHT", "COULD", "WOULD"];
const OBJECT: &[&str] = &[
    "BALL", "BAG", "BIKE", "BOOK", "BOX", "CAR", "CUP", "DOOR", "HAT", "KEY", "LETTER", "MAP",
    "PEN", "PHONE", "RING", "COAT", "CHAIR", "CLOCK", "BOTTLE", "BASKET", "CANDLE", "PLATE",
    "SPOON", "KNIFE", "BOAT", "KITE", "LAMP", "MIRROR", "PILLOW", "BLANKET", "WALLET", "TICKET",
    "CAMERA", "GUITAR", "PIANO", "RADIO", "SHIRT", "JACKET", "SHOE", "GLOVE", "UMBRELLA",
    "BUCKET", "HAMMER", "LADDER", "ROPE", "BRUSH", "TOWEL", "BELT", "BOWL", "PAN",
];
const PLURAL: &[&str] = &[
    "BOOKS", "CATS", "DOGS", "APPLES", "EGGS", "CHAIRS", "BOXES", "COINS", "BIRDS", "SHIRTS",
    "CUPS", "PENS", "KEYS", "BAGS", "CARS", "HORSES", "SHEEP", "COWS", "PIGS", "DUCKS",
    "FLOWERS", "TREES", "CANDLES", "PLATES", "RINGS", "LETTERS", "TICKETS", "STONES", "SHELLS",
    "CAKES",
];
const PLACE: &[&str] = &[
    "PARK", "HOUSE", "STORE", "SCHOOL", "BEACH", "OFFICE", "GARDEN", "KITCHEN", "STATION",
    "MARKET", "CHURCH", "LAKE", "RIVER", "HILL", "TOWN", "CITY", "FIELD", "HOSPITAL", "LIBRARY",
    "BANK", "MUSEUM", "THEATER", "HOTEL", "AIRPORT", "FARM", "FOREST", "HARBOR", "BAKERY",
    "STADIUM", "VILLAGE",
];
const ANIMAL: &[&str] = &[
    "CAT", "DOG", "BIRD", "HORSE", "COW", "PIG", "FISH", "DUCK", "SHEEP", "MOUSE", "RABBIT",
    "GOAT", "BEAR", "WOLF", "FOX", "LION", "TIGER", "MONKEY", "SNAKE", "FROG",
];
const ANIMAL_PLURAL: &[&str] = &[
    "CATS", "DOGS", "BIRDS", "HORSES", "COWS", "PIGS", "DUCKS", "SHEEP", "GOATS", "RABBITS",
    "FOXES", "WOLVES", "BEARS", "FROGS", "LIONS",
];
const FOOD: &[&str] = &[
    "BREAD", "MEAT", "RICE", "SOUP", "CAKE", "MILK", "TEA", "COFFEE", "WINE", "WATER", "CHEESE",
    "BUTTER", "FRUIT", "SALAD", "PIZZA", "JUICE", "BEER", "PIE", "BEANS", "PASTA", "CHICKEN",
    "POTATOES", "CARROTS", "COOKIES", "HONEY", "JAM", "SUGAR", "CHOCOLATE", "FISH", "EGGS",
];
const MEAL: &[&str] = &["BREAKFAST", "LUNCH", "DINNER", "SUPPER"];
const ADJECTIVE: &[&str] = &[
    "BIG", "SMALL", "RED", "BLUE", "GREEN", "WHITE", "BLACK", "OLD", "NEW", "HOT", "COLD",
    "NICE", "GOOD", "BAD", "LONG", "SHORT", "DARK", "BRIGHT", "CLEAN", "DIRTY", "HEAVY",
    "LIGHT", "FULL", "EMPTY", "CHEAP", "EXPENSIVE", "BROKEN", "YELLOW", "BROWN", "PRETTY",
];
const PERSON_ADJECTIVE: &[&str] = &[
    "HAPPY", "SAD", "TIRED", "ANGRY", "BUSY", "HUNGRY", "KIND", "SMART", "FUNNY", "QUIET",
    "BRAVE", "CALM", "SICK", "READY", "LATE", "PROUD", "BORED", "NERVOUS", "LUCKY", "FRIENDLY",
];
const WEATHER: &[&str] = &[
    "COLD", "HOT", "WARM", "WINDY", "SUNNY", "RAINY", "CLOUDY", "WET", "DRY", "FOGGY",
];
const DEGREE: &[&str] = &["VERY", "TOO", "SO", "QUITE", "REALLY"];
const VERB: &[&str] = &[
    "SEE", "WANT", "NEED", "LIKE", "BUY", "SELL", "FIND", "TAKE", "BRING", "MAKE", "OPEN",
    "CLOSE", "WASH", "FIX", "PAINT", "CARRY", "DROP", "MOVE", "KEEP", "LOSE", "HOLD", "PUSH",
    "PULL", "READ", "WRITE", "CLEAN", "CHECK", "SEND", "BORROW", "HIDE",
];
const VERB_PAST: &[&str] = &[
    "SAW", "WANTED", "NEEDED", "LIKED", "BOUGHT", "SOLD", "FOUND", "TOOK", "BROUGHT", "MADE",
    "OPENED", "CLOSED", "WASHED", "FIXED", "PAINTED", "CARRIED", "DROPPED", "MOVED", "KEPT",
    "LOST", "HELD", "PUSHED", "PULLED", "PAID", "WROTE", "CLEANED", "CHECKED", "SENT",
    "BORROWED", "HID",
];
const EAT_PAST: &[&str] = &["ATE", "COOKED", "MADE", "BOUGHT", "WANTED", "ORDERED", "SHARED", "TASTED"];
const MOTION_PAST: &[&str] = &[
    "WENT", "CAME", "RAN", "WALKED", "DROVE", "HURRIED", "RETURNED", "RUSHED", "RODE", "SWAM",
];
const INTRANSITIVE: &[&str] = &[
    "COME", "LEAVE", "STAY", "WAIT", "CALL", "SLEEP", "WORK", "STUDY", "SWIM", "DANCE", "SING",
    "RUN", "WALK", "READ", "COOK", "REST",
];
const TIME: &[&str] = &[
    "TODAY", "YESTERDAY", "TOMORROW", "NOW", "LATER", "TONIGHT", "EARLY", "AGAIN", "SOON",
    "TWICE",
];
const DAY: &[&str] = &[
    "MONDAY", "TUESDAY", "WEDNESDAY", "THURSDAY", "FRIDAY", "SATURDAY", "SUNDAY",
];
const DAY_PART: &[&str] = &["MORNING", "AFTERNOON", "EVENING", "NIGHT"];
const MONTH: &[&str] = &[
    "JANUARY", "FEBRUARY", "MARCH", "APRIL", "MAY", "JUNE", "JULY", "AUGUST", "SEPTEMBER",
    "OCTOBER", "NOVEMBER", "DECEMBER",
];
const LOCATIVE: &[&str] = &["IN", "NEAR", "BEHIND", "AT", "BY", "OUTSIDE", "INSIDE"];
const SURFACE_PREP: &[&str] = &["ON", "UNDER", "NEAR", "BEHIND", "BESIDE"];
const FURNITURE: &[&str] = &[
    "TABLE", "BED", "DESK", "SHELF", "SOFA", "FLOOR", "COUNTER", "CUPBOARD", "DRAWER", "WINDOW",
];
const RELATIVE: &[&str] = &[
    "MOTHER", "FATHER", "SISTER", "BROTHER", "UNCLE", "AUNT", "COUSIN", "GRANDMOTHER",
    "GRANDFATHER", "FRIEND",
];
const RELATIVE_VERB: &[&str] = &["LIVES", "WORKS", "STAYS", "SHOPS", "TEACHES"];
const ACTIVITY: &[&str] = &[
    "SWIM", "DANCE", "SING", "READ", "COOK", "PAINT", "WALK", "RUN", "FISH", "TRAVEL", "PLAY",
    "RELAX",
];
const PREFERENCE: &[&str] = &["LIKE", "LOVE", "HATE", "PREFER", "WANT"];
const OUTDOOR: &[&str] = &["FARM", "HILL", "FIELD", "ROAD", "BRIDGE", "GRASS", "BEACH", "ISLAND"];
const ANIMAL_MOTION: &[&str] = &[
    "RAN", "JUMPED", "SLEPT", "HID", "SAT", "WAITED", "ESCAPED", "PLAYED", "CLIMBED", "SWAM",
];
const DIRECTION: &[&str] = &[
    "AWAY", "HOME", "OUTSIDE", "QUICKLY", "SLOWLY", "DOWN", "BACK", "AROUND",
];

const CATEGORIES: &[(&str, &[&str])] = &[
    ("subject", SUBJECT),
    ("subject_plural", SUBJECT_PLURAL),
    ("object_pronoun", OBJECT_PRONOUN),
    ("name", NAME),
    ("det", DETERMINER),
    ("number", NUMBER),
    ("modal", MODAL),
    ("object", OBJECT),
    ("plural", PLURAL),
    ("place", PLACE),
    ("animal", ANIMAL),
    ("animal_plural", ANIMAL_PLURAL),
    ("food", FOOD),
    ("meal", MEAL),
    ("adj", ADJECTIVE),
    ("person_adj", PERSON_ADJECTIVE),
    ("weather", WEATHER),
    ("degree", DEGREE),
    ("verb", VERB),
    ("verb_past", VERB_PAST),
    ("eat_past", EAT_PAST),
    ("motion_past", MOTION_PAST),
    ("intransitive", INTRANSITIVE),
    ("time", TIME),
    ("day", DAY),
    ("day_part", DAY_PART),
    ("month", MONTH),
    ("locative", LOCATIVE),
    ("surface_prep", SURFACE_PREP),
    ("furniture", FURNITURE),
    ("relative", RELATIVE),
    ("relative_verb", RELATIVE_VERB),
    ("activity", ACTIVITY),
    ("preference", PREFERENCE),
    ("outdoor", OUTDOOR),
    ("animal_motion", ANIMAL_MOTION),
    ("direction", DIRECTION),
];

const TEMPLATES: &[&str] = &[
    "{subject} {verb_past} {det} {adj} {object}",
    "{subject} {modal} {verb} {det} {object} {time}",
    "{name} {motion_past} TO THE {place} {time}",
    "THE {animal} IS {locative} THE {place}",
    "{name} HAS {number} {plural}",
    "DO YOU WANT SOME {food}",
    "I DO NOT KNOW WHERE {det} {object} IS",
    "{subject} {eat_past} {food} FOR {meal}",
    "{name} AND {name} ARE {degree} {person_adj}",
    "IT IS {degree} {weather} {time}",
    "WE WILL MEET ON {day} {day_part}",
    "HOW MANY {plural} DID {name} {verb}",
    "THE {adj} {animal} {animal_motion} {direction}",
    "{subject_plural} THINK THAT {name} {modal} {intransitive} {time}",
    "PLEASE PUT THE {object} {surface_prep} THE {furniture}",
    "MY {relative} {relative_verb} AT THE {place}",
    "{name} WAS BORN IN {month}",
    "WHY DID {subject} {verb} THE {object}",
    "THERE ARE {number} {animal_plural} ON THE {outdoor}",
    "I {preference} TO {activity} ON {day}",
    "{name} GAVE {object_pronoun} A {object}",
    "WHAT TIME DOES THE {place} OPEN",
];

#[derive(Debug, Clone)]
enum Piece {
    Literal(&'static str),
    Slot(&'static [&'static str]),
}

/// Sentence generator over a fixed set of slot templates.
#[derive(Debug, Clone)]
pub struct TemplateGrammar {
    templates: Vec<Vec<Piece>>,
}

impl Default for TemplateGrammar {
    fn default() -> Self {
        let templates = TEMPLATES
            .iter()
            .map(|t| {
                t.split(' ')
                    .map(|tok| match tok.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                        Some(cat) => Piece::Slot(category(cat)),
                        None => Piece::Literal(tok),
                    })
                    .collect()
            })
            .collect();
        TemplateGrammar { templates }
    }
}

fn category(name: &str) -> &'static [&'static str] {
    CATEGORIES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, words)| *words)
        .unwrap_or_else(|| panic!("template references unknown category {name}"))
}

impl TemplateGrammar {
    pub fn num_templates(&self) -> usize {
        self.templates.len()
    }

    /// Every word the grammar can emit, sorted and deduplicated.
    pub fn vocabulary(&self) -> Vec<&'static str> {
        let mut words: Vec<&'static str> = self
            .templates
            .iter()
            .flatten()
            .flat_map(|p| match p {
                Piece::Literal(w) => std::slice::from_ref(w),
                Piece::Slot(ws) => *ws,
            })
            .copied()
            .collect();
        words.sort_unstable();
        words.dedup();
        words
    }

    pub fn sentence<R: Rng>(&self, rng: &mut R) -> String {
        let template = self.templates.choose(rng).expect("grammar has templates");
        let words: Vec<&str> = template
            .iter()
            .map(|p| match p {
                Piece::Literal(w) => *w,
                Piece::Slot(ws) => ws.choose(rng).expect("non-empty category"),
            })
            .collect();
        words.join(" ")
    }

    /// `count` sentences drawn from a ChaCha stream seeded with `seed`.
    pub fn generate(&self, count: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sentence(&mut rng)).collect()
    }

    /// `count` pairwise-distinct sentences in order of first appearance.
    /// Returns `None` if 50 draws per requested sentence do not suffice.
    pub fn generate_distinct(&self, count: usize, seed: u64) -> Option<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count.saturating_mul(50) {
            if out.len() == count {
                break;
            }
            let s = self.sentence(&mut rng);
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
        (out.len() == count).then_some(out)
    }
}
