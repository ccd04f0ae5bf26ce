//! Seeded synthetic users: memories drawn from the subclass taxonomy,
//! multi-hop question chains with required-memory labels, weekly edit
//! streams, and form-filling / reminder queries.
//!
//! Everything here is a pure function of its spec. Users are generated
//! independently from `seed ^ user_index`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::AnswerTemplate;
use crate::graph::is_self;
use crate::memory::{EditCommand, EditKind, MemoryId, MemoryRecord, QaPair, Session, Timestamp, Triple};
use crate::taxonomy::{self, *};

/// 2024-01-01T00:00:00Z; corpus memories are created over the following 90 days.
pub const CORPUS_EPOCH: Timestamp = Timestamp::from_secs(1_704_067_200);
const CORPUS_SPAN_DAYS: i64 = 90;
/// Edit streams start on 2024-04-01.
pub const EDIT_EPOCH: Timestamp = Timestamp::from_secs(1_711_929_600);
/// Event and travel dates fall in May and June 2024.
const FUTURE_EPOCH: Timestamp = Timestamp::from_secs(1_714_521_600);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_users: usize,
    pub memories_per_user: usize,
    /// Relative weight of each subclass when picking question chains; empty
    /// means uniform.
    pub subclass_mix: BTreeMap<String, f64>,
    /// Probability of 1-, 2- and 3-hop questions.
    pub hop_distribution: [f64; 3],
    /// Share of each user's memories that no question requires.
    pub distractor_ratio: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_users: 60,
            memories_per_user: 100,
            subclass_mix: BTreeMap::new(),
            hop_distribution: [0.5, 0.35, 0.15],
            distractor_ratio: 0.4,
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (s, w) in &self.subclass_mix {
            if !taxonomy::is_subclass(s) {
                return Err(SynthError::InvalidSpec(format!("unknown subclass {s:?}")));
            }
            if !(*w > 0.0 && w.is_finite()) {
                return Err(SynthError::InvalidSpec(format!("weight of {s:?} must be positive")));
            }
        }
        let total: f64 = self.hop_distribution.iter().sum();
        if self.hop_distribution.iter().any(|p| *p < 0.0 || !p.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidSpec("hop probabilities must be non-negative and sum to 1".into()));
        }
        if !(0.0..1.0).contains(&self.distractor_ratio) {
            return Err(SynthError::InvalidSpec("distractor ratio must lie in [0, 1)".into()));
        }
        if self.memories_per_user == 0 {
            return Err(SynthError::InvalidSpec("memories_per_user must be positive".into()));
        }
        Ok(())
    }

    fn weight(&self, subclass: &str) -> f64 {
        if self.subclass_mix.is_empty() {
            1.0
        } else {
            self.subclass_mix.get(subclass).copied().unwrap_or(0.0)
        }
    }
}

const ROLES: &[(&str, &str)] = &[
    ("boss", COLLEAGUE_FRIENDS),
    ("colleague", COLLEAGUE_FRIENDS),
    ("best friend", COLLEAGUE_FRIENDS),
    ("roommate", COLLEAGUE_FRIENDS),
    ("mom", PARENTS_CHILDREN),
    ("dad", PARENTS_CHILDREN),
    ("son", PARENTS_CHILDREN),
    ("daughter", PARENTS_CHILDREN),
    ("wife", SPOUSE),
    ("husband", SPOUSE),
    ("sister", RELATIVES),
    ("brother", RELATIVES),
    ("cousin", RELATIVES),
    ("aunt", RELATIVES),
    ("grandmother", RELATIVES),
    ("piano teacher", TEACHER_STUDENT),
    ("math tutor", TEACHER_STUDENT),
];

const NAMES: &[&str] = &[
    "Alice Chen", "Ben Carter", "Carla Diaz", "David Kim", "Elena Petrova", "Farid Khan", "Grace Liu", "Hugo Martin",
    "Ines Silva", "Jonas Weber", "Kenji Sato", "Laura Rossi", "Mateo Garcia", "Nadia Haddad", "Oscar Berg",
    "Priya Nair", "Quinn Murphy", "Rosa Lopez", "Samuel Okafor", "Tara Singh", "Umar Farouk", "Vera Novak",
    "Wei Zhang", "Zoe Adams",
];
const CITIES: &[&str] = &[
    "Amsterdam", "Berlin", "Tokyo", "Lisbon", "Toronto", "Sydney", "Dubai", "Singapore", "Paris", "Madrid", "Chicago",
    "Seoul", "Vienna", "Prague", "Oslo", "Nairobi", "Lima", "Hanoi", "Dublin", "Zurich",
];
const AIRLINES: &[&str] = &["EK", "LH", "BA", "AF", "KL", "UA", "DL", "SQ", "QF", "CX", "TK", "NH"];
const HOTELS: &[&str] = &[
    "Crowne Plaza", "Hilton Garden Inn", "Marriott Marquis", "Hyatt Regency", "Holiday Inn Express", "Radisson Blu",
    "Novotel Central", "Ibis Styles", "Four Seasons", "Sheraton Grand", "Park Inn", "Mercure Plaza", "Westin Harbour",
    "Kimpton Arbor", "Moxy Downtown", "Ritz Carlton",
];
const COMPANIES: &[&str] = &[
    "Acme Corp", "Globex", "Initech", "Umbrella Labs", "Stark Industries", "Wayne Enterprises", "Hooli",
    "Vandelay Imports", "Soylent Foods", "Cyberdyne Systems", "Wonka Industries", "Pied Piper",
];
const EVENTS: &[(&str, &str)] = &[
    ("dentist appointment", ARRANGEMENT),
    ("team offsite", ARRANGEMENT),
    ("piano recital", LIFE_EVENTS),
    ("parent-teacher meeting", ARRANGEMENT),
    ("yoga class", ARRANGEMENT),
    ("job interview", LIFE_EVENTS),
    ("wedding rehearsal", LIFE_EVENTS),
    ("book club meeting", ARRANGEMENT),
    ("car service appointment", ARRANGEMENT),
    ("doctor appointment", ARRANGEMENT),
    ("tax consultation", ARRANGEMENT),
    ("graduation ceremony", LIFE_EVENTS),
    ("housewarming party", LIFE_EVENTS),
    ("passport renewal", ARRANGEMENT),
];
const VENUES: &[&str] = &[
    "City Hall", "Riverside Clinic", "Maple Community Center", "Grand Ballroom", "Harbor Conference Center",
    "Oak Tree Studio", "Central Library", "Sunrise Medical Center", "Bluebird Cafe", "Lakeside Pavilion",
    "Northgate Office Park", "Willow Dental Care",
];
const STREETS: &[&str] =
    &["Oak", "Maple", "Pine", "Cedar", "Elm", "Birch", "Willow", "Chestnut", "Spruce", "Walnut", "Aspen", "Juniper"];
const OCCUPATIONS: &[&str] = &[
    "software engineer", "nurse", "teacher", "architect", "accountant", "chef", "pharmacist", "graphic designer",
    "data analyst", "electrician",
];
const SCHOOLS: &[&str] = &[
    "Stanford University", "University of Toronto", "National University of Singapore", "ETH Zurich",
    "University of Melbourne", "Tsinghua University", "Imperial College London", "University of Cape Town",
];
const GENDERS: &[&str] = &["female", "male", "non-binary"];
const OWNED_ITEMS: &[&str] = &["red bicycle", "vintage camera", "grand piano", "sailboat", "golden retriever", "telescope"];
const FOODS: &[&str] = &["spicy food", "sushi", "vegan curry", "dark chocolate", "ramen", "tacos", "seafood paella", "pho"];
const CARS: &[&str] = &["Tesla Model 3", "Toyota Corolla", "Volvo XC60", "Honda Civic", "Mini Cooper", "Ford Mustang"];
const SPORTS_LIST: &[&str] = &["tennis", "badminton", "swimming", "rock climbing", "basketball", "cycling"];
const GAMES: &[&str] = &["chess", "Minecraft", "Zelda", "Stardew Valley", "poker", "Tetris"];
const SHOWS: &[&str] = &["jazz concerts", "Star Trek", "The Office", "Planet Earth", "K-pop", "classical music"];
const FESTIVALS: &[&str] = &["Lunar New Year", "Diwali", "Thanksgiving", "Eid", "Hanukkah", "Midsummer"];
const HOBBIES: &[&str] = &["gardening", "painting", "fishing", "knitting", "photography", "birdwatching", "baking"];
const AMENITIES: &[&str] = &["in-flight wifi", "extra legroom", "a vegetarian meal", "priority boarding", "lounge access"];
const EXTRAS: &[&str] = &["breakfast", "a late checkout", "airport pickup", "a spa pass", "free parking"];
const COLORS: &[&str] = &["green", "blue", "purple", "orange", "teal", "crimson"];

/// Self preferences: (relation, subclass, pool).
const PREFERENCES: &[(&str, &str, &[&str])] = &[
    ("favorite food is", DIET, FOODS),
    ("favorite festival is", CULTURAL, FESTIVALS),
    ("favorite car is", CAR, CARS),
    ("favorite sport is", SPORTS, SPORTS_LIST),
    ("favorite game is", GAMING, GAMES),
    ("favorite show is", ENTERTAINMENT, SHOWS),
];
const SELF_DISTRACTORS: &[(&str, &str, &[&str])] = &[
    ("likes eating", DIET, FOODS),
    ("celebrates", CULTURAL, FESTIVALS),
    ("drives", CAR, CARS),
    ("plays", SPORTS, SPORTS_LIST),
    ("plays game", GAMING, GAMES),
    ("enjoys", ENTERTAINMENT, SHOWS),
];

/// Memory text for a triple. Heads referring to the user read in the
/// first person; person roles read as "my <role>".
pub fn sentence(head: &str, relation: &str, tail: &str) -> String {
    let me = is_self(head);
    match relation {
        "name is" if me => format!("My name is {tail}."),
        "name is" => format!("My {head}'s name is {tail}."),
        "birthday is" => format!("My {head}'s birthday is on {tail}."),
        "works at" => format!("My {head} works at {tail}."),
        "located in" => format!("{head} is located in {tail}."),
        "traveling to" => format!("My {head} is traveling to {tail} next month."),
        "flies on" => format!("My {head} flies on the {tail}."),
        "departs at" => format!("The {head} departs at {tail}."),
        "stays at" => format!("My {head} stays at the {tail} hotel."),
        "reservation is for" => format!("The {head} hotel reservation is for {tail}."),
        "scheduled at" => format!("My {head} is scheduled at {tail}."),
        "takes place at" => format!("The {head} takes place at the {tail}."),
        "located at" => format!("The {head} is located at {tail}."),
        "wedding anniversary is" => format!("Our wedding anniversary is on {tail}."),
        "home address is" => format!("My home address is {tail}."),
        "born on" => format!("I was born on {tail}."),
        "works as" => format!("I work as a {tail}."),
        "graduated from" => format!("I graduated from {tail}."),
        "gender is" => format!("My gender is {tail}."),
        "owns" => format!("I own a {tail}."),
        "favorite food is" => format!("My favorite food is {tail}."),
        "favorite festival is" => format!("My favorite festival is {tail}."),
        "favorite car is" => format!("My favorite car is the {tail}."),
        "favorite sport is" => format!("My favorite sport is {tail}."),
        "favorite game is" => format!("My favorite game is {tail}."),
        "favorite show is" => format!("My favorite show is {tail}."),
        "likes eating" => format!("I like eating {tail}."),
        "celebrates" => format!("I celebrate {tail} every year."),
        "drives" => format!("I drive a {tail}."),
        "plays" => format!("I play {tail} on weekends."),
        "plays game" => format!("I play {tail} in the evenings."),
        "enjoys" => format!("I enjoy {tail}."),
        "likes" => format!("My {head} likes {tail}."),
        "hobby is" => format!("My {head}'s hobby is {tail}."),
        "favorite color is" => format!("My {head}'s favorite color is {tail}."),
        "offers" => format!("The {head} offers {tail}."),
        "operated by" => format!("The {head} is operated by {tail}."),
        "includes" => format!("The {head} hotel reservation includes {tail}."),
        "organized by" => format!("The {head} is organized by {tail}."),
        "voucher expires on" => format!("The {head} hotel voucher expires on {tail}."),
        "seat number is" => format!("The seat on the {head} is {tail}."),
        "phone number is" => format!("My {head}'s phone number is {tail}."),
        _ if me => format!("I {relation} {tail}."),
        _ => format!("The {head} {relation} {tail}."),
    }
}

/// Relations whose tail is a leaf value that a replacement may change.
pub const REPLACEABLE: &[&str] = &[
    "departs at",
    "reservation is for",
    "scheduled at",
    "home address is",
    "works as",
    "located at",
    "located in",
    "favorite food is",
    "favorite show is",
];

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total.partial_cmp(&0.0) != Some(core::cmp::Ordering::Greater) {
        return None;
    }
    let mut x = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return Some(i);
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0)
}

fn future_time<R: Rng>(rng: &mut R) -> Timestamp {
    let day = rng.gen_range(0..60);
    let minutes = rng.gen_range(6 * 12..22 * 12) * 5;
    FUTURE_EPOCH.plus_days(day).plus_secs(minutes * 60)
}

fn past_date<R: Rng>(rng: &mut R, from_year: i64, span_years: i64) -> String {
    // days since 1970-01-01 for Jan 1 of from_year, approximately
    let base = (from_year - 1970) * 365 + (from_year - 1969) / 4;
    Timestamp::from_secs((base + rng.gen_range(0..span_years * 365)) * crate::memory::SECONDS_PER_DAY).date_string()
}

/// Family of a question chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Family {
    PersonName,
    PersonBirthday,
    PersonWork,
    Travel,
    Hotel,
    EventTime,
    EventPlace,
    EventAddress,
    Anniversary,
    SelfName,
    SelfAddress,
    SelfBirth,
    SelfJob,
    SelfSchool,
    SelfGender,
    SelfBelonging,
    Preference(usize),
}

impl Family {
    fn hops(self) -> usize {
        match self {
            Family::PersonWork | Family::Hotel | Family::EventPlace => 2,
            Family::Travel | Family::EventAddress => 3,
            _ => 1,
        }
    }

    fn all() -> Vec<Family> {
        let mut v = vec![
            Family::PersonName,
            Family::PersonBirthday,
            Family::PersonWork,
            Family::Travel,
            Family::Hotel,
            Family::EventTime,
            Family::EventPlace,
            Family::EventAddress,
            Family::Anniversary,
            Family::SelfName,
            Family::SelfAddress,
            Family::SelfBirth,
            Family::SelfJob,
            Family::SelfSchool,
            Family::SelfGender,
            Family::SelfBelonging,
        ];
        v.extend((0..PREFERENCES.len()).map(Family::Preference));
        v
    }
}

struct UserGen<'s> {
    spec: &'s CorpusSpec,
    rng: ChaCha8Rng,
    user: String,
    memories: Vec<MemoryRecord>,
    qa: Vec<QaPair>,
    roles: Vec<(&'static str, &'static str)>,
    used_keys: BTreeSet<String>,
    used_tails: BTreeSet<String>,
    pairs: BTreeSet<(String, String)>,
    /// Entities by kind, for distractor placement.
    anchors: Vec<(String, &'static str)>,
}

impl<'s> UserGen<'s> {
    fn new(spec: &'s CorpusSpec, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ index as u64);
        let mut roles: Vec<(&str, &str)> = ROLES.to_vec();
        roles.shuffle(&mut rng);
        // one spouse at most
        let mut seen_spouse = false;
        roles.retain(|(_, s)| {
            let keep = *s != SPOUSE || !seen_spouse;
            seen_spouse |= *s == SPOUSE;
            keep
        });
        roles.truncate(6);
        UserGen {
            spec,
            rng,
            user: user_id(index),
            memories: Vec::new(),
            qa: Vec::new(),
            roles,
            used_keys: BTreeSet::new(),
            used_tails: BTreeSet::new(),
            pairs: BTreeSet::new(),
            anchors: Vec::new(),
        }
    }

    fn created_at(&mut self) -> Timestamp {
        CORPUS_EPOCH.plus_secs(self.rng.gen_range(0..CORPUS_SPAN_DAYS * 86_400))
    }

    fn add(&mut self, head: &str, relation: &str, tail: &str, hint: &str) -> MemoryId {
        let id = format!("{}-m{:03}", self.user, self.memories.len());
        let created = self.created_at();
        self.memories.push(
            MemoryRecord::new(id.clone(), sentence(head, relation, tail), Triple::new(head, relation, tail), created)
                .with_hint(hint),
        );
        self.pairs.insert((head.to_string(), relation.to_string()));
        self.used_tails.insert(tail.to_string());
        id
    }

    /// A tail value not yet used by this user.
    fn fresh(&mut self, make: impl Fn(&mut ChaCha8Rng) -> String) -> Option<String> {
        for _ in 0..50 {
            let v = make(&mut self.rng);
            if !self.used_tails.contains(&v) {
                return Some(v);
            }
        }
        None
    }

    fn free(&self, head: &str, relation: &str) -> bool {
        !self.pairs.contains(&(head.to_string(), relation.to_string()))
    }

    fn push_qa(&mut self, question: String, template: AnswerTemplate, entity: String, relation: &str) {
        let required = template.memory_ids();
        let mut qa = QaPair::new(question, template.render(), required).with_anchors(entity, relation);
        qa.template = Some(template);
        self.qa.push(qa);
    }

    fn family_subclass(&self, f: Family, role: Option<(&str, &'static str)>) -> &'static str {
        match f {
            Family::PersonName | Family::PersonBirthday | Family::PersonWork => role.map(|r| r.1).unwrap_or(RELATIVES),
            Family::Travel | Family::Hotel => ARRANGEMENT,
            Family::EventTime | Family::EventPlace | Family::EventAddress => ARRANGEMENT,
            Family::Anniversary => ANNIVERSARY,
            Family::SelfName => NAME,
            Family::SelfAddress => ADDRESS,
            Family::SelfBirth => BIRTHDAY_AGE,
            Family::SelfJob => OCCUPATION,
            Family::SelfSchool => EDUCATION,
            Family::SelfGender => GENDER,
            Family::SelfBelonging => BELONGINGS,
            Family::Preference(i) => PREFERENCES[i].1,
        }
    }

    /// Tries to instantiate one chain of `family`; returns false when the
    /// user has no room for it (all people or events used, etc.).
    fn chain(&mut self, family: Family, role: Option<(&'static str, &'static str)>) -> bool {
        let key = match (family, role) {
            (Family::PersonName | Family::PersonBirthday | Family::PersonWork | Family::Travel | Family::Hotel, Some(r)) => {
                format!("{family:?}/{}", r.0)
            }
            (Family::PersonName | Family::PersonBirthday | Family::PersonWork | Family::Travel | Family::Hotel, None) => {
                return false
            }
            _ => format!("{family:?}"),
        };
        if matches!(family, Family::EventTime | Family::EventPlace | Family::EventAddress) {
            // one event per chain; events are drawn fresh below
        } else if self.used_keys.contains(&key) {
            return false;
        }
        let ok = match family {
            Family::PersonName => {
                let (p, hint) = role.unwrap();
                let Some(n) = self.fresh(|r| pick(r, NAMES).to_string()) else { return false };
                let m = self.add(p, "name is", &n, hint);
                let t = AnswerTemplate::new().text(format!("Your {p}'s name is ")).slot(&n, m).text(".");
                self.push_qa(format!("What is my {p}'s name?"), t, p.to_string(), "name is");
                self.anchors.push((p.to_string(), "person"));
                true
            }
            Family::PersonBirthday => {
                let (p, hint) = role.unwrap();
                let Some(d) = self.fresh(|r| past_date(r, 1950, 60)) else { return false };
                let m = self.add(p, "birthday is", &d, hint);
                let t = AnswerTemplate::new().text(format!("Your {p}'s birthday is on ")).slot(&d, m).text(".");
                self.push_qa(format!("When is my {p}'s birthday?"), t, p.to_string(), "birthday is");
                self.anchors.push((p.to_string(), "person"));
                true
            }
            Family::PersonWork => {
                let (p, hint) = role.unwrap();
                let Some(co) = self.fresh(|r| pick(r, COMPANIES).to_string()) else { return false };
                let city = pick(&mut self.rng, CITIES).to_string();
                let m1 = self.add(p, "works at", &co, hint);
                let m2 = self.add(&co, "located in", &city, OCCUPATION);
                let t = AnswerTemplate::new()
                    .text(format!("Your {p} works at "))
                    .slot(&co, m1)
                    .text(" in ")
                    .slot(&city, m2)
                    .text(".");
                self.push_qa(format!("In which city does my {p} work?"), t, format!("{p}'s workplace"), "located in");
                self.anchors.push((p.to_string(), "person"));
                self.anchors.push((co, "company"));
                true
            }
            Family::Travel => {
                let (p, hint) = role.unwrap();
                let city = pick(&mut self.rng, CITIES).to_string();
                let Some(flight) = self.fresh(|r| format!("{}{} flight", pick(r, AIRLINES), r.gen_range(100..1000)))
                else {
                    return false;
                };
                let Some(time) = self.fresh(|r| future_time(r).clock_on_date()) else { return false };
                let m1 = self.add(p, "traveling to", &city, hint);
                let m2 = self.add(p, "flies on", &flight, ARRANGEMENT);
                let m3 = self.add(&flight, "departs at", &time, ARRANGEMENT);
                let code = flight.trim_end_matches(" flight").to_string();
                let t = AnswerTemplate::new()
                    .text(format!("Your {p}'s flight "))
                    .slot(code, m2)
                    .text(" to ")
                    .slot(&city, m1)
                    .text(" departs at ")
                    .slot(&time, m3)
                    .text(".");
                self.push_qa(
                    format!("What time does my {p}'s flight to {city} depart?"),
                    t,
                    format!("{p}'s flight"),
                    "departs at",
                );
                self.anchors.push((p.to_string(), "person"));
                self.anchors.push((flight, "flight"));
                true
            }
            Family::Hotel => {
                let (p, hint) = role.unwrap();
                let Some(hotel) = self.fresh(|r| pick(r, HOTELS).to_string()) else { return false };
                let start = future_time(&mut self.rng);
                let nights = self.rng.gen_range(2..8);
                let range = format!("{} to {}", start.date_string(), start.plus_days(nights).date_string());
                let m1 = self.add(p, "stays at", &hotel, hint);
                let m2 = self.add(&hotel, "reservation is for", &range, ARRANGEMENT);
                let t = AnswerTemplate::new()
                    .text(format!("Your {p} stays at the "))
                    .slot(&hotel, m1)
                    .text(" hotel for ")
                    .slot(&range, m2)
                    .text(".");
                self.push_qa(
                    format!("When is my {p}'s hotel reservation?"),
                    t,
                    format!("{p}'s hotel"),
                    "reservation is for",
                );
                self.anchors.push((p.to_string(), "person"));
                self.anchors.push((hotel, "hotel"));
                true
            }
            Family::EventTime | Family::EventPlace | Family::EventAddress => {
                let Some((event, hint)) = self.fresh_event() else { return false };
                let Some(time) = self.fresh(|r| future_time(r).clock_on_date()) else { return false };
                let m1 = self.add(&event, "scheduled at", &time, hint);
                self.anchors.push((event.clone(), "event"));
                match family {
                    Family::EventTime => {
                        let t = AnswerTemplate::new().text(format!("Your {event} is scheduled at ")).slot(&time, m1).text(".");
                        self.push_qa(format!("When is my {event}?"), t, event, "scheduled at");
                    }
                    _ => {
                        let Some(venue) = self.fresh(|r| pick(r, VENUES).to_string()) else { return false };
                        let m2 = self.add(&event, "takes place at", &venue, hint);
                        self.anchors.push((venue.clone(), "venue"));
                        if family == Family::EventPlace {
                            let t = AnswerTemplate::new()
                                .text(format!("Your {event} is at "))
                                .slot(&time, m1)
                                .text(" at the ")
                                .slot(&venue, m2)
                                .text(".");
                            self.push_qa(format!("When and where is my {event}?"), t, event, "takes place at");
                        } else {
                            let Some(addr) = self.fresh(address) else { return false };
                            let m3 = self.add(&venue, "located at", &addr, ADDRESS);
                            let t = AnswerTemplate::new()
                                .text(format!("Your {event} is at "))
                                .slot(&time, m1)
                                .text(" at the ")
                                .slot(&venue, m2)
                                .text(", ")
                                .slot(&addr, m3)
                                .text(".");
                            self.push_qa(
                                format!("When is my {event} and what is the address of the place?"),
                                t,
                                format!("{event} place"),
                                "located at",
                            );
                        }
                    }
                }
                true
            }
            Family::Anniversary => {
                let d = past_date(&mut self.rng, 1995, 25);
                let m = self.add("I", "wedding anniversary is", &d, ANNIVERSARY);
                let t = AnswerTemplate::new().text("Your wedding anniversary is on ").slot(&d, m).text(".");
                self.push_qa("When is my wedding anniversary?".into(), t, "wedding".into(), "wedding anniversary is");
                true
            }
            Family::SelfName => self.self_fact("name is", NAME, NAMES, "What is my name?", "Your name is ", "name"),
            Family::SelfAddress => {
                let Some(addr) = self.fresh(address) else { return false };
                let m = self.add("I", "home address is", &addr, ADDRESS);
                let t = AnswerTemplate::new().text("Your home address is ").slot(&addr, m).text(".");
                self.push_qa("What is my home address?".into(), t, "home".into(), "home address is");
                true
            }
            Family::SelfBirth => {
                let d = past_date(&mut self.rng, 1960, 45);
                let m = self.add("I", "born on", &d, BIRTHDAY_AGE);
                let t = AnswerTemplate::new().text("You were born on ").slot(&d, m).text(".");
                self.push_qa("When was I born?".into(), t, "birthday".into(), "born on");
                true
            }
            Family::SelfJob => self.self_fact("works as", OCCUPATION, OCCUPATIONS, "What is my job?", "You work as a ", "job"),
            Family::SelfSchool => self.self_fact(
                "graduated from",
                EDUCATION,
                SCHOOLS,
                "Which university did I graduate from?",
                "You graduated from ",
                "university",
            ),
            Family::SelfGender => self.self_fact("gender is", GENDER, GENDERS, "What is my gender?", "Your gender is ", "gender"),
            Family::SelfBelonging => {
                self.self_fact("owns", BELONGINGS, OWNED_ITEMS, "What do I own?", "You own a ", "belongings")
            }
            Family::Preference(i) => {
                let (rel, sub, pool) = PREFERENCES[i];
                let what = rel.trim_start_matches("favorite ").trim_end_matches(" is");
                let q = format!("What is my favorite {what}?");
                let lead = format!("Your favorite {what} is ");
                self.self_fact(rel, sub, pool, &q, &lead, &format!("favorite {what}"))
            }
        };
        if ok {
            self.used_keys.insert(key);
        }
        ok
    }

    fn self_fact(&mut self, rel: &str, sub: &str, pool: &[&str], q: &str, lead: &str, entity: &str) -> bool {
        let Some(v) = self.fresh(|r| pick(r, pool).to_string()) else { return false };
        let m = self.add("I", rel, &v, sub);
        let t = AnswerTemplate::new().text(lead).slot(&v, m).text(".");
        self.push_qa(q.to_string(), t, entity.to_string(), rel);
        true
    }

    fn fresh_event(&mut self) -> Option<(String, &'static str)> {
        let free: Vec<(&str, &'static str)> =
            EVENTS.iter().copied().filter(|(e, _)| !self.used_keys.contains(&format!("event/{e}"))).collect();
        let (e, hint) = *free.choose(&mut self.rng)?;
        self.used_keys.insert(format!("event/{e}"));
        Some((e.to_string(), hint))
    }

    fn distractor(&mut self) -> bool {
        for _ in 0..20 {
            let on_entity = !self.anchors.is_empty() && self.rng.gen_bool(0.7);
            let (head, rel, tail, hint): (String, &str, String, &str) = if on_entity {
                let (name, kind) = self.anchors[self.rng.gen_range(0..self.anchors.len())].clone();
                match kind {
                    "person" => {
                        let hint = ROLES.iter().find(|r| r.0 == name).map(|r| r.1).unwrap_or(RELATIVES);
                        match self.rng.gen_range(0..3) {
                            0 => (name, "likes", pick(&mut self.rng, FOODS).to_string(), DIET),
                            1 => (name, "hobby is", pick(&mut self.rng, HOBBIES).to_string(), hint),
                            _ => (name, "favorite color is", pick(&mut self.rng, COLORS).to_string(), hint),
                        }
                    }
                    "flight" => {
                        if self.rng.gen_bool(0.5) {
                            (name, "offers", pick(&mut self.rng, AMENITIES).to_string(), ARRANGEMENT)
                        } else {
                            let airline = pick(&mut self.rng, AIRLINES);
                            (name, "operated by", format!("{airline} Airways"), ARRANGEMENT)
                        }
                    }
                    "hotel" => (name, "includes", pick(&mut self.rng, EXTRAS).to_string(), ARRANGEMENT),
                    "event" | "venue" => (name, "organized by", pick(&mut self.rng, NAMES).to_string(), ARRANGEMENT),
                    _ => (name, "hobby is", pick(&mut self.rng, HOBBIES).to_string(), RELATIVES),
                }
            } else {
                let (rel, sub, pool) = SELF_DISTRACTORS[self.rng.gen_range(0..SELF_DISTRACTORS.len())];
                ("I".to_string(), rel, pick(&mut self.rng, pool).to_string(), sub)
            };
            let exists = self
                .memories
                .iter()
                .any(|m| m.triple.head == head && m.triple.relation == rel && m.triple.tail == tail);
            if exists || (!on_entity && !self.free(&head, rel) && self.rng.gen_bool(0.5)) {
                continue;
            }
            let id = format!("{}-m{:03}", self.user, self.memories.len());
            let created = self.created_at();
            self.memories.push(
                MemoryRecord::new(id, sentence(&head, rel, &tail), Triple::new(head.as_str(), rel, tail.as_str()), created)
                    .with_hint(hint),
            );
            self.pairs.insert((head, rel.to_string()));
            return true;
        }
        false
    }

    fn generate(mut self) -> Session {
        let target = self.spec.memories_per_user;
        let chain_budget =
            ((target as f64) * (1.0 - self.spec.distractor_ratio)).round().clamp(0.0, target as f64) as usize;
        let families = Family::all();
        let mut failures = 0;
        while self.memories.len() < chain_budget && failures < 200 {
            let room = chain_budget - self.memories.len();
            let mut hop_weights = self.spec.hop_distribution;
            for (h, w) in hop_weights.iter_mut().enumerate() {
                if h + 1 > room {
                    *w = 0.0;
                }
            }
            let Some(h) = weighted(&mut self.rng, &hop_weights) else { break };
            let hops = h + 1;
            let role = self.roles[self.rng.gen_range(0..self.roles.len())];
            let candidates: Vec<Family> = families.iter().copied().filter(|f| f.hops() == hops).collect();
            let weights: Vec<f64> =
                candidates.iter().map(|f| self.spec.weight(self.family_subclass(*f, Some(role)))).collect();
            let Some(i) = weighted(&mut self.rng, &weights) else {
                failures += 1;
                continue;
            };
            if !self.chain(candidates[i], Some(role)) {
                failures += 1;
            }
        }
        let mut failures = 0;
        while self.memories.len() < target && failures < 200 {
            if !self.distractor() {
                failures += 1;
            }
        }
        Session::new(self.user, self.memories, self.qa)
    }
}

fn address(rng: &mut ChaCha8Rng) -> String {
    format!("{} {} Street, {}", rng.gen_range(1..300), pick(rng, STREETS), pick(rng, CITIES))
}

pub fn user_id(index: usize) -> String {
    format!("user-{index:03}")
}

/// Generates `spec.n_users` users.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Vec<Session>, SynthError> {
    gen_users(spec, 0..spec.n_users)
}

/// Generates the users with the given indices (same seeds as in the full corpus).
pub fn gen_users(spec: &CorpusSpec, indices: core::ops::Range<usize>) -> Result<Vec<Session>, SynthError> {
    spec.validate()?;
    Ok(indices.map(|i| UserGen::new(spec, i).generate()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditStreamSpec {
    pub weeks: usize,
    /// Edits per week when `weekly_counts` is empty.
    pub edits_per_week: usize,
    /// Explicit per-week counts; overrides `weeks` and `edits_per_week`.
    pub weekly_counts: Vec<usize>,
    /// Weights of insertion, deletion and replacement.
    pub kind_mix: [f64; 3],
    pub seed: u64,
}

impl Default for EditStreamSpec {
    fn default() -> Self {
        // four weeks at one hundredth of a production edit volume
        EditStreamSpec { weeks: 4, edits_per_week: 50, weekly_counts: vec![25, 96, 21, 63], kind_mix: [1.0, 1.0, 2.0], seed: 7 }
    }
}

impl EditStreamSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.kind_mix.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(SynthError::InvalidSpec("edit kind weights must be positive".into()));
        }
        Ok(())
    }

    pub fn counts(&self) -> Vec<usize> {
        if self.weekly_counts.is_empty() {
            vec![self.edits_per_week; self.weeks]
        } else {
            self.weekly_counts.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEdit {
    pub user_id: String,
    pub week: usize,
    pub command: EditCommand,
}

/// A value a replacement made obsolete for one question.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Superseded {
    pub user_id: String,
    pub question: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeekState {
    pub week: usize,
    /// Last instant of the week; expiry sweeps run here.
    pub end: Timestamp,
    /// Every user's question set after this week's edits.
    pub qa_pairs: BTreeMap<String, Vec<QaPair>>,
    /// Values superseded so far, per question still in the set.
    pub superseded: Vec<Superseded>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditStream {
    pub edits: Vec<UserEdit>,
    pub weeks: Vec<WeekState>,
}

impl EditStream {
    pub fn edits_in_week(&self, week: usize) -> impl Iterator<Item = &UserEdit> {
        self.edits.iter().filter(move |e| e.week == week)
    }
}

struct StreamUser {
    id: String,
    memories: Vec<MemoryRecord>,
    live: BTreeSet<MemoryId>,
    qa: Vec<QaPair>,
    superseded: Vec<(String, String)>,
    next: usize,
}

impl StreamUser {
    fn new_id(&mut self) -> MemoryId {
        self.next += 1;
        format!("{}-e{:03}", self.id, self.next)
    }

    fn live_with(&self, pred: impl Fn(&MemoryRecord) -> bool) -> Vec<usize> {
        self.memories
            .iter()
            .enumerate()
            .filter(|(_, m)| self.live.contains(&m.id) && pred(m))
            .map(|(i, _)| i)
            .collect()
    }

    fn has_pair(&self, head: &str, relation: &str) -> bool {
        self.memories
            .iter()
            .any(|m| self.live.contains(&m.id) && m.triple.head == head && m.triple.relation == relation)
    }

    fn push(&mut self, record: MemoryRecord) {
        self.live.insert(record.id.clone());
        self.memories.push(record);
    }
}

fn replacement_value(rng: &mut ChaCha8Rng, relation: &str, old: &str, avoid: &BTreeSet<&str>) -> String {
    for _ in 0..50 {
        let v = match relation {
            "departs at" | "scheduled at" => future_time(rng).clock_on_date(),
            "reservation is for" => {
                let s = future_time(rng);
                format!("{} to {}", s.date_string(), s.plus_days(rng.gen_range(2..8)).date_string())
            }
            "home address is" | "located at" => address(rng),
            "works as" => pick(rng, OCCUPATIONS).to_string(),
            "located in" => pick(rng, CITIES).to_string(),
            "favorite food is" => pick(rng, FOODS).to_string(),
            "favorite show is" => pick(rng, SHOWS).to_string(),
            _ => format!("revision {}", rng.gen_range(1000..10_000)),
        };
        if v != old && !v.contains(old) && !old.contains(&v) && !avoid.iter().any(|a| v.contains(a) || a.contains(&v)) {
            return v;
        }
    }
    format!("revision {}", rng.gen_range(10_000..100_000))
}

/// Weekly edits over existing chains, with the question sets kept in step.
///
/// * Replacement rewrites a leaf value of a live chain memory; every
///   question using that memory is retargeted to the new memory and value,
///   and the old value is recorded as superseded.
/// * Deletion adds a hotel or event voucher valid for one to three days.
/// * Insertion adds a seat number to a flight (with a two-hop question) or,
///   failing that, a phone number to a person (one-hop question).
pub fn gen_edit_stream(spec: &EditStreamSpec, corpus: &[Session]) -> Result<EditStream, SynthError> {
    spec.validate()?;
    let counts = spec.counts();
    if corpus.is_empty() || counts.iter().all(|c| *c == 0) {
        let weeks = counts
            .iter()
            .enumerate()
            .map(|(w, _)| WeekState {
                week: w + 1,
                end: EDIT_EPOCH.plus_days(7 * (w as i64 + 1)).plus_secs(-1),
                qa_pairs: corpus.iter().map(|s| (s.user_id.clone(), s.qa_pairs.clone())).collect(),
                superseded: Vec::new(),
            })
            .collect();
        return Ok(EditStream { edits: Vec::new(), weeks });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut users: Vec<StreamUser> = corpus
        .iter()
        .map(|s| StreamUser {
            id: s.user_id.clone(),
            memories: s.memories.clone(),
            live: s.memories.iter().map(|m| m.id.clone()).collect(),
            qa: s.qa_pairs.clone(),
            superseded: Vec::new(),
            next: 0,
        })
        .collect();
    let mut edits = Vec::new();
    let mut weeks = Vec::new();
    for (w, &count) in counts.iter().enumerate() {
        let start = EDIT_EPOCH.plus_days(7 * w as i64);
        let mut offsets: Vec<i64> = (0..count).map(|_| rng.gen_range(0..6 * 86_400)).collect();
        offsets.sort_unstable();
        for off in offsets {
            let at = start.plus_secs(off);
            let kind = match weighted(&mut rng, &spec.kind_mix) {
                Some(0) => EditKind::Insertion,
                Some(1) => EditKind::Deletion,
                _ => EditKind::Replacement,
            };
            // try the chosen kind on a few users, then fall back to a deletion
            let mut made = None;
            for _ in 0..10 {
                let u = rng.gen_range(0..users.len());
                if let Some(cmd) = make_edit(&mut rng, &mut users[u], kind, at) {
                    made = Some((u, cmd));
                    break;
                }
            }
            if made.is_none() {
                let u = rng.gen_range(0..users.len());
                made = make_edit(&mut rng, &mut users[u], EditKind::Deletion, at).map(|c| (u, c));
            }
            if let Some((u, command)) = made {
                edits.push(UserEdit { user_id: users[u].id.clone(), week: w + 1, command });
            }
        }
        let end = start.plus_days(7).plus_secs(-1);
        for u in &mut users {
            let expired: Vec<MemoryId> = u
                .memories
                .iter()
                .filter(|m| m.valid_until.is_some_and(|v| v < end) && u.live.contains(&m.id))
                .map(|m| m.id.clone())
                .collect();
            for id in expired {
                u.live.remove(&id);
            }
        }
        let mut superseded = Vec::new();
        for u in &users {
            for (q, v) in &u.superseded {
                superseded.push(Superseded { user_id: u.id.clone(), question: q.clone(), value: v.clone() });
            }
        }
        superseded.sort();
        superseded.dedup();
        weeks.push(WeekState {
            week: w + 1,
            end,
            qa_pairs: users.iter().map(|u| (u.id.clone(), u.qa.clone())).collect(),
            superseded,
        });
    }
    Ok(EditStream { edits, weeks })
}

fn make_edit(rng: &mut ChaCha8Rng, user: &mut StreamUser, kind: EditKind, at: Timestamp) -> Option<EditCommand> {
    match kind {
        EditKind::Replacement => {
            let candidates = user.live_with(|m| {
                REPLACEABLE.contains(&m.triple.relation.as_str()) && m.valid_until.is_none()
            });
            let &i = candidates.choose(rng)?;
            let old = user.memories[i].clone();
            let avoid: BTreeSet<&str> = user.superseded.iter().map(|(_, v)| v.as_str()).collect();
            let value = replacement_value(rng, &old.triple.relation, &old.triple.tail, &avoid);
            let id = user.new_id();
            let mut rec = MemoryRecord::new(
                id.clone(),
                sentence(&old.triple.head, &old.triple.relation, &value),
                Triple::new(old.triple.head.clone(), old.triple.relation.clone(), value.clone()),
                at,
            );
            rec.subclass_hint = old.subclass_hint.clone();
            user.live.remove(&old.id);
            user.push(rec.clone());
            for qa in &mut user.qa {
                let Some(t) = qa.template.as_mut() else { continue };
                if !t.memory_ids().contains(&old.id) {
                    continue;
                }
                t.retarget(&old.id, &id, &old.triple.tail, &value);
                qa.answer = t.render();
                for r in &mut qa.required_memory_ids {
                    if *r == old.id {
                        *r = id.clone();
                    }
                }
                user.superseded.push((qa.question.clone(), old.triple.tail.clone()));
            }
            Some(EditCommand { kind, payload: rec, effective_at: at })
        }
        EditKind::Deletion => {
            let hosts = user.live_with(|m| matches!(m.triple.relation.as_str(), "stays at" | "scheduled at"));
            let &i = hosts.choose(rng)?;
            let m = &user.memories[i];
            let head = if m.triple.relation == "stays at" { m.triple.tail.clone() } else { m.triple.head.clone() };
            let days = rng.gen_range(1..4);
            let until = at.plus_days(days);
            let value = until.date_string();
            let id = user.new_id();
            let rec = MemoryRecord::new(
                id,
                sentence(&head, "voucher expires on", &value),
                Triple::new(head, "voucher expires on", value),
                at,
            )
            .with_hint(ARRANGEMENT)
            .with_expiry(until);
            user.push(rec.clone());
            Some(EditCommand { kind, payload: rec, effective_at: at })
        }
        EditKind::Insertion => {
            let flights = user.live_with(|m| m.triple.relation == "flies on");
            let free_flights: Vec<usize> =
                flights.into_iter().filter(|&i| !user.has_pair(&user.memories[i].triple.tail, "seat number is")).collect();
            if let Some(&i) = free_flights.choose(rng) {
                let link = user.memories[i].clone();
                let person = link.triple.head.clone();
                let flight = link.triple.tail.clone();
                let seat = format!("{}{}", rng.gen_range(1..45), pick(rng, &["A", "B", "C", "D", "E", "F"]));
                let id = user.new_id();
                let rec = MemoryRecord::new(
                    id.clone(),
                    sentence(&flight, "seat number is", &seat),
                    Triple::new(flight.clone(), "seat number is", seat.clone()),
                    at,
                )
                .with_hint(ARRANGEMENT);
                user.push(rec.clone());
                let code = flight.trim_end_matches(" flight").to_string();
                let t = AnswerTemplate::new()
                    .text(format!("Your {person} sits in seat "))
                    .slot(&seat, id)
                    .text(" on flight ")
                    .slot(code, link.id.clone())
                    .text(".");
                let mut qa = QaPair::new(format!("Which seat does my {person} have on the flight?"), t.render(), t.memory_ids())
                    .with_anchors(format!("{person}'s flight"), "seat number is");
                qa.template = Some(t);
                user.qa.push(qa);
                return Some(EditCommand { kind, payload: rec, effective_at: at });
            }
            let people: BTreeSet<String> = user
                .memories
                .iter()
                .filter(|m| user.live.contains(&m.id) && ROLES.iter().any(|r| r.0 == m.triple.head))
                .map(|m| m.triple.head.clone())
                .filter(|p| !user.has_pair(p, "phone number is"))
                .collect();
            let people: Vec<String> = people.into_iter().collect();
            let person = people.choose(rng)?.clone();
            let phone = format!("+1 555 {:03} {:04}", rng.gen_range(100..1000), rng.gen_range(0..10_000));
            let hint = ROLES.iter().find(|r| r.0 == person).map(|r| r.1).unwrap_or(RELATIVES);
            let id = user.new_id();
            let rec = MemoryRecord::new(
                id.clone(),
                sentence(&person, "phone number is", &phone),
                Triple::new(person.clone(), "phone number is", phone.clone()),
                at,
            )
            .with_hint(hint);
            user.push(rec.clone());
            let t = AnswerTemplate::new().text(format!("Your {person}'s phone number is ")).slot(&phone, id).text(".");
            let mut qa = QaPair::new(format!("What is my {person}'s phone number?"), t.render(), t.memory_ids())
                .with_anchors(person.clone(), "phone number is");
            qa.template = Some(t);
            user.qa.push(qa);
            Some(EditCommand { kind, payload: rec, effective_at: at })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryKind {
    AfName,
    AfAddress,
    AfBirthday,
    AfOccupation,
    UsReminder,
    UsTravel,
}

impl QueryKind {
    /// `"AF"` for form filling, `"US"` for user services.
    pub fn application(self) -> &'static str {
        match self {
            QueryKind::UsReminder | QueryKind::UsTravel => "US",
            _ => "AF",
        }
    }
}

/// An entity-extraction query. `qa.answer` is the gold entity string and
/// `qa.template` its slot structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityQuery {
    pub user_id: String,
    pub kind: QueryKind,
    pub qa: QaPair,
}

fn slot_query(question: &str, value: &str, id: &str, required: Vec<MemoryId>, anchors: (&str, &str)) -> QaPair {
    let t = AnswerTemplate::new().slot(value, id);
    let mut qa = QaPair::new(question, t.render(), required).with_anchors(anchors.0, anchors.1);
    qa.template = Some(t);
    qa
}

/// Form-filling and service queries for each user, built from the live
/// memories by relation label. Slots a user lacks are skipped.
pub fn gen_af_us_queries(corpus: &[Session]) -> Vec<EntityQuery> {
    let mut out = Vec::new();
    for s in corpus {
        let latest = |rel: &str| {
            s.memories
                .iter()
                .filter(|m| is_self(&m.triple.head) && m.triple.relation == rel)
                .max_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)))
        };
        let forms = [
            (QueryKind::AfName, "name is", "What is the user's full name?", ("user", "name is")),
            (QueryKind::AfAddress, "home address is", "What is the user's home address?", ("user home", "home address is")),
            (QueryKind::AfBirthday, "born on", "What is the user's date of birth?", ("user birth", "born on")),
            (QueryKind::AfOccupation, "works as", "What is the user's occupation?", ("user job", "works as")),
        ];
        for (kind, rel, question, anchors) in forms {
            if let Some(m) = latest(rel) {
                let qa = slot_query(question, &m.triple.tail, &m.id, vec![m.id.clone()], anchors);
                out.push(EntityQuery { user_id: s.user_id.clone(), kind, qa });
            }
        }
        // reminder: the earliest scheduled event
        let next = s
            .memories
            .iter()
            .filter(|m| m.triple.relation == "scheduled at")
            .min_by(|a, b| schedule_key(&a.triple.tail).cmp(&schedule_key(&b.triple.tail)).then_with(|| a.id.cmp(&b.id)));
        if let Some(m) = next {
            let t = AnswerTemplate::new().slot(&m.triple.head, &m.id).text(" at ").slot(&m.triple.tail, &m.id);
            let mut qa = QaPair::new("What is my next scheduled event and when is it?", t.render(), vec![m.id.clone()])
                .with_anchors("next event", "scheduled at");
            qa.template = Some(t);
            out.push(EntityQuery { user_id: s.user_id.clone(), kind: QueryKind::UsReminder, qa });
        }
        // travel: the address of an event venue, else a travel destination
        let venue_route = s.memories.iter().filter(|m| m.triple.relation == "takes place at").find_map(|place| {
            s.memories
                .iter()
                .find(|a| a.triple.relation == "located at" && a.triple.head == place.triple.tail)
                .map(|addr| (place, addr))
        });
        if let Some((place, addr)) = venue_route {
            let q = format!("What address should I go to for my {}?", place.triple.head);
            let qa = slot_query(
                &q,
                &addr.triple.tail,
                &addr.id,
                vec![place.id.clone(), addr.id.clone()],
                (place.triple.head.as_str(), "located at"),
            );
            out.push(EntityQuery { user_id: s.user_id.clone(), kind: QueryKind::UsTravel, qa });
        } else if let Some(trip) = s.memories.iter().find(|m| m.triple.relation == "traveling to") {
            let q = format!("Which city is my {} traveling to?", trip.triple.head);
            let who = format!("{}'s trip", trip.triple.head);
            let qa = slot_query(&q, &trip.triple.tail, &trip.id, vec![trip.id.clone()], (who.as_str(), "traveling to"));
            out.push(EntityQuery { user_id: s.user_id.clone(), kind: QueryKind::UsTravel, qa });
        }
    }
    out
}

/// Sort key of an `HH:MM on YYYY-MM-DD` string.
fn schedule_key(s: &str) -> (String, String) {
    match s.split_once(" on ") {
        Some((clock, date)) => (date.to_string(), clock.to_string()),
        None => (s.to_string(), String::new()),
    }
}

#[cfg(test)]
mod tests;
