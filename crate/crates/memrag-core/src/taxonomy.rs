//! The fixed memory-type layer and its subclass layer.

use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemoryType {
    Relationship,
    Preference,
    Event,
    Attribute,
}

impl MemoryType {
    pub const ALL: [MemoryType; 4] =
        [MemoryType::Relationship, MemoryType::Preference, MemoryType::Event, MemoryType::Attribute];

    pub fn name(self) -> &'static str {
        match self {
            MemoryType::Relationship => "Relationship",
            MemoryType::Preference => "Preference",
            MemoryType::Event => "Event",
            MemoryType::Attribute => "Attribute",
        }
    }

    pub fn subclasses(self) -> &'static [&'static str] {
        match self {
            MemoryType::Relationship => RELATIONSHIP,
            MemoryType::Preference => PREFERENCE,
            MemoryType::Event => EVENT,
            MemoryType::Attribute => ATTRIBUTE,
        }
    }
}

impl fmt::Display for MemoryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const SPOUSE: &str = "Spouse";
pub const PARENTS_CHILDREN: &str = "Parents/Children";
pub const RELATIVES: &str = "Relatives";
pub const COLLEAGUE_FRIENDS: &str = "Colleague/Friends";
pub const TEACHER_STUDENT: &str = "Teacher/Student";

pub const DIET: &str = "Diet preference";
pub const CULTURAL: &str = "Cultural preference";
pub const CAR: &str = "Car preference";
pub const SPORTS: &str = "Sports preference";
pub const GAMING: &str = "Gaming preference";
pub const ENTERTAINMENT: &str = "Audio-visual entertainment preference";

pub const LIFE_EVENTS: &str = "Life events";
pub const ARRANGEMENT: &str = "Arrangement";
pub const ANNIVERSARY: &str = "Anniversary";

pub const NAME: &str = "Name/Nickname";
pub const BIRTHDAY_AGE: &str = "Birthday/Age";
pub const GENDER: &str = "Gender";
pub const EDUCATION: &str = "Education";
pub const BELONGINGS: &str = "Personal belongings/Pets";
pub const ADDRESS: &str = "Address";
pub const OCCUPATION: &str = "Occupation";

const RELATIONSHIP: &[&str] = &[SPOUSE, PARENTS_CHILDREN, RELATIVES, COLLEAGUE_FRIENDS, TEACHER_STUDENT];
const PREFERENCE: &[&str] = &[DIET, CULTURAL, CAR, SPORTS, GAMING, ENTERTAINMENT];
const EVENT: &[&str] = &[LIFE_EVENTS, ARRANGEMENT, ANNIVERSARY];
const ATTRIBUTE: &[&str] = &[NAME, BIRTHDAY_AGE, GENDER, EDUCATION, BELONGINGS, ADDRESS, OCCUPATION];

/// Every subclass in layer order.
pub fn all_subclasses() -> impl Iterator<Item = &'static str> {
    MemoryType::ALL.into_iter().flat_map(|t| t.subclasses().iter().copied())
}

pub fn type_of(subclass: &str) -> Option<MemoryType> {
    MemoryType::ALL.into_iter().find(|t| t.subclasses().contains(&subclass))
}

pub fn is_subclass(name: &str) -> bool {
    type_of(name).is_some()
}
