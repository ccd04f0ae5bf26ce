//! A small hand-written session: a boss's trip to Amsterdam, plus the three
//! kinds of edit applied to it. Used by tests, docs and the REPL demo.

use alloc::vec;
use alloc::vec::Vec;

use crate::generation::AnswerTemplate;
use crate::memory::{EditCommand, EditKind, MemoryRecord, QaPair, Session, Timestamp, Triple};
use crate::taxonomy::{ARRANGEMENT, COLLEAGUE_FRIENDS};

pub const USER: &str = "demo-user";
pub const FLIGHT_QUESTION: &str = "What time is my boss's flight to Amsterdam?";
pub const HOTEL_QUESTION: &str = "When does the hotel I booked for my boss start and end?";
pub const OLD_DEPARTURE: &str = "01:40 on 2024-05-12";
pub const NEW_DEPARTURE: &str = "01:30 on 2024-05-12";

fn at(day: u32, hour: u32) -> Timestamp {
    // 2024-04-01T00:00:00Z
    Timestamp::from_secs(1_711_929_600 + (day as i64 - 1) * 86_400 + hour as i64 * 3_600)
}

fn memory(id: &str, text: &str, triple: (&str, &str, &str), day: u32, hint: &str) -> MemoryRecord {
    MemoryRecord::new(id, text, Triple::new(triple.0, triple.1, triple.2), at(day, 9)).with_hint(hint)
}

pub fn memories() -> Vec<MemoryRecord> {
    vec![
        memory(
            "M1",
            "My boss is traveling to Amsterdam next month, I assist with flight and hotel arrangements.",
            ("boss", "traveling to", "Amsterdam"),
            10,
            COLLEAGUE_FRIENDS,
        ),
        memory("M2", "I booked the EK349 flight.", ("I", "booked", "EK349 flight"), 11, ARRANGEMENT),
        memory(
            "M3",
            "I booked the Crowne Plaza near Central Station.",
            ("I", "booked", "Crowne Plaza"),
            12,
            ARRANGEMENT,
        ),
        memory(
            "M4",
            "The EK349 flight departs at 01:40 on 2024-05-12.",
            ("EK349 flight", "departs at", OLD_DEPARTURE),
            13,
            ARRANGEMENT,
        ),
        memory(
            "M5",
            "The Crowne Plaza reservation is for 2024-05-12 to 2024-05-18.",
            ("Crowne Plaza", "reservation is for", "2024-05-12 to 2024-05-18"),
            14,
            ARRANGEMENT,
        ),
        memory(
            "M6",
            "The Crowne Plaza reservation includes a Queen Bed Standard Accessible room with breakfast.",
            ("Crowne Plaza", "includes", "Queen Bed Standard Accessible room"),
            15,
            ARRANGEMENT,
        ),
    ]
}

pub fn flight_qa() -> QaPair {
    let template = AnswerTemplate::new()
        .text("Your ")
        .slot("boss", "M1")
        .text(" flight ")
        .slot("EK349", "M2")
        .text(" departs at ")
        .slot(OLD_DEPARTURE, "M4")
        .text(".");
    let mut qa = QaPair::new(FLIGHT_QUESTION, template.render(), vec!["M1".into(), "M2".into(), "M4".into()])
        .with_anchors("boss's flight", "departs");
    qa.template = Some(template);
    qa
}

pub fn hotel_qa() -> QaPair {
    let template = AnswerTemplate::new()
        .text("The ")
        .slot("Crowne Plaza", "M3")
        .text(" reservation is from ")
        .slot("2024-05-12 to 2024-05-18", "M5")
        .text(".");
    let mut qa = QaPair::new(HOTEL_QUESTION, template.render(), vec!["M1".into(), "M3".into(), "M5".into()])
        .with_anchors("hotel", "reservation is for");
    qa.template = Some(template);
    qa
}

pub fn session() -> Session {
    Session::new(USER, memories(), vec![flight_qa(), hotel_qa()])
}

/// Seat number for the booked flight: a relation the graph has not seen.
pub fn insert_seat() -> EditCommand {
    let payload = memory(
        "M7",
        "My boss's seat on the EK349 flight is 32A.",
        ("EK349 flight", "seat number", "32A"),
        20,
        ARRANGEMENT,
    );
    EditCommand { kind: EditKind::Insertion, payload, effective_at: at(20, 9) }
}

/// A hotel voucher that is only valid until 2024-05-14.
pub fn expiring_voucher() -> EditCommand {
    let payload = memory(
        "M8",
        "The Crowne Plaza hotel voucher expires on 2024-05-14.",
        ("Crowne Plaza", "voucher expires on", "2024-05-14"),
        21,
        ARRANGEMENT,
    )
    .with_expiry(Timestamp::from_secs(1_715_644_800)); // 2024-05-14T00:00:00Z
    EditCommand { kind: EditKind::Deletion, payload, effective_at: at(21, 9) }
}

/// Moves the departure from 01:40 to 01:30.
pub fn replace_departure() -> EditCommand {
    let payload = memory(
        "M9",
        "The EK349 flight departs at 01:30 on 2024-05-12.",
        ("EK349 flight", "departs at", NEW_DEPARTURE),
        22,
        ARRANGEMENT,
    );
    EditCommand { kind: EditKind::Replacement, payload, effective_at: at(22, 9) }
}

/// The flight QA after [`replace_departure`].
pub fn flight_qa_after_replacement() -> QaPair {
    let mut qa = flight_qa();
    if let Some(t) = qa.template.as_mut() {
        t.retarget("M4", "M9", OLD_DEPARTURE, NEW_DEPARTURE);
        qa.answer = t.render();
        qa.required_memory_ids = vec!["M1".into(), "M2".into(), "M9".into()];
    }
    qa
}
