//! Wikidata identifiers the pipeline gives a fixed meaning to.

pub const START_TIME: &str = "P580";
pub const END_TIME: &str = "P582";
pub const POINT_IN_TIME: &str = "P585";

/// Qualifiers that never disqualify a statement.
pub const TEMPORAL_QUALIFIERS: [&str; 3] = [START_TIME, END_TIME, POINT_IN_TIME];

pub const INSTANCE_OF: &str = "P31";
pub const POPULATION: &str = "P1082";
pub const HEAD_OF_GOVERNMENT: &str = "P6";
pub const HEAD_OF_STATE: &str = "P35";

pub const INCEPTION: &str = "P571";
pub const DATE_OF_BIRTH: &str = "P569";
pub const TIME_OF_DISCOVERY: &str = "P575";
pub const DATE_OF_OFFICIAL_OPENING: &str = "P1619";
pub const ANNOUNCEMENT_DATE: &str = "P6949";
pub const PUBLICATION_DATE: &str = "P577";

pub const DATE_OF_DEATH: &str = "P570";
pub const DATE_OF_BURIAL: &str = "P4602";

/// Relations whose date object marks the creation of the subject.
pub const CREATION_RELATIONS: [&str; 8] = [
    INCEPTION,
    DATE_OF_BIRTH,
    START_TIME,
    TIME_OF_DISCOVERY,
    DATE_OF_OFFICIAL_OPENING,
    ANNOUNCEMENT_DATE,
    POINT_IN_TIME,
    PUBLICATION_DATE,
];

pub const DEATH_RELATIONS: [&str; 2] = [DATE_OF_DEATH, DATE_OF_BURIAL];
