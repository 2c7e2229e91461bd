#![no_main]

use libfuzzer_sys::fuzz_target;
use triadscope::analytics::{DayLabel, EventSpec};
use triadscope::ingest::DateFormat;
use triadscope::triads::TriadClass;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(label) = text.parse::<DayLabel>() {
        assert_eq!(label.to_string().parse::<DayLabel>(), Ok(label));
    }
    if let Ok(event) = text.parse::<EventSpec>() {
        assert_eq!(event.to_string().parse::<EventSpec>().ok(), Some(event));
    }
    if let Ok(class) = text.parse::<TriadClass>() {
        assert_eq!(class.code().parse::<TriadClass>().ok(), Some(class));
    }
    for format in [DateFormat::Iso8601, DateFormat::MonthDayYear] {
        if let Some(date) = format.parse(text) {
            assert_eq!(format.parse(&format.format(date)), Some(date));
        }
    }
});
