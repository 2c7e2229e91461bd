#![no_main]

use libfuzzer_sys::fuzz_target;
use triadscope::analytics::EventCalendar;

fuzz_target!(|data: &[u8]| {
    if let Ok(calendar) = EventCalendar::parse(data) {
        let mut buf = Vec::new();
        calendar.write_csv(&mut buf).unwrap();
        assert_eq!(EventCalendar::parse(buf.as_slice()).unwrap(), calendar);
    }
});
