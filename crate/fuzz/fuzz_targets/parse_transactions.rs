#![no_main]

use libfuzzer_sys::fuzz_target;
use triadscope::ingest::{
    parse_transactions, write_transactions, ColumnSelection, DateFormat, ErrorMode, ParseConfig,
};

fuzz_target!(|data: &[u8]| {
    let Some((&flags, input)) = data.split_first() else {
        return;
    };
    let config = ParseConfig {
        delimiter: if flags & 1 == 0 { b',' } else { b';' },
        date_format: if flags & 2 == 0 { DateFormat::Iso8601 } else { DateFormat::MonthDayYear },
        columns: if flags & 4 == 0 { ColumnSelection::default() } else { ColumnSelection::ByPosition },
        mode: if flags & 8 == 0 { ErrorMode::FailFast } else { ErrorMode::SkipWithReport },
    };
    let Ok(outcome) = parse_transactions(input, &config) else {
        return;
    };
    assert!(outcome.records.iter().all(|r| r.value() >= 1));

    // Accepted records survive a write and a re-read unchanged.
    let mut buf = Vec::new();
    write_transactions(&mut buf, &outcome.records, DateFormat::Iso8601).unwrap();
    let again = parse_transactions(buf.as_slice(), &ParseConfig::default()).unwrap();
    assert_eq!(again.records, outcome.records);
});
