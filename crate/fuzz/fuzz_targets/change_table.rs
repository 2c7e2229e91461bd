#![no_main]

use libfuzzer_sys::fuzz_target;
use triadscope::analytics::{rank_detectors, ChangeTable};

fuzz_target!(|data: &[u8]| {
    let Ok(table) = ChangeTable::parse_csv(data) else {
        return;
    };
    let _ = rank_detectors(std::slice::from_ref(&table));

    // Emitted cells are rounded, so writing is stable from the second pass on.
    let mut first = Vec::new();
    table.write_csv(&mut first).unwrap();
    let reread = ChangeTable::parse_csv(first.as_slice()).unwrap();
    let mut second = Vec::new();
    reread.write_csv(&mut second).unwrap();
    assert_eq!(first, second);
});
