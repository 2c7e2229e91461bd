#![no_main]

use libfuzzer_sys::fuzz_target;
use triadscope::analytics::{flag_anomalies, read_series_csv, write_series_csv, zscore_series};

fuzz_target!(|data: &[u8]| {
    let Ok(series) = read_series_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &series).unwrap();
    assert_eq!(read_series_csv(buf.as_slice()).unwrap(), series);
    for s in &series {
        if let Ok((z, _)) = zscore_series(s) {
            let _ = flag_anomalies(&z, 3.0);
        }
    }
});
