#![no_main]

use libfuzzer_sys::fuzz_target;
use multicbf::simulator::{read_trajectory_csv, write_trajectory_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(traj) = read_trajectory_csv(data) {
        let m = traj.controls.first().map_or(0, |u| u.len());
        let mut out = Vec::new();
        write_trajectory_csv(&traj, m, &mut out).unwrap();
        let again = read_trajectory_csv(out.as_slice()).unwrap();
        assert_eq!(again.len(), traj.len());
    }
});
