#![no_main]

//! First byte picks the dimension; the rest is read as little-endian
//! `f64` rows `[a_1 .. a_n, b]`.

use libfuzzer_sys::fuzz_target;
use multicbf::Polytope;
use nalgebra::{DMatrix, DVector};

const MAX_ROWS: usize = 12;

fuzz_target!(|data: &[u8]| {
    let Some((&head, rest)) = data.split_first() else {
        return;
    };
    let n = 1 + usize::from(head % 3);
    let vals: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let rows = (vals.len() / (n + 1)).min(MAX_ROWS);
    if rows == 0 {
        return;
    }
    let a = DMatrix::from_fn(rows, n, |r, c| vals[r * (n + 1) + c]);
    let b = DVector::from_fn(rows, |r, _| vals[r * (n + 1) + n]);
    let Ok(p) = Polytope::new(a, b) else { return };
    if let Ok(cheb) = p.chebyshev() {
        if cheb.feasible {
            assert!(cheb.radius >= 0.0);
            let center = cheb.center.unwrap();
            let _ = p.project_point(&center);
            let _ = p.erode(cheb.radius / 2.0);
        }
    }
});
