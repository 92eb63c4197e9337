//! Small reference matrices used in the docs, tests, and CLI examples.

use crate::spm::Spm;

/// Four voters, three candidates.
pub fn four_voters() -> Spm {
    Spm::new(vec![
        vec![0.1, 0.2, 0.7],
        vec![0.5, 0.2, 0.3],
        vec![0.4, 0.5, 0.1],
        vec![0.8, 0.1, 0.1],
    ])
    .expect("valid matrix")
}

/// Ten voters, three candidates.
pub fn ten_voters() -> Spm {
    let cols = [
        [0.180, 0.035, 0.439, 0.159, 0.350, 0.294, 0.099, 0.102, 0.359, 0.483],
        [0.333, 0.348, 0.211, 0.457, 0.380, 0.696, 0.422, 0.323, 0.456, 0.071],
        [0.487, 0.617, 0.350, 0.384, 0.270, 0.010, 0.479, 0.575, 0.185, 0.446],
    ];
    let rows = (0..10).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    Spm::new(rows).expect("valid matrix")
}

/// Three trials over four categories.
pub fn three_by_four() -> Spm {
    Spm::new(vec![
        vec![0.1, 0.1, 0.1, 0.7],
        vec![0.1, 0.3, 0.3, 0.3],
        vec![0.5, 0.2, 0.1, 0.2],
    ])
    .expect("valid matrix")
}
