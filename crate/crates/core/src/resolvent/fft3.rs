use num_complex::Complex64;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

/// Smallest `2^a 3^b 5^c` not below `n`.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Planned unnormalised 3D DFT on `m^3` arrays stored with the last index
/// fastest.
#[derive(Clone)]
pub struct Fft3 {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("m", &self.m).finish()
    }
}

impl Fft3 {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Fft3 { m, forward, inverse, scratch_len }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Transforms `data` in place; `tmp` is workspace of the same length.
    pub fn process(&self, data: &mut [Complex64], tmp: &mut [Complex64], direction: FftDirection) {
        let m = self.m;
        assert_eq!(data.len(), m * m * m);
        assert_eq!(tmp.len(), data.len());
        let fft = match direction {
            FftDirection::Forward => &self.forward,
            FftDirection::Inverse => &self.inverse,
        };
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        // Transform the contiguous axis, then rotate the axes (i, j, k) -> (k, i, j)
        // so the next axis becomes contiguous. Three rotations restore the layout.
        fft.process_with_scratch(data, &mut scratch);
        rotate(data, tmp, m);
        fft.process_with_scratch(tmp, &mut scratch);
        rotate(tmp, data, m);
        fft.process_with_scratch(data, &mut scratch);
        rotate(data, tmp, m);
        data.copy_from_slice(tmp);
    }
}

fn rotate(src: &[Complex64], dst: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in 0..m {
            let row = &src[(i * m + j) * m..(i * m + j + 1) * m];
            for (k, v) in row.iter().enumerate() {
                dst[(k * m + i) * m + j] = *v;
            }
        }
    }
}

/// Unnormalised 3D DFT of an `m^3` array stored with the last index fastest.
pub fn fft3_in_place(data: &mut [Complex64], m: usize, direction: FftDirection) {
    let mut tmp = vec![Complex64::new(0.0, 0.0); data.len()];
    Fft3::new(m).process(data, &mut tmp, direction);
}
