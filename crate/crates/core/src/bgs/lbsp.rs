//! Local binary similarity patterns.
//!
//! Each channel gets a 16-bit string over a 5×5 neighborhood. Bit `k` is
//! set when neighbor `k` differs from the center intensity by more than
//! the threshold, so 0 means "locally uniform".
//!
//! ```text
//!  .  .  .  .  .        bit order:
//!  .  x  x  x  .         4  .  8  .  5
//!  .  x  c  x  .         .  0 12  1  .
//!  .  x  x  x  .        11 15  c 14 10
//!  .  .  .  .  .         .  3 13  2  .
//!                        7  .  9  .  6
//! ```

use crate::frame_io::Frame;

/// Neighbor offsets, indexed by bit position.
pub const OFFSETS: [(isize, isize); 16] = [
    (-1, -1),
    (1, -1),
    (1, 1),
    (-1, 1),
    (-2, -2),
    (2, -2),
    (2, 2),
    (-2, 2),
    (0, -2),
    (0, 2),
    (2, 0),
    (-2, 0),
    (0, -1),
    (0, 1),
    (1, 0),
    (-1, 0),
];

/// Threshold rule for a single comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbspThreshold {
    /// Fraction of the center intensity.
    pub relative: f32,
    /// Lower limit on the absolute threshold.
    pub minimum: u8,
}

impl LbspThreshold {
    #[inline]
    fn for_center(&self, center: u8) -> u8 {
        let t = (center as f32 * self.relative) as u32;
        t.max(self.minimum as u32).min(255) as u8
    }
}

/// Hamming distance between two 48-bit descriptors.
#[inline]
pub fn hamming(a: [u16; 3], b: [u16; 3]) -> u32 {
    (a[0] ^ b[0]).count_ones() + (a[1] ^ b[1]).count_ones() + (a[2] ^ b[2]).count_ones()
}

/// Packs a descriptor into the low 48 bits of a word, channel 0 lowest.
#[inline]
pub fn pack(d: [u16; 3]) -> u64 {
    d[0] as u64 | (d[1] as u64) << 16 | (d[2] as u64) << 32
}

#[inline]
pub fn unpack(d: u64) -> [u16; 3] {
    [d as u16, (d >> 16) as u16, (d >> 32) as u16]
}

/// Descriptor of one pixel with out-of-bounds neighbors clamped to the border.
pub fn descriptor_at(frame: &Frame, x: usize, y: usize, thr: LbspThreshold) -> [u16; 3] {
    let (w, h) = frame.dims();
    let c = frame.pixel(x, y);
    let mut out = [0u16; 3];
    for (bit, &(dx, dy)) in OFFSETS.iter().enumerate() {
        let nx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
        let ny = (y as isize + dy).clamp(0, h as isize - 1) as usize;
        let n = frame.pixel(nx, ny);
        for ch in 0..3 {
            if n[ch].abs_diff(c[ch]) > thr.for_center(c[ch]) {
                out[ch] |= 1 << bit;
            }
        }
    }
    out
}

/// Descriptors for every pixel, row-major. Equivalent to calling
/// [`descriptor_at`] everywhere.
pub fn compute_descriptors(frame: &Frame, thr: LbspThreshold) -> Vec<[u16; 3]> {
    let (w, h) = frame.dims();
    // Replicate-pad by two pixels so interior offsets need no clamping.
    let pw = w + 4;
    let ph = h + 4;
    let mut padded = vec![[0u8; 3]; pw * ph];
    for py in 0..ph {
        let y = py.saturating_sub(2).min(h - 1);
        for px in 0..pw {
            let x = px.saturating_sub(2).min(w - 1);
            padded[py * pw + px] = frame.pixel(x, y);
        }
    }
    let deltas: [isize; 16] = OFFSETS.map(|(dx, dy)| dy * pw as isize + dx);
    let mut table = [0u8; 256];
    for (c, t) in table.iter_mut().enumerate() {
        *t = thr.for_center(c as u8);
    }

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let ci = ((y + 2) * pw + x + 2) as isize;
            let c = padded[ci as usize];
            let t = [table[c[0] as usize], table[c[1] as usize], table[c[2] as usize]];
            let mut d = [0u16; 3];
            for (bit, &delta) in deltas.iter().enumerate() {
                let n = padded[(ci + delta) as usize];
                d[0] |= ((n[0].abs_diff(c[0]) > t[0]) as u16) << bit;
                d[1] |= ((n[1].abs_diff(c[1]) > t[1]) as u16) << bit;
                d[2] |= ((n[2].abs_diff(c[2]) > t[2]) as u16) << bit;
            }
            out.push(d);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const THR: LbspThreshold = LbspThreshold {
        relative: 0.333,
        minimum: 3,
    };

    #[test]
    fn uniform_patch_is_zero() {
        let f = Frame::filled(7, 5, [90, 10, 200]).unwrap();
        assert!(compute_descriptors(&f, THR).iter().all(|d| *d == [0; 3]));
    }

    #[test]
    fn single_bright_neighbor_sets_one_bit() {
        let mut f = Frame::filled(5, 5, [30; 3]).unwrap();
        // offset (1, 0) relative to the center is bit 14
        f.set_pixel(3, 2, [200, 30, 30]);
        let d = descriptor_at(&f, 2, 2, THR);
        assert_eq!(d, [1 << 14, 0, 0]);
    }

    #[test]
    fn fast_path_matches_reference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let w = rng.random_range(1..12);
            let h = rng.random_range(1..12);
            let data = (0..w * h * 3).map(|_| rng.random::<u8>()).collect();
            let f = Frame::new(w, h, data).unwrap();
            let fast = compute_descriptors(&f, THR);
            for y in 0..h {
                for x in 0..w {
                    assert_eq!(fast[y * w + x], descriptor_at(&f, x, y, THR));
                }
            }
        }
    }

    #[test]
    fn hamming_counts_bits() {
        assert_eq!(hamming([0; 3], [0; 3]), 0);
        assert_eq!(hamming([0xFFFF; 3], [0; 3]), 48);
        assert_eq!(hamming([1, 2, 4], [0, 0, 0]), 3);
    }
}
