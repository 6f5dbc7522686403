use crate::config::full_mask;

/// Bit bookkeeping for the neighbourhood `(q-1, q, q+1)` of one site.
///
/// The local index is the three-bit number `s_{q+1} s_q s_{q-1}`, read the
/// same way as the global configuration index, so a global ket such as
/// `|001⟩` on three sites is local state 1 at site 1.
#[derive(Debug, Clone, Copy)]
pub struct SiteMap {
    shifts: [u32; 3],
    keep: u32,
    deposit: [u32; 8],
}

impl SiteMap {
    pub fn new(site: usize, n_sites: usize) -> Self {
        assert!(n_sites >= 3 && site < n_sites);
        let left = ((site + n_sites - 1) % n_sites) as u32;
        let right = ((site + 1) % n_sites) as u32;
        let shifts = [left, site as u32, right];
        let local_mask = (1u32 << left) | (1u32 << site) | (1u32 << right);
        let mut deposit = [0u32; 8];
        for (l, d) in deposit.iter_mut().enumerate() {
            for (bit, s) in shifts.iter().enumerate() {
                if (l >> bit) & 1 == 1 {
                    *d |= 1 << s;
                }
            }
        }
        SiteMap {
            shifts,
            keep: full_mask(n_sites) & !local_mask,
            deposit,
        }
    }

    /// Local three-spin index of configuration `c`.
    #[inline(always)]
    pub fn local(&self, c: u32) -> usize {
        (((c >> self.shifts[2]) & 1) << 2
            | ((c >> self.shifts[1]) & 1) << 1
            | ((c >> self.shifts[0]) & 1)) as usize
    }

    /// `c` with the neighbourhood bits cleared.
    #[inline(always)]
    pub fn rest(&self, c: u32) -> u32 {
        c & self.keep
    }

    #[inline(always)]
    pub fn compose(&self, rest: u32, local: usize) -> u32 {
        rest | self.deposit[local]
    }

    /// Every configuration whose neighbourhood bits are all zero, ascending.
    pub fn rests(&self, n_sites: usize) -> Vec<u32> {
        (0..(1u64 << n_sites) as u32)
            .filter(|c| c & !self.keep == 0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_and_compose_invert() {
        for n in [3, 4, 7, 10] {
            for q in 0..n {
                let m = SiteMap::new(q, n);
                for c in 0..(1u32 << n) {
                    let l = m.local(c);
                    assert_eq!(m.compose(m.rest(c), l), c);
                    let (left, right) = ((q + n - 1) % n, (q + 1) % n);
                    let expect = ((c >> right) & 1) << 2 | ((c >> q) & 1) << 1 | ((c >> left) & 1);
                    assert_eq!(l, expect as usize);
                }
                assert_eq!(m.rests(n).len(), 1 << (n - 3));
            }
        }
    }
}
