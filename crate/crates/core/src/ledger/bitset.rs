/// Growable bitset over dense gradient indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DenseSet {
    words: Vec<u64>,
}

impl DenseSet {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.words.get(idx / 64).is_some_and(|w| w & (1u64 << (idx % 64)) != 0)
    }

    /// Returns false if `idx` was already present.
    pub fn insert(&mut self, idx: usize) -> bool {
        let w = idx / 64;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let mask = 1u64 << (idx % 64);
        let fresh = self.words[w] & mask == 0;
        self.words[w] |= mask;
        fresh
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// `|self △ other|` without materializing the difference.
    pub fn symmetric_difference_len(&self, other: &DenseSet) -> usize {
        let (long, short) = if self.words.len() >= other.words.len() { (self, other) } else { (other, self) };
        long.words
            .iter()
            .enumerate()
            .map(|(i, &w)| (w ^ short.words.get(i).copied().unwrap_or(0)).count_ones() as usize)
            .sum()
    }

    /// `self ∪= a △ b`
    pub fn union_symmetric_difference(&mut self, a: &DenseSet, b: &DenseSet) {
        let len = a.words.len().max(b.words.len());
        if self.words.len() < len {
            self.words.resize(len, 0);
        }
        for i in 0..len {
            let x = a.words.get(i).copied().unwrap_or(0) ^ b.words.get(i).copied().unwrap_or(0);
            self.words[i] |= x;
        }
    }

    /// Members of `self \ other`, ascending.
    pub fn difference<'a>(&'a self, other: &'a DenseSet) -> impl Iterator<Item = usize> + 'a {
        self.words.iter().enumerate().flat_map(move |(i, &w)| {
            let mut bits = w & !other.words.get(i).copied().unwrap_or(0);
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i * 64 + tz)
            })
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        static EMPTY: DenseSet = DenseSet { words: Vec::new() };
        self.difference(&EMPTY)
    }

    /// Members of `self △ other`, ascending.
    pub fn symmetric_difference<'a>(&'a self, other: &'a DenseSet) -> impl Iterator<Item = usize> + 'a {
        let len = self.words.len().max(other.words.len());
        (0..len).flat_map(move |i| {
            let mut bits = self.words.get(i).copied().unwrap_or(0) ^ other.words.get(i).copied().unwrap_or(0);
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i * 64 + tz)
            })
        })
    }
}
