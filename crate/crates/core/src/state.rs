//! Explicit states and their bit-packed form.

/// Value code of a slot that holds no value.
pub const UNDEF: u8 = 0;

/// A total valuation of the ground slots, one value code per slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub Vec<u8>);

impl State {
    pub fn get(&self, slot: usize) -> u8 {
        self.0[slot]
    }

    pub fn set(&mut self, slot: usize, v: u8) {
        self.0[slot] = v;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A state packed into 64-bit words according to a [`Layout`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PackedState(pub Box<[u64]>);

impl PackedState {
    pub fn bytes(&self) -> usize {
        self.0.len() * 8
    }
}

/// Bit positions of every slot. Slots never straddle a word boundary.
#[derive(Clone, Debug)]
pub struct Layout {
    word: Vec<u32>,
    shift: Vec<u32>,
    width: Vec<u32>,
    words: usize,
}

impl Layout {
    /// Builds a layout from the largest value code of each slot.
    pub fn new(max_codes: &[u8]) -> Layout {
        let mut word = Vec::with_capacity(max_codes.len());
        let mut shift = Vec::with_capacity(max_codes.len());
        let mut width = Vec::with_capacity(max_codes.len());
        let (mut w, mut s) = (0u32, 0u32);
        for &m in max_codes {
            let bits = (8 - m.leading_zeros()).max(1);
            if s + bits > 64 {
                w += 1;
                s = 0;
            }
            word.push(w);
            shift.push(s);
            width.push(bits);
            s += bits;
        }
        let words = if max_codes.is_empty() {
            0
        } else {
            w as usize + 1
        };
        Layout {
            word,
            shift,
            width,
            words,
        }
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn pack(&self, s: &State) -> PackedState {
        let mut out = vec![0u64; self.words];
        for (k, &v) in s.0.iter().enumerate() {
            out[self.word[k] as usize] |= (v as u64) << self.shift[k];
        }
        PackedState(out.into_boxed_slice())
    }

    pub fn unpack(&self, p: &PackedState) -> State {
        let mut out = Vec::with_capacity(self.word.len());
        for k in 0..self.word.len() {
            let w = p.0[self.word[k] as usize];
            let mask = (1u64 << self.width[k]) - 1;
            out.push(((w >> self.shift[k]) & mask) as u8);
        }
        State(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_roundtrip_across_words() {
        let max: Vec<u8> = (0..70).map(|k| (k % 9) as u8 + 1).collect();
        let layout = Layout::new(&max);
        assert!(layout.words() > 1);
        let s = State(
            max.iter()
                .enumerate()
                .map(|(k, m)| (k as u8) % (m + 1))
                .collect(),
        );
        assert_eq!(layout.unpack(&layout.pack(&s)), s);
    }

    #[test]
    fn empty_layout() {
        let layout = Layout::new(&[]);
        let s = State(vec![]);
        assert_eq!(layout.unpack(&layout.pack(&s)), s);
    }
}
