//! Character and tag vocabularies.
//!
//! One shared symbol table covers source and target characters (the
//! embedding table is shared between the two sides); separate membership
//! sets track which symbols belong to the source alphabet and which to the
//! target alphabet, so that symbols unseen on a given side map to UNK even
//! when the other side knows them. Both alphabets are built from training
//! data only.

use std::collections::{BTreeSet, HashMap};

pub type SymId = usize;
pub type TagId = usize;

/// Decoder start symbol (input side only, never emitted).
pub const BOS: SymId = 0;
/// End-of-word symbol closing every target sequence.
pub const EOS: SymId = 1;
pub const UNK: SymId = 2;
/// Higher-level boundary: morpheme separator or inter-word space.
pub const SEG: SymId = 3;

pub const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<unk>", "<seg>"];

/// Reserved row of [`TagVocab`] for tags unseen in training.
pub const UNK_TAG: TagId = 0;

/// Ordered symbol table with a dense two-way index.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn with_reserved(reserved: &[&str]) -> Self {
        let mut v = Self { symbols: Vec::new(), index: HashMap::new() };
        for r in reserved {
            v.insert(r);
        }
        v
    }

    pub fn insert(&mut self, symbol: &str) -> usize {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len();
        self.symbols.push(symbol.to_string());
        self.index.insert(symbol.to_string(), id);
        id
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// FNV-1a fingerprint of the symbol list, for checkpoint validation.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for s in &self.symbols {
            for b in s.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= 0x1e;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// POS tag table; row 0 is the reserved unknown-tag row.
#[derive(Debug, Clone, PartialEq)]
pub struct TagVocab {
    inner: Vocabulary,
}

impl TagVocab {
    pub fn new() -> Self {
        Self { inner: Vocabulary::with_reserved(&["<unk>"]) }
    }

    pub fn insert(&mut self, tag: &str) -> TagId {
        self.inner.insert(tag)
    }

    pub fn id(&self, tag: &str) -> Option<TagId> {
        self.inner.id(tag)
    }

    /// Maps a tag to its row, falling back to the unknown-tag row.
    pub fn id_or_unk(&self, tag: &str) -> TagId {
        self.inner.id(tag).unwrap_or(UNK_TAG)
    }

    pub fn symbol(&self, id: TagId) -> &str {
        self.inner.symbol(id)
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn symbols(&self) -> &[String] {
        self.inner.symbols()
    }

    pub fn fingerprint(&self) -> u64 {
        self.inner.fingerprint()
    }
}

impl Default for TagVocab {
    fn default() -> Self {
        Self::new()
    }
}

/// Separator joining the components of a composite tag annotation.
pub const TAG_SEPARATOR: char = '+';

/// All vocabularies of one trained system.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabularies {
    /// Shared symbol table: reserved symbols, then the union of source and
    /// target characters ordered by frequency (descending) then symbol.
    pub chars: Vocabulary,
    /// Which shared symbols belong to the source alphabet Σ.
    source_member: Vec<bool>,
    /// Output alphabet Σₙ in output-layer order: EOS, UNK, SEG, then the
    /// target characters in shared-table order.
    output_syms: Vec<SymId>,
    /// Shared id → output-layer index.
    output_index: Vec<Option<usize>>,
    pub tags: TagVocab,
    /// The character rendered for SEG on output (space by default).
    pub boundary: char,
}

impl Vocabularies {
    /// Builds all vocabularies from training tokens
    /// `(source, target, optional composite tag)` grouped in segments.
    pub fn build<'a, I, S>(segments: I) -> Self
    where
        I: Iterator<Item = S>,
        S: AsRef<[(String, String, Option<String>)]> + 'a,
    {
        Self::build_with_boundary(segments, ' ')
    }

    pub fn build_with_boundary<'a, I, S>(segments: I, boundary: char) -> Self
    where
        I: Iterator<Item = S>,
        S: AsRef<[(String, String, Option<String>)]> + 'a,
    {
        let mut src_counts: HashMap<char, u64> = HashMap::new();
        let mut tgt_counts: HashMap<char, u64> = HashMap::new();
        let mut tag_set: BTreeSet<String> = BTreeSet::new();
        for seg in segments {
            for (source, target, pos) in seg.as_ref() {
                for c in source.chars() {
                    *src_counts.entry(c).or_insert(0) += 1;
                }
                for c in target.chars() {
                    if c != boundary {
                        *tgt_counts.entry(c).or_insert(0) += 1;
                    }
                }
                if let Some(p) = pos {
                    for t in p.split(TAG_SEPARATOR).filter(|t| !t.is_empty()) {
                        tag_set.insert(t.to_string());
                    }
                }
            }
        }

        let mut union: Vec<(char, u64)> = HashMap::<char, u64>::new()
            .tap(|m| {
                for (c, n) in &src_counts {
                    *m.entry(*c).or_insert(0) += n;
                }
                for (c, n) in &tgt_counts {
                    *m.entry(*c).or_insert(0) += n;
                }
            })
            .into_iter()
            .collect();
        union.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut chars = Vocabulary::with_reserved(&RESERVED);
        for (c, _) in &union {
            chars.insert(&c.to_string());
        }

        let mut source_member = vec![false; chars.len()];
        for id in [BOS, EOS, UNK, SEG] {
            source_member[id] = true;
        }
        for c in src_counts.keys() {
            source_member[chars.id(&c.to_string()).expect("inserted above")] = true;
        }

        let mut output_syms = vec![EOS, UNK, SEG];
        for (c, _) in &union {
            if tgt_counts.contains_key(c) {
                output_syms.push(chars.id(&c.to_string()).expect("inserted above"));
            }
        }
        let mut output_index = vec![None; chars.len()];
        for (i, &sym) in output_syms.iter().enumerate() {
            output_index[sym] = Some(i);
        }

        let mut tags = TagVocab::new();
        for t in tag_set {
            tags.insert(&t);
        }

        Self { chars, source_member, output_syms, output_index, tags, boundary }
    }

    /// Source-side mapping: characters outside Σ become UNK.
    pub fn map_source_str(&self, word: &str) -> Vec<SymId> {
        word.chars()
            .map(|c| match self.chars.id(&c.to_string()) {
                Some(id) if self.source_member[id] => id,
                _ => UNK,
            })
            .collect()
    }

    /// Target-side mapping: the boundary character becomes SEG, characters
    /// outside Σₙ become UNK.
    pub fn map_target_str(&self, target: &str) -> Vec<SymId> {
        target
            .chars()
            .map(|c| {
                if c == self.boundary {
                    return SEG;
                }
                match self.chars.id(&c.to_string()) {
                    Some(id) if self.output_index[id].is_some() => id,
                    _ => UNK,
                }
            })
            .collect()
    }

    pub fn map_tags(&self, composite: &str) -> Vec<TagId> {
        composite
            .split(TAG_SEPARATOR)
            .filter(|t| !t.is_empty())
            .map(|t| {
                let id = self.tags.id_or_unk(t);
                if id == UNK_TAG && self.tags.id(t).is_none() {
                    log::debug!("unknown tag `{t}` mapped to the unknown-tag row");
                }
                id
            })
            .collect()
    }

    /// Output-layer order of Σₙ.
    pub fn output_syms(&self) -> &[SymId] {
        &self.output_syms
    }

    pub fn output_len(&self) -> usize {
        self.output_syms.len()
    }

    /// Output-layer index of a shared symbol, if it is in Σₙ.
    pub fn output_index(&self, sym: SymId) -> Option<usize> {
        self.output_index.get(sym).copied().flatten()
    }

    pub fn is_source_member(&self, sym: SymId) -> bool {
        self.source_member.get(sym).copied().unwrap_or(false)
    }

    /// Renders decoded symbols back to text: SEG becomes the boundary
    /// character, reserved symbols print their markers.
    pub fn render(&self, syms: &[SymId]) -> String {
        let mut out = String::new();
        for &s in syms {
            match s {
                SEG => out.push(self.boundary),
                BOS | EOS => out.push_str(self.chars.symbol(s)),
                _ => out.push_str(self.chars.symbol(s)),
            }
        }
        out
    }

    /// Renders one higher-level segment (no boundary symbols inside).
    pub fn render_segment(&self, syms: &[SymId]) -> String {
        syms.iter().map(|&s| self.chars.symbol(s)).collect()
    }
}

trait Tap: Sized {
    fn tap(self, f: impl FnOnce(&mut Self)) -> Self;
}

impl<T> Tap for T {
    fn tap(mut self, f: impl FnOnce(&mut Self)) -> Self {
        f(&mut self);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vocabularies {
        let segs: Vec<Vec<(String, String, Option<String>)>> = vec![vec![
            ("ab".into(), "ba".into(), Some("N".into())),
            ("bz".into(), "b a".into(), Some("N+DET".into())),
        ]];
        Vocabularies::build(segs.iter())
    }

    #[test]
    fn reserved_symbols_present_once() {
        let v = toy();
        assert_eq!(v.chars.symbol(BOS), "<bos>");
        assert_eq!(v.chars.symbol(EOS), "<eos>");
        assert_eq!(v.chars.symbol(UNK), "<unk>");
        assert_eq!(v.chars.symbol(SEG), "<seg>");
        assert!(v.chars.id("a").is_some());
        assert!(v.chars.id("z").is_some());
    }

    #[test]
    fn rebuilding_is_deterministic() {
        let a = toy();
        let b = toy();
        assert_eq!(a, b);
        assert_eq!(a.chars.fingerprint(), b.chars.fingerprint());
    }

    #[test]
    fn unseen_symbols_map_to_unk_per_side() {
        let v = toy();
        // 'q' never seen: UNK on both sides
        assert_eq!(v.map_source_str("q"), vec![UNK]);
        assert_eq!(v.map_target_str("q"), vec![UNK]);
        // 'z' seen only in a source word: target side maps it to UNK
        let z = v.chars.id("z").unwrap();
        assert_eq!(v.map_source_str("z"), vec![z]);
        assert_eq!(v.map_target_str("z"), vec![UNK]);
        assert!(v.output_index(z).is_none());
    }

    #[test]
    fn boundary_maps_to_seg_and_renders_back() {
        let v = toy();
        let ids = v.map_target_str("b a");
        assert_eq!(ids[1], SEG);
        assert_eq!(v.render(&ids), "b a");
    }

    #[test]
    fn composite_tags_split_on_plus() {
        let v = toy();
        let ids = v.map_tags("N+DET");
        assert_eq!(ids.len(), 2);
        assert_ne!(ids[0], ids[1]);
        assert_ne!(ids[0], UNK_TAG);
        // unseen tag maps to the reserved row
        assert_eq!(v.map_tags("XYZ"), vec![UNK_TAG]);
    }

    #[test]
    fn output_layer_covers_target_alphabet_only() {
        let v = toy();
        assert_eq!(v.output_syms()[0], EOS);
        assert_eq!(v.output_syms()[1], UNK);
        assert_eq!(v.output_syms()[2], SEG);
        // 'b' and 'a' are target chars; 'z' is not
        for c in ["a", "b"] {
            assert!(v.output_index(v.chars.id(c).unwrap()).is_some());
        }
        assert!(v.output_index(v.chars.id("z").unwrap()).is_none());
    }
}
