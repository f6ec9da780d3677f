//! Essay cleaning, sentence splitting, contraction expansion and chunking.
//!
//! The pipeline is clean → split → pack → expand. Chunk limits are enforced
//! on whitespace tokens before expansion; a chunk that still grows past the
//! post-expansion cap is re-packed so every emitted chunk honours both caps.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::mem;

use crate::{Error, Essay, Result};

const BUILTIN_CONTRACTIONS: &str = include_str!("../data/contractions.v1.tsv");

fn is_kept(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '\'' | '"' | '!' | '.' | '?')
}

/// Keeps ASCII letters, digits, `'`, `"`, `!`, `.` and `?`; every other
/// character becomes a space, runs of spaces collapse and the ends are trimmed.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut gap = false;
    for c in raw.chars() {
        if is_kept(c) {
            if gap && !out.is_empty() {
                out.push(' ');
            }
            gap = false;
            out.push(c);
        } else {
            gap = true;
        }
    }
    out
}

/// A whitespace-tokenized sentence. Tokens are never empty and never contain
/// whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Sentence { tokens: tokens.into_iter().map(Into::into).collect() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits cleaned text at `.` and `?`. Delimiters are dropped and empty
/// fragments discarded; `!` is not a boundary.
pub fn split_sentences(cleaned: &str) -> Vec<Sentence> {
    cleaned.split(['.', '?']).map(|frag| Sentence::new(frag.split_whitespace())).filter(|s| !s.is_empty()).collect()
}

/// The fixed contraction mapping. See `data/contractions.v1.tsv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractionTable {
    words: Vec<(String, Vec<String>)>,
    suffixes: Vec<(String, String)>,
    is_stems: Vec<String>,
}

impl ContractionTable {
    pub const VERSION: u32 = 1;

    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_CONTRACTIONS).expect("bundled contraction table is well-formed")
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut table = ContractionTable { words: Vec::new(), suffixes: Vec::new(), is_stems: Vec::new() };
        for (lineno, line) in src.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason| Error::InvalidContractionTable { line: lineno + 1, reason };
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                ["word", pattern, replacement] => {
                    let words: Vec<String> = replacement.split_whitespace().map(ToString::to_string).collect();
                    if words.is_empty() || words.len() > 2 {
                        return Err(bad("replacement must be one or two words"));
                    }
                    table.words.push((pattern.to_ascii_lowercase(), words));
                }
                ["suffix", suffix, word] => {
                    if suffix.is_empty() || word.split_whitespace().count() != 1 {
                        return Err(bad("suffix rules need a suffix and a single expansion word"));
                    }
                    table.suffixes.push((suffix.to_ascii_lowercase(), word.to_string()));
                }
                ["is-stem", stem] => table.is_stems.push(stem.to_ascii_lowercase()),
                _ => return Err(bad("unrecognised entry")),
            }
        }
        Ok(table)
    }

    /// Expands one token into one or two tokens. Leading and trailing `"` and
    /// `!` characters are kept on the outermost output tokens.
    pub fn expand_token(&self, token: &str) -> Vec<String> {
        let is_affix = |c: char| c == '"' || c == '!';
        let body_start = token.find(|c| !is_affix(c)).unwrap_or(token.len());
        let body_end = token.rfind(|c| !is_affix(c)).map_or(body_start, |i| i + 1);
        let (prefix, body, suffix) = (&token[..body_start], &token[body_start..body_end], &token[body_end..]);
        if body.is_empty() {
            return alloc::vec![token.to_string()];
        }
        let Some(mut words) = self.expand_body(body) else {
            return alloc::vec![token.to_string()];
        };
        if !prefix.is_empty() {
            words[0].insert_str(0, prefix);
        }
        if !suffix.is_empty() {
            words.last_mut().expect("non-empty expansion").push_str(suffix);
        }
        words
    }

    fn expand_body(&self, body: &str) -> Option<Vec<String>> {
        let lower = body.to_ascii_lowercase();
        if let Some((_, replacement)) = self.words.iter().find(|(w, _)| *w == lower) {
            let mut out = replacement.clone();
            if body.starts_with(|c: char| c.is_ascii_uppercase()) {
                capitalize(&mut out[0]);
            }
            return Some(out);
        }
        if let Some(stem_lower) = lower.strip_suffix("'s") {
            if self.is_stems.iter().any(|s| s == stem_lower) {
                return Some(alloc::vec![body[..stem_lower.len()].to_string(), "is".to_string()]);
            }
        }
        for (suf, word) in &self.suffixes {
            if lower.len() > suf.len() && lower.ends_with(suf.as_str()) {
                let stem = &body[..body.len() - suf.len()];
                if stem.chars().any(|c| c.is_ascii_alphanumeric()) {
                    return Some(alloc::vec![stem.to_string(), word.clone()]);
                }
            }
        }
        None
    }

    /// Expands every token of a sentence and reports how many tokens were
    /// split in two.
    pub fn expand_sentence(&self, sentence: &Sentence) -> (Sentence, usize) {
        let mut tokens = Vec::with_capacity(sentence.len());
        let mut split = 0;
        for t in &sentence.tokens {
            let words = self.expand_token(t);
            if words.len() > 1 {
                split += 1;
            }
            tokens.extend(words);
        }
        (Sentence { tokens }, split)
    }
}

fn capitalize(word: &mut str) {
    if let Some(first) = word.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
}

/// Expands contractions using the bundled table.
pub fn expand_contractions(sentence: &Sentence) -> Sentence {
    ContractionTable::builtin().expand_sentence(sentence).0
}

/// How sentences are grouped into chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PackMode {
    /// Greedy packing of whole sentences; overlong sentences are hard-split.
    #[default]
    Sentence,
    /// Fixed windows over the token stream, ignoring sentence boundaries.
    Window,
}

/// Chunk size limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPlan {
    pub max_pre_expansion_tokens: usize,
    pub max_post_expansion_tokens: usize,
    pub hard_token_cap: usize,
    pub pack: PackMode,
}

impl Default for ChunkPlan {
    fn default() -> Self {
        ChunkPlan {
            max_pre_expansion_tokens: 200,
            max_post_expansion_tokens: 250,
            hard_token_cap: 512,
            pack: PackMode::Sentence,
        }
    }
}

impl ChunkPlan {
    /// A plan with the given pre-expansion limit; the post-expansion cap keeps
    /// the default 5:4 ratio.
    pub fn with_max_tokens(max_pre_expansion_tokens: usize) -> Self {
        let post = (max_pre_expansion_tokens + max_pre_expansion_tokens / 4).max(2);
        ChunkPlan { max_pre_expansion_tokens, max_post_expansion_tokens: post, ..ChunkPlan::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_pre_expansion_tokens == 0 {
            return Err(Error::InvalidPlan("max_pre_expansion_tokens must be positive"));
        }
        if self.max_post_expansion_tokens < self.max_pre_expansion_tokens {
            return Err(Error::InvalidPlan("post-expansion cap is below the pre-expansion limit"));
        }
        if self.max_post_expansion_tokens < 2 {
            return Err(Error::InvalidPlan("post-expansion cap must fit one expanded token"));
        }
        if self.max_post_expansion_tokens > self.hard_token_cap {
            return Err(Error::InvalidPlan("post-expansion cap exceeds the hard token cap"));
        }
        Ok(())
    }
}

/// A sub-document of an essay. Sentences hold post-expansion tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub author_id: String,
    pub chunk_index: u32,
    pub sentences: Vec<Sentence>,
    /// Whitespace tokens in this chunk before contraction expansion.
    pub pre_expansion_tokens: usize,
}

impl Chunk {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

// One source token and its expansion (one or two words).
type Group = Vec<String>;
// A sentence, or a fragment of one after a hard split.
type Piece = Vec<Group>;

fn pre_weight(_: &Group) -> usize {
    1
}

fn post_weight(g: &Group) -> usize {
    g.len()
}

fn piece_weight(p: &Piece, weight: fn(&Group) -> usize) -> usize {
    p.iter().map(weight).sum()
}

fn pack_sentences(pieces: Vec<Piece>, limit: usize, weight: fn(&Group) -> usize) -> Vec<Vec<Piece>> {
    let mut chunks = Vec::new();
    let mut current: Vec<Piece> = Vec::new();
    let mut current_w = 0;
    for piece in pieces {
        let w = piece_weight(&piece, weight);
        if w > limit {
            if !current.is_empty() {
                chunks.push(mem::take(&mut current));
            }
            let mut frag: Piece = Vec::new();
            let mut frag_w = 0;
            for g in piece {
                let gw = weight(&g);
                if frag_w + gw > limit && !frag.is_empty() {
                    chunks.push(alloc::vec![mem::take(&mut frag)]);
                    frag_w = 0;
                }
                frag_w += gw;
                frag.push(g);
            }
            current.push(frag);
            current_w = frag_w;
        } else if current_w + w > limit {
            chunks.push(mem::replace(&mut current, alloc::vec![piece]));
            current_w = w;
        } else {
            current.push(piece);
            current_w += w;
        }
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

fn pack_windows(pieces: Vec<Piece>, limit: usize) -> Vec<Vec<Piece>> {
    let mut chunks = Vec::new();
    let mut current: Vec<Piece> = Vec::new();
    let mut current_w = 0;
    for piece in pieces {
        let mut frag: Piece = Vec::new();
        for g in piece {
            if current_w == limit {
                if !frag.is_empty() {
                    current.push(mem::take(&mut frag));
                }
                chunks.push(mem::take(&mut current));
                current_w = 0;
            }
            frag.push(g);
            current_w += 1;
        }
        if !frag.is_empty() {
            current.push(frag);
        }
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

/// Turns essays into chunks under a fixed plan and contraction table.
#[derive(Debug, Clone)]
pub struct Chunker {
    plan: ChunkPlan,
    table: ContractionTable,
}

impl Chunker {
    pub fn new(plan: ChunkPlan) -> Result<Self> {
        Self::with_table(plan, ContractionTable::builtin())
    }

    pub fn with_table(plan: ChunkPlan, table: ContractionTable) -> Result<Self> {
        plan.validate()?;
        Ok(Chunker { plan, table })
    }

    pub fn plan(&self) -> &ChunkPlan {
        &self.plan
    }

    pub fn chunk(&self, author_id: &str, text: &str) -> Result<Vec<Chunk>> {
        let sentences = split_sentences(&clean_text(text));
        if sentences.is_empty() {
            return Err(Error::EmptyEssay { author_id: author_id.to_string() });
        }
        let pieces: Vec<Piece> =
            sentences.iter().map(|s| s.tokens.iter().map(|t| self.table.expand_token(t)).collect()).collect();
        let packed = match self.plan.pack {
            PackMode::Sentence => pack_sentences(pieces, self.plan.max_pre_expansion_tokens, pre_weight),
            PackMode::Window => pack_windows(pieces, self.plan.max_pre_expansion_tokens),
        };

        let cap = self.plan.max_post_expansion_tokens;
        let mut chunks = Vec::with_capacity(packed.len());
        for chunk in packed {
            let post: usize = chunk.iter().map(|p| piece_weight(p, post_weight)).sum();
            let parts = if post > cap { pack_sentences(chunk, cap, post_weight) } else { alloc::vec![chunk] };
            for part in parts {
                let pre_expansion_tokens = part.iter().map(Vec::len).sum();
                let sentences =
                    part.into_iter().map(|p| Sentence { tokens: p.into_iter().flatten().collect() }).collect();
                chunks.push(Chunk {
                    author_id: author_id.to_string(),
                    chunk_index: chunks.len() as u32,
                    sentences,
                    pre_expansion_tokens,
                });
            }
        }
        Ok(chunks)
    }
}

/// Chunks one essay with the bundled contraction table.
pub fn chunk_essay(essay: &Essay, plan: &ChunkPlan) -> Result<Vec<Chunk>> {
    Chunker::new(*plan)?.chunk(&essay.author_id, &essay.text)
}
