//! BPE tokenizer over unit sequences.
//!
//! Token id layout: fixed specials first, then one tag per language, then
//! the base alphabet of unit ids seen in training, then merge tokens in the
//! order they were learned.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Language, TokenSequence, UnitSequence};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const MASK: u32 = 4;
const FIXED_SPECIALS: u32 = 5;

/// Trained BPE vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct BpeVocab {
    /// Unit ids seen in training, sorted ascending. Token id of
    /// `base_alphabet[i]` is `alphabet_start + i`.
    base_alphabet: Vec<u32>,
    /// Merge rules (left token, right token) in learned order. The new token
    /// id of `merges[j]` is `alphabet_start + base_alphabet.len() + j`.
    merges: Vec<(u32, u32)>,
    vocab_size: usize,
    languages: Vec<Language>,
    unit_to_token: HashMap<u32, u32>,
}

impl BpeVocab {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn languages(&self) -> &[Language] {
        &self.languages
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn base_alphabet(&self) -> &[u32] {
        &self.base_alphabet
    }

    /// First token id that is not a special (PAD/UNK/BOS/EOS/MASK/lang tags).
    pub fn special_bound(&self) -> u32 {
        FIXED_SPECIALS + self.languages.len() as u32
    }

    fn alphabet_start(&self) -> u32 {
        self.special_bound()
    }

    fn merge_start(&self) -> u32 {
        self.alphabet_start() + self.base_alphabet.len() as u32
    }

    /// Total number of distinct token ids actually in use.
    pub fn used_tokens(&self) -> usize {
        self.merge_start() as usize + self.merges.len()
    }

    pub fn is_special(&self, token: u32) -> bool {
        token < self.special_bound()
    }

    pub fn lang_tag(&self, language: &Language) -> Result<u32> {
        self.languages
            .iter()
            .position(|l| l == language)
            .map(|i| FIXED_SPECIALS + i as u32)
            .ok_or_else(|| Error::Input(format!("unknown language {language}")))
    }

    /// Greedy BPE encode: map units to alphabet tokens (UNK for unseen unit
    /// ids), then apply merges in learned order.
    pub fn encode(&self, s: &UnitSequence) -> TokenSequence {
        let mut tokens: Vec<u32> = s
            .units
            .iter()
            .map(|u| self.unit_to_token.get(u).copied().unwrap_or(UNK))
            .collect();
        for (j, &(a, b)) in self.merges.iter().enumerate() {
            let new_id = self.merge_start() + j as u32;
            tokens = apply_merge(&tokens, a, b, new_id);
        }
        TokenSequence::new(tokens, s.language.clone())
    }

    /// Expand merge tokens and map alphabet tokens back to unit ids.
    /// Special tokens (including UNK) decode to nothing.
    pub fn decode(&self, t: &TokenSequence) -> Result<UnitSequence> {
        let mut units = Vec::with_capacity(t.tokens.len());
        for &tok in &t.tokens {
            if tok as usize >= self.used_tokens() {
                return Err(Error::TokenOutOfRange {
                    token: tok,
                    vocab: self.used_tokens(),
                });
            }
            self.expand_into(tok, &mut units);
        }
        Ok(UnitSequence::new(units, t.language.clone()))
    }

    fn expand_into(&self, token: u32, out: &mut Vec<u32>) {
        if token < self.special_bound() {
            return;
        }
        if token < self.merge_start() {
            out.push(self.base_alphabet[(token - self.alphabet_start()) as usize]);
            return;
        }
        let mut stack = vec![token];
        let mut expanded = Vec::new();
        while let Some(tok) = stack.pop() {
            if tok >= self.merge_start() {
                let (a, b) = self.merges[(tok - self.merge_start()) as usize];
                stack.push(b);
                stack.push(a);
            } else if tok >= self.alphabet_start() {
                // Left child was pushed last, so pops emit left-to-right.
                expanded.push(self.base_alphabet[(tok - self.alphabet_start()) as usize]);
            }
        }
        out.extend(expanded);
    }
}

fn apply_merge(tokens: &[u32], a: u32, b: u32, new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() && tokens[i] == a && tokens[i + 1] == b {
            out.push(new_id);
            i += 2;
        } else {
            out.push(tokens[i]);
            i += 1;
        }
    }
    out
}

/// Train a BPE vocabulary on the union of the languages' unit corpora.
///
/// Greedy highest-frequency pair merges until `vocab_size` is reached or no
/// pair occurs at least twice; ties break toward the lexicographically
/// smaller pair. Fully deterministic.
pub fn train_bpe(
    corpus: &[UnitSequence],
    languages: &[Language],
    vocab_size: usize,
) -> Result<BpeVocab> {
    if corpus.is_empty() {
        return Err(Error::Input("BPE training corpus is empty".into()));
    }
    if languages.is_empty() {
        return Err(Error::Input("at least one language tag required".into()));
    }
    let mut alphabet: Vec<u32> = corpus.iter().flat_map(|s| s.units.iter().copied()).collect();
    alphabet.sort_unstable();
    alphabet.dedup();

    let specials = FIXED_SPECIALS as usize + languages.len();
    let needed = specials + alphabet.len();
    if vocab_size < needed {
        return Err(Error::VocabTooSmall {
            needed,
            requested: vocab_size,
        });
    }

    let alphabet_start = specials as u32;
    let unit_to_token: HashMap<u32, u32> = alphabet
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, alphabet_start + i as u32))
        .collect();

    let mut work: Vec<Vec<u32>> = corpus
        .iter()
        .map(|s| s.units.iter().map(|u| unit_to_token[u]).collect())
        .collect();

    let max_merges = vocab_size - specials - alphabet.len();
    let mut merges: Vec<(u32, u32)> = Vec::new();
    while merges.len() < max_merges {
        let Some(best) = best_pair(&work) else { break };
        let new_id = alphabet_start + alphabet.len() as u32 + merges.len() as u32;
        for seq in &mut work {
            *seq = apply_merge(seq, best.0, best.1, new_id);
        }
        merges.push(best);
    }

    Ok(BpeVocab {
        base_alphabet: alphabet,
        merges,
        vocab_size,
        languages: languages.to_vec(),
        unit_to_token,
    })
}

/// Most frequent adjacent pair occurring at least twice, ties toward the
/// lexicographically smaller pair.
fn best_pair(work: &[Vec<u32>]) -> Option<(u32, u32)> {
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    for seq in work {
        for w in seq.windows(2) {
            *counts.entry((w[0], w[1])).or_insert(0) += 1;
        }
    }
    let mut best: Option<((u32, u32), u64)> = None;
    for (&pair, &count) in &counts {
        match best {
            Some((bp, bc)) if count < bc || (count == bc && pair >= bp) => {}
            _ => best = Some((pair, count)),
        }
    }
    match best {
        Some((pair, count)) if count >= 2 => Some(pair),
        _ => None,
    }
}

const VOCAB_MAGIC: &str = "UNITMT-BPE";
const VOCAB_VERSION: u32 = 1;

pub fn write_vocab(path: &Path, vocab: &BpeVocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{VOCAB_MAGIC} {VOCAB_VERSION}")?;
    writeln!(w, "vocab_size {}", vocab.vocab_size)?;
    writeln!(w, "[specials]")?;
    writeln!(w, "PAD {PAD}")?;
    writeln!(w, "UNK {UNK}")?;
    writeln!(w, "BOS {BOS}")?;
    writeln!(w, "EOS {EOS}")?;
    writeln!(w, "MASK {MASK}")?;
    for (i, lang) in vocab.languages.iter().enumerate() {
        writeln!(w, "LANG {} {}", lang, FIXED_SPECIALS as usize + i)?;
    }
    writeln!(w, "[alphabet]")?;
    for &u in &vocab.base_alphabet {
        writeln!(w, "{u}")?;
    }
    writeln!(w, "[merges]")?;
    for &(a, b) in &vocab.merges {
        writeln!(w, "{a} {b}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vocab(path: &Path) -> Result<BpeVocab> {
    let p = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let header = lines.next().ok_or_else(|| Error::format(&p, "empty file"))??;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(VOCAB_MAGIC) {
        return Err(Error::format(&p, "bad magic string"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(&p, "missing version"))?;
    if version != VOCAB_VERSION {
        return Err(Error::format(&p, format!("unsupported version {version}")));
    }
    let size_line = lines.next().ok_or_else(|| Error::format(&p, "missing vocab_size"))??;
    let vocab_size: usize = size_line
        .strip_prefix("vocab_size ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::format(&p, "bad vocab_size line"))?;

    #[derive(PartialEq)]
    enum Section {
        Specials,
        Alphabet,
        Merges,
    }
    let mut section = None;
    let mut languages = Vec::new();
    let mut alphabet = Vec::new();
    let mut merges = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t {
            "[specials]" => section = Some(Section::Specials),
            "[alphabet]" => section = Some(Section::Alphabet),
            "[merges]" => section = Some(Section::Merges),
            _ => match section {
                Some(Section::Specials) => {
                    if let Some(rest) = t.strip_prefix("LANG ") {
                        let mut it = rest.split_whitespace();
                        let lang = it
                            .next()
                            .ok_or_else(|| Error::format(&p, "LANG line missing tag"))?;
                        languages.push(Language::new(lang));
                    }
                    // Fixed specials are implied by the format version.
                }
                Some(Section::Alphabet) => {
                    let u: u32 = t
                        .parse()
                        .map_err(|_| Error::format(&p, format!("bad alphabet entry {t:?}")))?;
                    alphabet.push(u);
                }
                Some(Section::Merges) => {
                    let mut it = t.split_whitespace();
                    let a: u32 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::format(&p, "bad merge line"))?;
                    let b: u32 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::format(&p, "bad merge line"))?;
                    merges.push((a, b));
                }
                None => return Err(Error::format(&p, format!("content before section: {t:?}"))),
            },
        }
    }

    let alphabet_start = FIXED_SPECIALS + languages.len() as u32;
    let unit_to_token = alphabet
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, alphabet_start + i as u32))
        .collect();
    let vocab = BpeVocab {
        base_alphabet: alphabet,
        merges,
        vocab_size,
        languages,
        unit_to_token,
    };
    if vocab.used_tokens() > vocab.vocab_size {
        return Err(Error::format(&p, "token table exceeds declared vocab_size"));
    }
    Ok(vocab)
}
