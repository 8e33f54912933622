//! Byte-level BPE tokenizer compatible with the GPT-2 vocabulary format:
//! a JSON object mapping token strings to ids, plus an ordered merges file.

use std::collections::HashMap;
use std::path::Path;

use fancy_regex::Regex;

use crate::error::{Error, Result};

pub const END_OF_TEXT: &str = "<|endoftext|>";

const PRETOKENIZE: &str =
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

#[derive(Debug, Clone)]
pub struct Tokenizer {
    encoder: HashMap<String, u32>,
    decoder: Vec<Option<String>>,
    ranks: HashMap<(String, String), usize>,
    byte_to_char: [char; 256],
    char_to_byte: HashMap<char, u8>,
    pattern: Regex,
    eot: Option<u32>,
}

/// The reversible byte → printable-char table used by GPT-2.
fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut printable: Vec<u32> = (b'!' as u32..=b'~' as u32).collect();
    printable.extend(0xA1..=0xAC);
    printable.extend(0xAE..=0xFF);
    let mut extra = 0u32;
    for b in 0..256u32 {
        let c = if printable.contains(&b) {
            b
        } else {
            extra += 1;
            255 + extra
        };
        table[b as usize] = char::from_u32(c).expect("valid scalar");
    }
    table
}

impl Tokenizer {
    pub fn from_files(vocab_path: &Path, merges_path: &Path) -> Result<Self> {
        let vocab = std::fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let merges = std::fs::read_to_string(merges_path).map_err(|e| Error::io(merges_path, e))?;
        Self::from_strings(&vocab, &merges)
    }

    /// Loads `vocab.json` and `merges.txt` from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        Self::from_files(&dir.join("vocab.json"), &dir.join("merges.txt"))
    }

    /// The standard 50,257-token GPT-2 vocabulary shipped with the crate.
    pub fn gpt2() -> Self {
        Self::from_strings(
            include_str!("../assets/gpt2/vocab.json"),
            include_str!("../assets/gpt2/merges.txt"),
        )
        .expect("bundled GPT-2 tokenizer is valid")
    }

    pub fn from_strings(vocab_json: &str, merges_txt: &str) -> Result<Self> {
        let encoder: HashMap<String, u32> = serde_json::from_str(vocab_json).map_err(|e| {
            Error::Tokenizer(format!("vocabulary is not a JSON object of ids: {e}"))
        })?;
        if encoder.is_empty() {
            return Err(Error::Tokenizer("empty vocabulary".into()));
        }
        let size = encoder.values().max().map_or(0, |&m| m as usize + 1);
        let mut decoder = vec![None; size];
        for (tok, &id) in &encoder {
            if decoder[id as usize].replace(tok.clone()).is_some() {
                return Err(Error::Tokenizer(format!("duplicate id {id}")));
            }
        }

        let mut ranks = HashMap::new();
        for (lineno, line) in merges_txt.lines().enumerate() {
            if line.starts_with("#version") || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => {
                    let rank = ranks.len();
                    ranks.entry((a.to_owned(), b.to_owned())).or_insert(rank);
                }
                _ => {
                    return Err(Error::Tokenizer(format!(
                        "merges line {} is not a space-separated pair",
                        lineno + 1
                    )))
                }
            }
        }

        let byte_to_char = bytes_to_unicode();
        let char_to_byte = byte_to_char
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect();
        for c in byte_to_char {
            if !encoder.contains_key(&c.to_string()) {
                return Err(Error::Tokenizer(format!(
                    "vocabulary lacks byte symbol {c:?}; not a byte-level BPE vocabulary"
                )));
            }
        }
        let eot = encoder.get(END_OF_TEXT).copied();
        Ok(Self {
            encoder,
            decoder,
            ranks,
            byte_to_char,
            char_to_byte,
            pattern: Regex::new(PRETOKENIZE).expect("static pattern compiles"),
            eot,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.decoder.len()
    }

    pub fn end_of_text(&self) -> Option<u32> {
        self.eot
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut first = true;
        for segment in text.split(END_OF_TEXT) {
            if !first {
                if let Some(eot) = self.eot {
                    ids.push(eot);
                } else {
                    self.encode_plain(END_OF_TEXT, &mut ids);
                }
            }
            first = false;
            self.encode_plain(segment, &mut ids);
        }
        ids
    }

    fn encode_plain(&self, text: &str, out: &mut Vec<u32>) {
        for piece in self.pattern.find_iter(text) {
            let piece = piece
                .expect("pretokenizer never backtracks excessively")
                .as_str();
            let mapped: String = piece
                .bytes()
                .map(|b| self.byte_to_char[b as usize])
                .collect();
            for symbol in self.bpe(&mapped) {
                out.push(self.encoder[&symbol]);
            }
        }
    }

    fn bpe(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, pair)| {
                    self.ranks
                        .get(&(pair[0].clone(), pair[1].clone()))
                        .map(|&r| (r, i))
                })
                .min();
            let Some((_, at)) = best else { break };
            let (left, right) = (symbols[at].clone(), symbols[at + 1].clone());
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut bytes = Vec::new();
        for &id in ids {
            let tok = self
                .decoder
                .get(id as usize)
                .and_then(Option::as_ref)
                .ok_or(Error::UnknownToken(id))?;
            if Some(id) == self.eot {
                bytes.extend_from_slice(END_OF_TEXT.as_bytes());
                continue;
            }
            for c in tok.chars() {
                match self.char_to_byte.get(&c) {
                    Some(&b) => bytes.push(b),
                    None => {
                        let mut buf = [0u8; 4];
                        bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                    }
                }
            }
        }
        Ok(bytes)
    }

    /// Decodes ids to text. Byte sequences that are not valid UTF-8 (a
    /// generation cut mid-character) are replaced with U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }

    pub fn token_str(&self, id: u32) -> Option<&str> {
        self.decoder.get(id as usize).and_then(|t| t.as_deref())
    }
}
