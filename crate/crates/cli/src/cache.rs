//! Binary dataset cache.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "VQCEDS\0\0"
//! version  u32      1
//! tokens   u32 count, then per token: u8 namespace (0 q, 1 v, 2 a), str text
//! examples u32 count, then per example:
//!          str id, u32 n + n × u32 item ids, u32 answer (u32::MAX = none),
//!          u8 has_annotators [u32 n + n × (str answer, u32 count)],
//!          opt_str question_type, opt_str answer_type
//! str      u32 byte length + UTF-8 bytes
//! opt_str  u8 present flag + str
//! ```

use std::path::Path;

use vqace_core::{AnswerCounts, Dataset, ExampleMeta, Namespace, Transaction, Vocabulary};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"VQCEDS\0\0";
pub const VERSION: u32 = 1;
const NO_ANSWER: u32 = u32::MAX;

fn ns_tag(ns: Namespace) -> u8 {
    match ns {
        Namespace::QuestionWord => 0,
        Namespace::VisualLabel => 1,
        Namespace::Answer => 2,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn opt_str(&mut self, s: Option<&str>) {
        match s {
            Some(s) => {
                self.u8(1);
                self.str(s);
            }
            None => self.u8(0),
        }
    }
}

pub fn encode(dataset: &Dataset) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let vocab = dataset.vocabulary();
    w.u32(vocab.len() as u32);
    for t in vocab.iter() {
        w.u8(ns_tag(t.namespace));
        w.str(&t.text);
    }
    w.u32(dataset.len() as u32);
    for tx in dataset.transactions() {
        w.str(tx.example_id());
        w.u32(tx.items().len() as u32);
        for &i in tx.items() {
            w.u32(i);
        }
        w.u32(tx.answer().unwrap_or(NO_ANSWER));
        match tx.annotator_answers() {
            Some(counts) => {
                w.u8(1);
                let entries: Vec<(&str, u32)> = counts.iter().collect();
                w.u32(entries.len() as u32);
                for (a, c) in entries {
                    w.str(a);
                    w.u32(c);
                }
            }
            None => w.u8(0),
        }
        w.opt_str(tx.meta.question_type.as_deref());
        w.opt_str(tx.meta.answer_type.as_deref());
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| format!("invalid UTF-8 at byte {}: {e}", self.pos))
    }
    fn opt_str(&mut self) -> Result<Option<String>, String> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.str()?)),
            f => Err(format!("bad option flag {f} at byte {}", self.pos - 1)),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Dataset, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a dataset cache (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported cache version {version}"));
    }
    let mut vocab = Vocabulary::new();
    let n_tokens = r.u32()?;
    for i in 0..n_tokens {
        let ns = match r.u8()? {
            0 => Namespace::QuestionWord,
            1 => Namespace::VisualLabel,
            2 => Namespace::Answer,
            t => return Err(format!("bad namespace tag {t}")),
        };
        let text = r.str()?;
        let id = vocab.intern(ns, &text).map_err(|e| e.to_string())?;
        if id != i {
            return Err(format!("duplicate token {text:?}"));
        }
    }
    let n_tx = r.u32()?;
    let mut txs = Vec::with_capacity(n_tx as usize);
    for _ in 0..n_tx {
        let id = r.str()?;
        let n = r.u32()? as usize;
        let items = (0..n).map(|_| r.u32()).collect::<Result<Vec<u32>, String>>()?;
        let answer = match r.u32()? {
            NO_ANSWER => None,
            a => Some(a),
        };
        let mut tx = Transaction::new(id, items, answer, &vocab).map_err(|e| e.to_string())?;
        if r.u8()? == 1 {
            let n = r.u32()?;
            let mut counts = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let a = r.str()?;
                counts.push((a, r.u32()?));
            }
            tx = tx.with_annotator_answers(AnswerCounts::new(counts).map_err(|e| e.to_string())?);
        }
        let meta = ExampleMeta {
            question_type: r.opt_str()?,
            answer_type: r.opt_str()?,
        };
        txs.push(tx.with_meta(meta));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Dataset::new(vocab, txs).map_err(|e| e.to_string())
}

pub fn write(path: &Path, dataset: &Dataset) -> Result<()> {
    std::fs::write(path, encode(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}
