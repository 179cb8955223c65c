//! Model bundles: parameters plus the vocabulary they were trained with,
//! stored as FSPC1 checkpoints.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use specforge_core::bert::{self, FastSpec, ScanReport, TransformerConfig};
use specforge_core::gan::{self, GanConfig, SpectreGan};
use specforge_core::lexer::{normalize, NormalizationConfig, OovPolicy, Token, TokenKind};
use specforge_core::nn::checkpoint;
use specforge_core::vocab::{build_vocab, Vocabulary};
use specforge_core::{Rng, TokenSeq};

use crate::error::{Error, Result};

fn ckpt_err(e: checkpoint::CheckpointError) -> Error {
    Error::Data(format!("checkpoint: {e}"))
}

/// Vocabulary over `corpus` after `cfg`'s label and immediate collapsing.
pub fn vocab_for(corpus: &[TokenSeq], cfg: NormalizationConfig) -> Result<Vocabulary> {
    let keep = NormalizationConfig { oov_policy: OovPolicy::Keep, ..cfg };
    let empty = Vocabulary::specials_only();
    let seqs: Vec<TokenSeq> = corpus.iter().map(|s| normalize(s, &keep, &empty)).collect();
    build_vocab(&seqs, 1).map_err(|e| Error::Data(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct DetectorMeta {
    transformer: TransformerConfig,
    vocab: Vocabulary,
}

pub struct Detector {
    pub model: FastSpec,
    pub vocab: Vocabulary,
}

impl Detector {
    pub fn new(config: TransformerConfig, vocab: Vocabulary, rng: &mut Rng) -> Result<Self> {
        if config.vocab_size != vocab.len() {
            return Err(Error::Data(format!("config vocab {} != vocabulary {}", config.vocab_size, vocab.len())));
        }
        let model = FastSpec::new(config, rng).map_err(|e| Error::Data(e.to_string()))?;
        Ok(Detector { model, vocab })
    }

    pub fn encode(&self, seq: &TokenSeq) -> Vec<usize> {
        self.vocab.encode(&normalize(seq, &NormalizationConfig::detector(), &self.vocab))
    }

    pub fn scan(&self, seq: &TokenSeq, window: usize, stride: usize, threshold: f64) -> ScanReport {
        bert::window_scan(&self.model, &self.encode(seq), window, stride, threshold)
    }

    pub fn to_bytes(&self, step: u64) -> Vec<u8> {
        let meta = DetectorMeta { transformer: self.model.config.clone(), vocab: self.vocab.clone() };
        checkpoint::encode(bert::CHECKPOINT_KIND, serde_json::to_value(meta).unwrap(), step, &self.model.store)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, _) = checkpoint::decode(bytes).map_err(ckpt_err)?;
        let meta: DetectorMeta =
            serde_json::from_value(header.config).map_err(|e| Error::Data(format!("checkpoint config: {e}")))?;
        let mut det = Detector::new(meta.transformer, meta.vocab, &mut specforge_core::seeded_rng(0))?;
        checkpoint::load_into(bytes, bert::CHECKPOINT_KIND, &mut det.model.store).map_err(ckpt_err)?;
        Ok(det)
    }
}

#[derive(Serialize, Deserialize)]
struct GanMeta {
    gan: GanConfig,
    vocab: Vocabulary,
    kinds: BTreeMap<String, TokenKind>,
}

pub struct GanBundle {
    pub gan: SpectreGan,
    pub vocab: Vocabulary,
    /// Most frequent token kind per vocabulary entry, used to rebuild
    /// tokens from generated ids.
    pub kinds: BTreeMap<String, TokenKind>,
}

fn kind_table(corpus: &[TokenSeq]) -> BTreeMap<String, TokenKind> {
    let mut counts: BTreeMap<(&str, TokenKind), usize> = BTreeMap::new();
    for s in corpus {
        for t in &s.tokens {
            *counts.entry((t.text.as_str(), t.kind)).or_default() += 1;
        }
    }
    let mut best: BTreeMap<String, (usize, TokenKind)> = BTreeMap::new();
    for ((text, kind), n) in counts {
        let e = best.entry(text.to_string()).or_insert((0, kind));
        if n > e.0 {
            *e = (n, kind);
        }
    }
    best.into_iter().map(|(k, (_, kind))| (k, kind)).collect()
}

impl GanBundle {
    /// Fresh model with a vocabulary over the generator-normalized corpus.
    pub fn for_corpus(corpus: &[TokenSeq], mut config: GanConfig, rng: &mut Rng) -> Result<Self> {
        let cfg = NormalizationConfig::generator();
        let vocab = vocab_for(corpus, cfg)?;
        let seqs: Vec<TokenSeq> = corpus.iter().map(|s| normalize(s, &cfg, &vocab)).collect();
        config.vocab_size = vocab.len();
        Ok(GanBundle { gan: SpectreGan::new(config, rng), vocab, kinds: kind_table(&seqs) })
    }

    pub fn encode(&self, seq: &TokenSeq) -> Vec<usize> {
        self.vocab.encode(&normalize(seq, &NormalizationConfig::generator(), &self.vocab))
    }

    pub fn decode(&self, id: &str, ids: &[usize]) -> TokenSeq {
        let tokens = self
            .vocab
            .decode(ids)
            .into_iter()
            .map(|t| Token::new(self.kinds.get(t).copied().unwrap_or(TokenKind::Unknown), t))
            .collect();
        TokenSeq::new(id, tokens)
    }

    pub fn to_bytes(&self, step: u64) -> Vec<u8> {
        let meta = GanMeta { gan: self.gan.config.clone(), vocab: self.vocab.clone(), kinds: self.kinds.clone() };
        checkpoint::encode(gan::CHECKPOINT_KIND, serde_json::to_value(meta).unwrap(), step, &self.gan.store)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, _) = checkpoint::decode(bytes).map_err(ckpt_err)?;
        let meta: GanMeta =
            serde_json::from_value(header.config).map_err(|e| Error::Data(format!("checkpoint config: {e}")))?;
        let mut gan = SpectreGan::new(meta.gan, &mut specforge_core::seeded_rng(0));
        checkpoint::load_into(bytes, gan::CHECKPOINT_KIND, &mut gan.store).map_err(ckpt_err)?;
        Ok(GanBundle { gan, vocab: meta.vocab, kinds: meta.kinds })
    }
}
