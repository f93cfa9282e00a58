//! Synthetic clustered corpus and scored pair files.
//!
//! Every cluster owns a small set of topic words; every sentence mixes a few
//! words from one cluster with many words from a tiny shared filler pool. The
//! fillers dominate the mean-pooled input, so an untrained encoder maps all
//! sentences close together (the anisotropy that contrastive training
//! removes). Pair files score two sentences 5 when they come from the same
//! cluster and 0 otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use gs_infonce::rng::{split_seed, PortableRng};
use gs_infonce::{Error, Result};

const TOY_STREAM: u64 = 0x544f_5944;

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataConfig {
    pub sentences: usize,
    pub clusters: usize,
    pub words_per_cluster: usize,
    pub filler_words: usize,
    pub topic_per_sentence: (usize, usize),
    pub filler_per_sentence: (usize, usize),
    /// Pairs per split file; half same-cluster, half different-cluster.
    pub pairs: usize,
    pub seed: u64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        Self {
            sentences: 2000,
            clusters: 50,
            words_per_cluster: 5,
            filler_words: 5,
            topic_per_sentence: (2, 3),
            filler_per_sentence: (8, 12),
            pairs: 500,
            seed: 0,
        }
    }
}

impl ToyDataConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.clusters < 2 {
            return bad("clusters must be >= 2");
        }
        if self.sentences == 0 || self.pairs < 2 {
            return bad("sentences must be >= 1 and pairs >= 2");
        }
        let (tlo, thi) = self.topic_per_sentence;
        let (flo, fhi) = self.filler_per_sentence;
        if tlo == 0 || tlo > thi || thi > self.words_per_cluster {
            return bad("topic words per sentence must satisfy 1 <= lo <= hi <= words_per_cluster");
        }
        if flo > fhi || (fhi > 0 && self.filler_words == 0) {
            return bad("filler words per sentence must satisfy lo <= hi and need a filler pool");
        }
        Ok(())
    }
}

fn topic_word(cluster: usize, k: usize) -> String {
    format!("t{cluster}x{k}")
}

fn filler_word(k: usize) -> String {
    format!("f{k}")
}

struct Generator<'a> {
    cfg: &'a ToyDataConfig,
    rng: PortableRng,
}

impl Generator<'_> {
    fn range(&mut self, (lo, hi): (usize, usize)) -> usize {
        lo + self.rng.below(hi - lo + 1)
    }

    fn sentence(&mut self, cluster: usize) -> String {
        let topics = self.range(self.cfg.topic_per_sentence);
        let fillers = self.range(self.cfg.filler_per_sentence);
        let mut pool: Vec<usize> = (0..self.cfg.words_per_cluster).collect();
        self.rng.shuffle(&mut pool);
        let mut words: Vec<String> = pool[..topics].iter().map(|&k| topic_word(cluster, k)).collect();
        for _ in 0..fillers {
            words.push(filler_word(self.rng.below(self.cfg.filler_words)));
        }
        self.rng.shuffle(&mut words);
        words.join(" ")
    }

    fn pairs(&mut self) -> Vec<(String, String, f64)> {
        (0..self.cfg.pairs)
            .map(|i| {
                let a = self.rng.below(self.cfg.clusters);
                let b = if i % 2 == 0 {
                    a
                } else {
                    (a + 1 + self.rng.below(self.cfg.clusters - 1)) % self.cfg.clusters
                };
                let gold = if a == b { 5.0 } else { 0.0 };
                (self.sentence(a), self.sentence(b), gold)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyData {
    pub corpus: Vec<String>,
    pub train: Vec<(String, String, f64)>,
    pub validation: Vec<(String, String, f64)>,
    pub test: Vec<(String, String, f64)>,
}

pub fn generate(cfg: &ToyDataConfig) -> Result<ToyData> {
    cfg.validate()?;
    let part = |i: u64| Generator {
        cfg,
        rng: PortableRng::new(split_seed(cfg.seed, TOY_STREAM, i)),
    };
    let mut g = part(0);
    let corpus = (0..cfg.sentences)
        .map(|_| {
            let c = g.rng.below(cfg.clusters);
            g.sentence(c)
        })
        .collect();
    Ok(ToyData {
        corpus,
        train: part(1).pairs(),
        validation: part(2).pairs(),
        test: part(3).pairs(),
    })
}

pub fn pairs_tsv(pairs: &[(String, String, f64)]) -> String {
    let mut out = String::new();
    for (a, b, g) in pairs {
        out.push_str(&format!("{a}\t{b}\t{g:.6}\n"));
    }
    out
}

#[derive(Clone, Debug)]
pub struct ToyDataPaths {
    pub corpus: PathBuf,
    pub train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
}

impl ToyDataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            corpus: dir.join("corpus.txt"),
            train: dir.join("train.tsv"),
            validation: dir.join("val.tsv"),
            test: dir.join("test.tsv"),
        }
    }
}

pub fn write_toy_data(cfg: &ToyDataConfig, dir: &Path) -> Result<ToyDataPaths> {
    let data = generate(cfg)?;
    let paths = ToyDataPaths::in_dir(dir);
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let mut corpus = data.corpus.join("\n");
    corpus.push('\n');
    for (path, text) in [
        (&paths.corpus, corpus),
        (&paths.train, pairs_tsv(&data.train)),
        (&paths.validation, pairs_tsv(&data.validation)),
        (&paths.test, pairs_tsv(&data.test)),
    ] {
        fs::write(path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    }
    Ok(paths)
}
