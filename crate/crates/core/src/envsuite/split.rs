use std::collections::BTreeSet;

/// Train and test level seeds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSplit {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("level {0} appears in both train and test")]
    Overlap(u64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("split has no training levels")]
    NoTrainLevels,
}

impl LevelSplit {
    pub fn new(train: Vec<u64>, test: Vec<u64>) -> Result<Self, SplitError> {
        if train.is_empty() {
            return Err(SplitError::NoTrainLevels);
        }
        let train_set: BTreeSet<u64> = train.iter().copied().collect();
        if let Some(&seed) = test.iter().find(|s| train_set.contains(s)) {
            return Err(SplitError::Overlap(seed));
        }
        Ok(Self { train, test })
    }

    /// Training seeds `0..n_train`, test seeds `test_offset..test_offset + n_test`.
    pub fn standard(n_train: usize, n_test: usize, test_offset: u64) -> Result<Self, SplitError> {
        Self::new(
            (0..n_train as u64).collect(),
            (test_offset..test_offset + n_test as u64).collect(),
        )
    }

    /// Parses the text form: `[train]` / `[test]` sections, one seed per
    /// line, `#` comments.
    pub fn parse(text: &str) -> Result<Self, SplitError> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut section: Option<bool> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[train]" => section = Some(true),
                "[test]" => section = Some(false),
                _ => {
                    let seed: u64 = line.parse().map_err(|_| SplitError::Parse {
                        line: i + 1,
                        message: format!("`{line}` is not a level seed"),
                    })?;
                    match section {
                        Some(true) => train.push(seed),
                        Some(false) => test.push(seed),
                        None => {
                            return Err(SplitError::Parse {
                                line: i + 1,
                                message: "seed before any [train]/[test] header".into(),
                            })
                        }
                    }
                }
            }
        }
        Self::new(train, test)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("[train]\n");
        for s in &self.train {
            out.push_str(&format!("{s}\n"));
        }
        out.push_str("[test]\n");
        for s in &self.test {
            out.push_str(&format!("{s}\n"));
        }
        out
    }
}
