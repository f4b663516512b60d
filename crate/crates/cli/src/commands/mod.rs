pub mod corpus;
pub mod embed;
pub mod report;

use std::path::PathBuf;

use inferbias::WordLists;

use crate::exit::Usage;
use crate::{io, Context};

/// Where a command gets a word list from.
#[derive(Debug, Clone, clap::Args)]
pub struct WordArgs {
    /// Comma-separated words.
    #[arg(long, value_delimiter = ',')]
    pub words: Vec<String>,
    /// File with one word per line.
    #[arg(long)]
    pub words_file: Option<PathBuf>,
    /// A bundled or data-dir list by name, e.g. `gendered` or `occupations`.
    #[arg(long)]
    pub list: Option<String>,
}

impl WordArgs {
    pub fn is_empty(&self) -> bool {
        self.words.is_empty() && self.words_file.is_none() && self.list.is_none()
    }

    pub fn resolve(&self, ctx: &Context, recorder: &mut crate::manifest::Recorder) -> anyhow::Result<Vec<String>> {
        let mut words = self.words.clone();
        if let Some(p) = &self.words_file {
            recorder.input(p);
            words.extend(io::read_word_file(p)?);
        }
        if let Some(name) = &self.list {
            let lists = ctx.word_lists(Some(recorder))?;
            let list = lists.list(name).ok_or_else(|| {
                Usage(format!("unknown list {name:?}; known lists: {}", WordLists::file_names().join(", ")))
            })?;
            words.extend(list);
        }
        Ok(words)
    }
}
