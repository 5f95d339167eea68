use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use btot_core::{Corpus, TimeScale, Vocabulary};

use crate::error::{CliError, CliResult};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TIME_SCALE_FILE: &str = "time_scale.json";

/// Writes through a temporary file in the same directory, then renames it
/// into place.
pub fn write_atomic<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> CliResult<()>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::data(format!("{}: {}", path.display(), e.error)))?;
    log::debug!("wrote {}", path.display());
    Ok(())
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Core errors while reading `path`, prefixed with its name.
fn in_file<T>(path: &Path, r: btot_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::from(e).context(path.display()))
}

pub fn write_corpus_dir(dir: &Path, corpus: &Corpus, split: Option<(&Corpus, &Corpus)>) -> CliResult<()> {
    write_atomic(&dir.join(CORPUS_FILE), |w| Ok(corpus.write_jsonl(w)?))?;
    write_atomic(&dir.join(VOCAB_FILE), |w| Ok(corpus.vocab.write_to(w)?))?;
    write_atomic(&dir.join(TIME_SCALE_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &corpus.time_scale)?;
        Ok(writeln!(w)?)
    })?;
    if let Some((train, test)) = split {
        write_atomic(&dir.join(TRAIN_FILE), |w| Ok(train.write_jsonl(w)?))?;
        write_atomic(&dir.join(TEST_FILE), |w| Ok(test.write_jsonl(w)?))?;
    }
    Ok(())
}

pub struct CorpusDir {
    /// The training split when one was written, the whole corpus otherwise.
    pub train: Corpus,
    pub test: Option<Corpus>,
    pub full: Corpus,
}

fn read_corpus(path: &Path, vocab: &Arc<Vocabulary>, scale: TimeScale) -> CliResult<Corpus> {
    in_file(path, Corpus::read_jsonl(open(path)?, vocab.clone(), scale))
}

pub fn read_corpus_dir(dir: &Path) -> CliResult<CorpusDir> {
    let vpath = dir.join(VOCAB_FILE);
    let vocab = Arc::new(in_file(&vpath, Vocabulary::read_from(open(&vpath)?))?);
    let spath = dir.join(TIME_SCALE_FILE);
    let scale: TimeScale =
        serde_json::from_reader(open(&spath)?).map_err(|e| CliError::data(format!("{}: {e}", spath.display())))?;
    let full = read_corpus(&dir.join(CORPUS_FILE), &vocab, scale)?;
    let (train, test) = if dir.join(TRAIN_FILE).exists() {
        let test = dir.join(TEST_FILE);
        let test = if test.exists() { Some(read_corpus(&test, &vocab, scale)?) } else { None };
        (read_corpus(&dir.join(TRAIN_FILE), &vocab, scale)?, test)
    } else {
        (full.clone(), None)
    };
    Ok(CorpusDir { train, test, full })
}
