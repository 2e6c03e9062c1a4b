//! Unit-corpus file I/O.
//!
//! One utterance per line: space-separated integer units, optionally followed
//! by ` | ` and space-separated run lengths.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Language, UnitSequence};

pub fn write_unit_corpus(path: &Path, corpus: &[UnitSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for seq in corpus {
        write_units_line(&mut w, seq)?;
    }
    w.flush()?;
    Ok(())
}

fn write_units_line<W: Write>(w: &mut W, seq: &UnitSequence) -> Result<()> {
    let units: Vec<String> = seq.units.iter().map(|u| u.to_string()).collect();
    match &seq.durations {
        Some(durs) => {
            let durs: Vec<String> = durs.iter().map(|d| d.to_string()).collect();
            writeln!(w, "{} | {}", units.join(" "), durs.join(" "))?;
        }
        None => writeln!(w, "{}", units.join(" "))?,
    }
    Ok(())
}

pub fn read_unit_corpus(path: &Path, language: &Language) -> Result<Vec<UnitSequence>> {
    let reader = BufReader::new(File::open(path)?);
    let mut corpus = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        corpus.push(parse_units_line(trimmed, language).map_err(|e| {
            Error::format(
                path.display().to_string(),
                format!("line {}: {}", lineno + 1, e),
            )
        })?);
    }
    Ok(corpus)
}

fn parse_units_line(line: &str, language: &Language) -> std::result::Result<UnitSequence, String> {
    let (unit_part, dur_part) = match line.split_once('|') {
        Some((u, d)) => (u, Some(d)),
        None => (line, None),
    };
    let units = parse_u32_list(unit_part)?;
    if units.is_empty() {
        return Err("empty unit list".into());
    }
    match dur_part {
        Some(d) => {
            let durations = parse_u32_list(d)?;
            UnitSequence::with_durations(units, durations, language.clone())
                .map_err(|e| e.to_string())
        }
        None => Ok(UnitSequence::new(units, language.clone())),
    }
}

fn parse_u32_list(s: &str) -> std::result::Result<Vec<u32>, String> {
    s.split_whitespace()
        .map(|tok| tok.parse::<u32>().map_err(|_| format!("bad integer {tok:?}")))
        .collect()
}

/// Aligned parallel corpus files: `source` line i translates to `target` line i.
pub fn read_parallel_files(
    source: &Path,
    source_lang: &Language,
    target: &Path,
    target_lang: &Language,
) -> Result<Vec<(UnitSequence, UnitSequence)>> {
    let src = read_unit_corpus(source, source_lang)?;
    let tgt = read_unit_corpus(target, target_lang)?;
    if src.len() != tgt.len() {
        return Err(Error::Input(format!(
            "parallel files differ in length: {} vs {} lines",
            src.len(),
            tgt.len()
        )));
    }
    Ok(src.into_iter().zip(tgt).collect())
}
