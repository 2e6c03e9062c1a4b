//! Speech-to-unit quantization: k-means codebook training over feature
//! frames, nearest-center assignment, run-length encoding, and PNMI scoring
//! of unit quality against phone alignments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{derive_seed, rng_from_seed};
use crate::types::{Language, UnitSequence};

/// T x D matrix of real-valued feature frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim: usize,
    pub source_id: String,
    pub layer_index: u32,
}

impl FeatureMatrix {
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        source_id: impl Into<String>,
        layer_index: u32,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Input("feature matrix needs at least one frame".into()));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::Input("feature dimension must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, dim, source_id, layer_index)
    }

    pub fn from_flat(
        data: Vec<f64>,
        dim: usize,
        source_id: impl Into<String>,
        layer_index: u32,
    ) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Input(format!(
                "flat feature data of length {} is not a T x {} matrix with T >= 1",
                data.len(),
                dim
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("feature matrix contains non-finite values".into()));
        }
        Ok(FeatureMatrix {
            data,
            dim,
            source_id: source_id.into(),
            layer_index,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Per-frame phone labels annotating one `FeatureMatrix`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneAlignment {
    pub phones: Vec<u32>,
}

impl PhoneAlignment {
    pub fn new(phones: Vec<u32>) -> Self {
        PhoneAlignment { phones }
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }
}

/// Trained k-means codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centers: Vec<f64>,
    k: usize,
    dim: usize,
    pub distortion: f64,
}

impl Codebook {
    pub fn from_centers(centers: Vec<Vec<f64>>, distortion: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Input("codebook needs at least one center".into()));
        }
        let dim = centers[0].len();
        let k = centers.len();
        let mut flat = Vec::with_capacity(k * dim);
        for c in &centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.len(),
                });
            }
            flat.extend_from_slice(c);
        }
        Ok(Codebook {
            centers: flat,
            k,
            dim,
            distortion,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest center by squared Euclidean distance; ties go to the lowest index.
    pub fn nearest_center(&self, frame: &[f64]) -> (usize, f64) {
        debug_assert_eq!(frame.len(), self.dim);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for i in 0..self.k {
            let d = sq_dist(frame, self.center(i));
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        (best, best_d)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// One Lloyd run: the codebook plus the distortion after every iteration.
#[derive(Debug, Clone)]
pub struct KmeansRun {
    pub codebook: Codebook,
    /// Mean squared distance after each assignment pass, index 0 = after init.
    pub distortion_history: Vec<f64>,
    pub iterations: usize,
}

/// Train a k-means codebook with distance-weighted seeding and Lloyd updates.
///
/// Deterministic given `seed`. Stops after `max_iters` Lloyd iterations or
/// when the distortion improves by less than `tol`.
pub fn train_kmeans(
    data: &[FeatureMatrix],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Codebook> {
    Ok(train_kmeans_detailed(data, k, seed, max_iters, tol)?.codebook)
}

pub fn train_kmeans_detailed(
    data: &[FeatureMatrix],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KmeansRun> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::Config("tol must be >= 0".into()));
    }
    if data.is_empty() {
        return Err(Error::Input("no feature matrices given".into()));
    }
    let dim = data[0].dim();
    for m in data {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: m.dim(),
            });
        }
    }

    // Pool frames into one contiguous matrix.
    let total: usize = data.iter().map(|m| m.num_frames()).sum();
    if total < k {
        return Err(Error::DegenerateInput(format!(
            "{total} frames is fewer than k = {k}"
        )));
    }
    let mut frames = Vec::with_capacity(total * dim);
    for m in data {
        frames.extend_from_slice(&m.data);
    }
    let frame = |t: usize| &frames[t * dim..(t + 1) * dim];

    if distinct_frame_count(&frames, dim, k) < k {
        return Err(Error::DegenerateInput(format!(
            "fewer than k = {k} distinct frames"
        )));
    }

    // Distance-weighted seeding: first center uniform, the rest proportional
    // to squared distance from the nearest chosen center.
    let mut rng = rng_from_seed(seed);
    let mut centers = vec![0.0f64; k * dim];
    let first = rng.random_range(0..total);
    centers[..dim].copy_from_slice(frame(first));
    let mut d2: Vec<f64> = (0..total).map(|t| sq_dist(frame(t), &centers[..dim])).collect();
    for c in 1..k {
        let sum: f64 = d2.iter().sum();
        let pick = if sum > 0.0 {
            let mut dart = rng.random::<f64>() * sum;
            let mut chosen = total - 1;
            for (t, &w) in d2.iter().enumerate() {
                dart -= w;
                if dart <= 0.0 {
                    chosen = t;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass at distance zero; cannot happen with >= k
            // distinct frames because some frame is still uncovered.
            rng.random_range(0..total)
        };
        let (head, tail) = centers.split_at_mut(c * dim);
        tail[..dim].copy_from_slice(frame(pick));
        let _ = head;
        for t in 0..total {
            let d = sq_dist(frame(t), &centers[c * dim..(c + 1) * dim]);
            if d < d2[t] {
                d2[t] = d;
            }
        }
    }

    let mut run_centers = centers;
    let mut assignment = assign_all(&frames, dim, total, &run_centers, k);
    let mut history = vec![mean_distortion(&assignment)];
    let mut iterations = 0usize;

    for _ in 0..max_iters {
        // Update step: each center moves to the mean of its frames, in fixed
        // frame order so reductions are bit-reproducible.
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for t in 0..total {
            let c = assignment[t].0;
            counts[c] += 1;
            let f = frame(t);
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(f) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                for (dst, &s) in run_centers[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s / n;
                }
            }
        }
        // Reseed empty clusters to the frame farthest from its center.
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let interim = assign_all(&frames, dim, total, &run_centers, k);
            let mut order: Vec<usize> = (0..total).collect();
            order.sort_by(|&a, &b| {
                interim[b]
                    .1
                    .partial_cmp(&interim[a].1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            for (c, t) in empty.into_iter().zip(order) {
                let f = frame(t);
                run_centers[c * dim..(c + 1) * dim].copy_from_slice(f);
            }
        }

        assignment = assign_all(&frames, dim, total, &run_centers, k);
        let d = mean_distortion(&assignment);
        let prev = *history.last().expect("history non-empty");
        history.push(d);
        iterations += 1;
        if prev - d < tol {
            break;
        }
    }

    let codebook = Codebook {
        centers: run_centers,
        k,
        dim,
        distortion: *history.last().expect("history non-empty"),
    };
    Ok(KmeansRun {
        codebook,
        distortion_history: history,
        iterations,
    })
}

fn assign_all(
    frames: &[f64],
    dim: usize,
    total: usize,
    centers: &[f64],
    k: usize,
) -> Vec<(usize, f64)> {
    par::map_range(total, |t| {
        let f = &frames[t * dim..(t + 1) * dim];
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = sq_dist(f, &centers[c * dim..(c + 1) * dim]);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        (best, best_d)
    })
}

fn mean_distortion(assignment: &[(usize, f64)]) -> f64 {
    assignment.iter().map(|&(_, d)| d).sum::<f64>() / assignment.len() as f64
}

fn distinct_frame_count(frames: &[f64], dim: usize, stop_at: usize) -> usize {
    let mut seen: std::collections::BTreeSet<Vec<u64>> = std::collections::BTreeSet::new();
    for f in frames.chunks_exact(dim) {
        seen.insert(f.iter().map(|v| v.to_bits()).collect());
        if seen.len() >= stop_at {
            return seen.len();
        }
    }
    seen.len()
}

/// Map every frame to its nearest center. Pre-RLE: one unit per frame.
pub fn assign_units(
    m: &FeatureMatrix,
    codebook: &Codebook,
    language: &Language,
) -> Result<UnitSequence> {
    if m.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            actual: m.dim(),
        });
    }
    let frames: Vec<&[f64]> = m.frames().collect();
    let units = par::map_vec(&frames, |f| codebook.nearest_center(f).0 as u32);
    Ok(UnitSequence::new(units, language.clone()))
}

/// Collapse consecutive duplicate units, recording run lengths.
pub fn run_length_encode(raw: &UnitSequence) -> Result<UnitSequence> {
    if raw.is_empty() {
        return Err(Error::Input("cannot run-length encode an empty sequence".into()));
    }
    let mut units = Vec::new();
    let mut durations = Vec::new();
    for &u in &raw.units {
        match units.last() {
            Some(&last) if last == u => *durations.last_mut().expect("parallel vec") += 1,
            _ => {
                units.push(u);
                durations.push(1u32);
            }
        }
    }
    UnitSequence::with_durations(units, durations, raw.language.clone())
}

/// Expand an RLE sequence back to one unit per frame.
pub fn rle_expand(encoded: &UnitSequence) -> Result<Vec<u32>> {
    let durations = encoded
        .durations
        .as_ref()
        .ok_or_else(|| Error::Input("sequence has no durations to expand".into()))?;
    let mut out = Vec::new();
    for (&u, &d) in encoded.units.iter().zip(durations) {
        out.extend(std::iter::repeat(u).take(d as usize));
    }
    Ok(out)
}

/// Pointwise normalized mutual information I(phone; unit) / H(phone), from
/// empirical joint frame counts. Units must be pre-RLE (one per frame).
pub fn pnmi(units: &[UnitSequence], phones: &[PhoneAlignment]) -> Result<f64> {
    if units.len() != phones.len() {
        return Err(Error::Input(format!(
            "{} unit sequences vs {} alignments",
            units.len(),
            phones.len()
        )));
    }
    let mut joint: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut total = 0u64;
    for (seq, align) in units.iter().zip(phones) {
        if seq.len() != align.len() {
            return Err(Error::Input(format!(
                "unit sequence length {} does not match alignment length {}",
                seq.len(),
                align.len()
            )));
        }
        for (&u, &p) in seq.units.iter().zip(&align.phones) {
            *joint.entry((p, u)).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Input("no frames to score".into()));
    }
    let n = total as f64;

    let mut phone_counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut unit_counts: BTreeMap<u32, u64> = BTreeMap::new();
    for (&(p, u), &c) in &joint {
        *phone_counts.entry(p).or_insert(0) += c;
        *unit_counts.entry(u).or_insert(0) += c;
    }

    let h_phone: f64 = phone_counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    if h_phone <= 0.0 {
        return Err(Error::UndefinedMetric(
            "phone entropy is zero (a single phone label everywhere)".into(),
        ));
    }

    let mut mi = 0.0f64;
    for (&(p, u), &c) in &joint {
        let pxy = c as f64 / n;
        let px = phone_counts[&p] as f64 / n;
        let py = unit_counts[&u] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    Ok((mi / h_phone).clamp(0.0, 1.0))
}

/// One (layer, k) configuration to score in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepCandidate {
    pub layer: u32,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub layer: u32,
    pub k: usize,
    pub pnmi: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    /// Sorted descending by PNMI; ties broken by smaller k, then lower layer.
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn selected(&self) -> &SweepEntry {
        &self.entries[0]
    }
}

/// Train and score one codebook per candidate, ranking them by PNMI.
///
/// `data[i]` is annotated by `alignments[i]`; a candidate uses only the
/// matrices whose `layer_index` matches its layer tag.
pub fn pnmi_sweep(
    candidates: &[SweepCandidate],
    data: &[FeatureMatrix],
    alignments: &[PhoneAlignment],
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<SweepReport> {
    if candidates.is_empty() {
        return Err(Error::Input("sweep needs at least one candidate".into()));
    }
    if data.len() != alignments.len() {
        return Err(Error::Input(format!(
            "{} feature matrices vs {} alignments",
            data.len(),
            alignments.len()
        )));
    }
    let lang = Language::new("sweep");
    let indexed: Vec<usize> = (0..candidates.len()).collect();
    let results = par::map_vec(&indexed, |&i| -> Result<SweepEntry> {
        let cand = candidates[i];
        let layer_data: Vec<FeatureMatrix> = data
            .iter()
            .filter(|m| m.layer_index == cand.layer)
            .cloned()
            .collect();
        let layer_aligns: Vec<PhoneAlignment> = data
            .iter()
            .zip(alignments)
            .filter(|(m, _)| m.layer_index == cand.layer)
            .map(|(_, a)| a.clone())
            .collect();
        if layer_data.is_empty() {
            return Err(Error::Input(format!(
                "no feature matrices tagged with layer {}",
                cand.layer
            )));
        }
        let codebook = train_kmeans(&layer_data, cand.k, derive_seed(seed, i as u64), max_iters, tol)?;
        let units: Result<Vec<UnitSequence>> = layer_data
            .iter()
            .map(|m| assign_units(m, &codebook, &lang))
            .collect();
        let score = pnmi(&units?, &layer_aligns)?;
        Ok(SweepEntry {
            layer: cand.layer,
            k: cand.k,
            pnmi: score,
            distortion: codebook.distortion,
        })
    });
    let mut entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| {
        b.pnmi
            .partial_cmp(&a.pnmi)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.k.cmp(&b.k))
            .then(a.layer.cmp(&b.layer))
    });
    Ok(SweepReport { entries })
}

const CODEBOOK_MAGIC: &str = "UNITMT-CODEBOOK";
const CODEBOOK_VERSION: u32 = 1;

/// Write a codebook: versioned header, then one center per line at fixed
/// decimal precision 9.
pub fn write_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CODEBOOK_MAGIC} {CODEBOOK_VERSION}")?;
    writeln!(
        w,
        "{} {} {:.9}",
        codebook.k(),
        codebook.dim(),
        codebook.distortion
    )?;
    for i in 0..codebook.k() {
        let row: Vec<String> = codebook.center(i).iter().map(|v| format!("{v:.9}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let p = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(&p, "empty file"))??;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CODEBOOK_MAGIC) {
        return Err(Error::format(&p, "bad magic string"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(&p, "missing version"))?;
    if version != CODEBOOK_VERSION {
        return Err(Error::format(&p, format!("unsupported version {version}")));
    }
    let meta = lines
        .next()
        .ok_or_else(|| Error::format(&p, "missing size line"))??;
    let mut parts = meta.split_whitespace();
    let k: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(&p, "bad k"))?;
    let dim: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(&p, "bad dim"))?;
    let distortion: f64 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(&p, "bad distortion"))?;
    let mut centers = Vec::with_capacity(k);
    for _ in 0..k {
        let line = lines
            .next()
            .ok_or_else(|| Error::format(&p, "truncated center list"))??;
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|_| Error::format(&p, "bad center value"))?;
        if row.len() != dim {
            return Err(Error::format(
                &p,
                format!("center has {} values, expected {}", row.len(), dim),
            ));
        }
        centers.push(row);
    }
    Codebook::from_centers(centers, distortion)
}

/// Feature file: per utterance a header `utt <id> <layer> <T> <D>` followed
/// by T lines of D floats.
pub fn write_feature_file(path: &Path, matrices: &[FeatureMatrix]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for m in matrices {
        writeln!(
            w,
            "utt {} {} {} {}",
            m.source_id,
            m.layer_index,
            m.num_frames(),
            m.dim()
        )?;
        for f in m.frames() {
            let row: Vec<String> = f.iter().map(|v| format!("{v:.9}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureMatrix>> {
    let p = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let mut out = Vec::new();
    while let Some(line) = lines.next() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        if parts.next() != Some("utt") {
            return Err(Error::format(&p, format!("expected utt header, got {trimmed:?}")));
        }
        let id = parts
            .next()
            .ok_or_else(|| Error::format(&p, "utt header missing id"))?
            .to_string();
        let layer: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(&p, "bad layer"))?;
        let t: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(&p, "bad frame count"))?;
        let d: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(&p, "bad dim"))?;
        let mut data = Vec::with_capacity(t * d);
        for _ in 0..t {
            let row = lines
                .next()
                .ok_or_else(|| Error::format(&p, "truncated feature rows"))??;
            let vals: std::result::Result<Vec<f64>, _> =
                row.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|_| Error::format(&p, "bad feature value"))?;
            if vals.len() != d {
                return Err(Error::format(
                    &p,
                    format!("feature row has {} values, expected {}", vals.len(), d),
                ));
            }
            data.extend(vals);
        }
        out.push(FeatureMatrix::from_flat(data, d, id, layer)?);
    }
    Ok(out)
}

/// Alignment file: per utterance `utt <id>` then one line of phone labels.
pub fn write_alignment_file(path: &Path, ids: &[String], aligns: &[PhoneAlignment]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, a) in ids.iter().zip(aligns) {
        writeln!(w, "utt {id}")?;
        let row: Vec<String> = a.phones.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_alignment_file(path: &Path) -> Result<Vec<(String, PhoneAlignment)>> {
    let p = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let mut out = Vec::new();
    while let Some(line) = lines.next() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let id = trimmed
            .strip_prefix("utt ")
            .ok_or_else(|| Error::format(&p, format!("expected utt header, got {trimmed:?}")))?
            .trim()
            .to_string();
        let row = lines
            .next()
            .ok_or_else(|| Error::format(&p, "truncated alignment"))??;
        let phones: std::result::Result<Vec<u32>, _> =
            row.split_whitespace().map(str::parse::<u32>).collect();
        let phones = phones.map_err(|_| Error::format(&p, "bad phone label"))?;
        out.push((id, PhoneAlignment::new(phones)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, "t", 0).unwrap()
    }

    fn lang() -> Language {
        Language::new("l1")
    }

    #[test]
    fn k_distinct_frames_k_clusters_zero_distortion() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, -(i as f64)]).collect();
        let data = vec![mat(rows.clone())];
        let cb = train_kmeans(&data, 5, 11, 50, 0.0).unwrap();
        assert_eq!(cb.distortion, 0.0);
        // Each frame must be a center.
        for row in &rows {
            let (_, d) = cb.nearest_center(row);
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn two_triads_centers_equal_triad_means() {
        // Two well-separated triads in 2D; the only optimal 2-clustering is
        // the triad split. Oracle: enumerate both balanced assignments.
        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 1.0]];
        let b = vec![vec![100.0, 100.0], vec![101.0, 100.0], vec![100.5, 101.0]];
        let mean = |pts: &[Vec<f64>]| -> Vec<f64> {
            let n = pts.len() as f64;
            vec![
                pts.iter().map(|p| p[0]).sum::<f64>() / n,
                pts.iter().map(|p| p[1]).sum::<f64>() / n,
            ]
        };
        let mean_a = mean(&a);
        let mean_b = mean(&b);
        let all: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        let cb = train_kmeans(&[mat(all)], 2, 3, 100, 0.0).unwrap();
        let mut centers = vec![cb.center(0).to_vec(), cb.center(1).to_vec()];
        centers.sort_by(|x, y| x[0].partial_cmp(&y[0]).unwrap());
        for (got, want) in centers.iter().zip([mean_a, mean_b]) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-9, "center {got:?}");
            }
        }
    }

    #[test]
    fn same_seed_same_codebook() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64 * 0.37, (i % 5) as f64 - 2.0, (i % 3) as f64])
            .collect();
        let data = vec![mat(rows)];
        let c1 = train_kmeans(&data, 4, 99, 30, 1e-12).unwrap();
        let c2 = train_kmeans(&data, 4, 99, 30, 1e-12).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn rejects_fewer_distinct_frames_than_k() {
        let rows = vec![vec![1.0, 2.0]; 10];
        let err = train_kmeans(&[mat(rows)], 2, 0, 10, 0.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
    }

    #[test]
    fn rejects_non_finite_features() {
        assert!(FeatureMatrix::from_rows(vec![vec![f64::NAN]], "t", 0).is_err());
        assert!(FeatureMatrix::from_rows(vec![vec![f64::INFINITY]], "t", 0).is_err());
    }

    #[test]
    fn lloyd_distortion_non_increasing_on_random_data() {
        use rand::Rng;
        for seed in 0..10u64 {
            let mut rng = rng_from_seed(derive_seed(1234, seed));
            let rows: Vec<Vec<f64>> = (0..120)
                .map(|_| (0..6).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            let run = train_kmeans_detailed(&[mat(rows)], 8, seed, 40, 0.0).unwrap();
            for w in run.distortion_history.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12,
                    "distortion increased: {} -> {} (seed {seed})",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn assign_exact_match_and_tie_break() {
        let centers = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![3.0, 0.0],
            vec![9.0, 9.0],
        ];
        let cb = Codebook::from_centers(centers, 0.0).unwrap();
        // Frame exactly equal to center 3.
        let m = mat(vec![vec![3.0, 0.0]]);
        let seq = assign_units(&m, &cb, &lang()).unwrap();
        assert_eq!(seq.units, vec![3]);
        // Frame equidistant from centers 1 and 4 resolves to the lower index.
        let mid = vec![vec![5.0, 4.5]];
        let d1 = (5.0f64 - 1.0).powi(2) + 4.5f64.powi(2);
        let d4 = (5.0f64 - 9.0).powi(2) + (4.5f64 - 9.0).powi(2);
        assert_eq!(d1, d4);
        let seq = assign_units(&mat(mid), &cb, &lang()).unwrap();
        assert_eq!(seq.units, vec![1]);
    }

    #[test]
    fn assign_dimension_mismatch() {
        let cb = Codebook::from_centers(vec![vec![0.0, 0.0]], 0.0).unwrap();
        let m = mat(vec![vec![1.0, 2.0, 3.0]]);
        assert!(matches!(
            assign_units(&m, &cb, &lang()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// Independent O(T*K*D) scan used as the assignment oracle.
    fn brute_force_assign(m: &FeatureMatrix, cb: &Codebook) -> Vec<u32> {
        let mut out = Vec::new();
        for t in 0..m.num_frames() {
            let f = m.frame(t);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..cb.k() {
                let mut d = 0.0;
                for j in 0..cb.dim() {
                    let diff = f[j] - cb.center(c)[j];
                    d += diff * diff;
                }
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            out.push(best as u32);
        }
        out
    }

    #[test]
    fn assignment_matches_brute_force_scan() {
        use rand::Rng;
        let mut rng = rng_from_seed(42);
        let centers: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let cb = Codebook::from_centers(centers, 0.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let m = mat(rows);
        let seq = assign_units(&m, &cb, &lang()).unwrap();
        assert_eq!(seq.units, brute_force_assign(&m, &cb));
    }

    #[test]
    fn rle_examples() {
        let seq = UnitSequence::new(vec![5, 5, 5, 2, 2, 7], lang());
        let enc = run_length_encode(&seq).unwrap();
        assert_eq!(enc.units, vec![5, 2, 7]);
        assert_eq!(enc.durations, Some(vec![3, 2, 1]));

        let seq = UnitSequence::new(vec![1, 2, 3], lang());
        let enc = run_length_encode(&seq).unwrap();
        assert_eq!(enc.units, vec![1, 2, 3]);
        assert_eq!(enc.durations, Some(vec![1, 1, 1]));

        let empty = UnitSequence::new(vec![], lang());
        assert!(run_length_encode(&empty).is_err());
    }

    #[test]
    fn pnmi_bijective_relabeling_is_one() {
        let phones: Vec<u32> = (0..60).map(|i| i % 4).collect();
        let units: Vec<u32> = phones.iter().map(|&p| 3 - p + 10).collect();
        let score = pnmi(
            &[UnitSequence::new(units, lang())],
            &[PhoneAlignment::new(phones)],
        )
        .unwrap();
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pnmi_independent_is_zero() {
        // All four joint cells equal over 2 phones x 2 units.
        let phones = vec![0, 0, 1, 1];
        let units = vec![0, 1, 0, 1];
        let score = pnmi(
            &[UnitSequence::new(units, lang())],
            &[PhoneAlignment::new(phones)],
        )
        .unwrap();
        assert!(score.abs() < 1e-12);
    }

    #[test]
    fn pnmi_hand_computed_joint_table() {
        // Joint counts [[2,1],[1,2]] over 2 phones x 2 units, 6 frames.
        let phones = vec![0, 0, 0, 1, 1, 1];
        let units = vec![0, 0, 1, 0, 1, 1];
        let score = pnmi(
            &[UnitSequence::new(units, lang())],
            &[PhoneAlignment::new(phones)],
        )
        .unwrap();
        // Oracle: direct entropy computation from the table.
        let h = |ps: &[f64]| -> f64 { ps.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum() };
        let h_phone = h(&[0.5, 0.5]);
        // H(phone|unit): each unit has mass 1/2 with conditional [2/3, 1/3].
        let h_cond = 0.5 * h(&[2.0 / 3.0, 1.0 / 3.0]) + 0.5 * h(&[1.0 / 3.0, 2.0 / 3.0]);
        let expected = (h_phone - h_cond) / h_phone;
        assert!((score - expected).abs() < 1e-12, "{score} vs {expected}");
    }

    #[test]
    fn pnmi_errors_on_zero_phone_entropy() {
        let phones = vec![7, 7, 7];
        let units = vec![0, 1, 2];
        let err = pnmi(
            &[UnitSequence::new(units, lang())],
            &[PhoneAlignment::new(phones)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn pnmi_length_mismatch_rejected() {
        let err = pnmi(
            &[UnitSequence::new(vec![1, 2], lang())],
            &[PhoneAlignment::new(vec![0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    fn sweep_fixture() -> (Vec<FeatureMatrix>, Vec<PhoneAlignment>) {
        // Phones cycle 0..5; three layers of engineered features.
        let phones: Vec<u32> = (0..60).map(|i| (i % 5) as u32).collect();
        let layer0: Vec<Vec<f64>> = phones.iter().map(|&p| vec![p as f64 * 10.0]).collect();
        let layer1: Vec<Vec<f64>> = phones.iter().map(|&p| vec![(p % 3) as f64 * 10.0]).collect();
        let layer2: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 2) as f64 * 10.0]).collect();
        let data = vec![
            FeatureMatrix::from_rows(layer0, "u0", 0).unwrap(),
            FeatureMatrix::from_rows(layer1, "u1", 1).unwrap(),
            FeatureMatrix::from_rows(layer2, "u2", 2).unwrap(),
        ];
        let aligns = vec![
            PhoneAlignment::new(phones.clone()),
            PhoneAlignment::new(phones.clone()),
            PhoneAlignment::new(phones),
        ];
        (data, aligns)
    }

    #[test]
    fn sweep_single_candidate_selected() {
        let (data, aligns) = sweep_fixture();
        let report = pnmi_sweep(&[SweepCandidate { layer: 0, k: 5 }], &data, &aligns, 7, 50, 0.0)
            .unwrap();
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.selected().layer, 0);
    }

    #[test]
    fn sweep_perfect_units_beat_uninformative_units() {
        let (data, aligns) = sweep_fixture();
        let cands = [
            SweepCandidate { layer: 2, k: 2 },
            SweepCandidate { layer: 0, k: 5 },
        ];
        let report = pnmi_sweep(&cands, &data, &aligns, 7, 50, 0.0).unwrap();
        assert_eq!(report.selected().layer, 0);
        assert!((report.entries[0].pnmi - 1.0).abs() < 1e-9);
        assert!(report.entries[1].pnmi < 0.1);
    }

    #[test]
    fn sweep_ranking_matches_per_candidate_oracle() {
        let (data, aligns) = sweep_fixture();
        let cands = [
            SweepCandidate { layer: 1, k: 3 },
            SweepCandidate { layer: 2, k: 2 },
            SweepCandidate { layer: 0, k: 5 },
        ];
        let seed = 31;
        let report = pnmi_sweep(&cands, &data, &aligns, seed, 50, 0.0).unwrap();

        // Oracle: replicate each candidate independently through the public
        // single-candidate ops and rank by the resulting PNMI.
        let mut oracle: Vec<(u32, f64)> = Vec::new();
        for (i, cand) in cands.iter().enumerate() {
            let layer_data: Vec<FeatureMatrix> = data
                .iter()
                .filter(|m| m.layer_index == cand.layer)
                .cloned()
                .collect();
            let layer_aligns: Vec<PhoneAlignment> = data
                .iter()
                .zip(&aligns)
                .filter(|(m, _)| m.layer_index == cand.layer)
                .map(|(_, a)| a.clone())
                .collect();
            let cb =
                train_kmeans(&layer_data, cand.k, derive_seed(seed, i as u64), 50, 0.0).unwrap();
            let units: Vec<UnitSequence> = layer_data
                .iter()
                .map(|m| assign_units(m, &cb, &lang()).unwrap())
                .collect();
            oracle.push((cand.layer, pnmi(&units, &layer_aligns).unwrap()));
        }
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let got: Vec<u32> = report.entries.iter().map(|e| e.layer).collect();
        let want: Vec<u32> = oracle.iter().map(|&(l, _)| l).collect();
        assert_eq!(got, want);
        for (entry, (_, score)) in report.entries.iter().zip(&oracle) {
            assert!((entry.pnmi - score).abs() < 1e-12);
        }
    }

    #[test]
    fn codebook_file_roundtrip() {
        let cb = Codebook::from_centers(
            vec![vec![0.123456789, -4.5], vec![1e-3, 2.0]],
            0.25,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.txt");
        write_codebook(&path, &cb).unwrap();
        let back = read_codebook(&path).unwrap();
        assert_eq!(back.k(), 2);
        assert_eq!(back.dim(), 2);
        for i in 0..2 {
            for j in 0..2 {
                assert!((back.center(i)[j] - cb.center(i)[j]).abs() < 1e-9);
            }
        }
        assert!(read_codebook(&dir.path().join("missing.txt")).is_err());
    }

    #[test]
    fn feature_file_roundtrip() {
        let ms = vec![
            mat(vec![vec![1.0, 2.0], vec![3.0, 4.0]]),
            FeatureMatrix::from_rows(vec![vec![0.5, -0.5]], "x", 3).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.txt");
        write_feature_file(&path, &ms).unwrap();
        let back = read_feature_file(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].layer_index, 3);
        assert_eq!(back[0].num_frames(), 2);
        assert!((back[0].frame(1)[0] - 3.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn rle_roundtrip(units in proptest::collection::vec(0u32..6, 1..60)) {
            let seq = UnitSequence::new(units.clone(), Language::new("l1"));
            let enc = run_length_encode(&seq).unwrap();
            // No two consecutive units equal after RLE.
            for w in enc.units.windows(2) {
                prop_assert_ne!(w[0], w[1]);
            }
            let total: u32 = enc.durations.as_ref().unwrap().iter().sum();
            prop_assert_eq!(total as usize, units.len());
            prop_assert_eq!(rle_expand(&enc).unwrap(), units);
        }

        #[test]
        fn pnmi_invariant_under_label_permutations(
            frames in proptest::collection::vec((0u32..4, 0u32..5), 8..80)
        ) {
            let phones: Vec<u32> = frames.iter().map(|&(p, _)| p).collect();
            let units: Vec<u32> = frames.iter().map(|&(_, u)| u).collect();
            if phones.iter().collect::<std::collections::BTreeSet<_>>().len() < 2 {
                return Ok(());
            }
            let base = pnmi(
                &[UnitSequence::new(units.clone(), Language::new("l1"))],
                &[PhoneAlignment::new(phones.clone())],
            ).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            // Permute both label spaces.
            let pphones: Vec<u32> = phones.iter().map(|&p| (p * 7 + 3) % 11).collect();
            let punits: Vec<u32> = units.iter().map(|&u| 4 - u).collect();
            let permuted = pnmi(
                &[UnitSequence::new(punits, Language::new("l1"))],
                &[PhoneAlignment::new(pphones)],
            ).unwrap();
            prop_assert!((base - permuted).abs() < 1e-9);
        }

        #[test]
        fn assignment_matches_oracle_on_random_inputs(
            seed in 0u64..500,
        ) {
            use rand::Rng;
            let mut rng = rng_from_seed(seed);
            let k = rng.random_range(1..8usize);
            let d = rng.random_range(1..5usize);
            let t = rng.random_range(1..20usize);
            let centers: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
                .collect();
            let cb = Codebook::from_centers(centers, 0.0).unwrap();
            let rows: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
                .collect();
            let m = FeatureMatrix::from_rows(rows, "t", 0).unwrap();
            let seq = assign_units(&m, &cb, &Language::new("l1")).unwrap();
            prop_assert_eq!(seq.units, brute_force_assign(&m, &cb));
        }
    }
}
