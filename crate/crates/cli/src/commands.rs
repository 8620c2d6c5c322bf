//! Subcommand implementations. Every command streams its input chunk by
//! chunk and processes the sentences of a chunk in parallel; per-sentence
//! randomness is seeded from `seed ^ sentence_index`, so output does not
//! depend on chunking or thread count.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use spangec::alignment::{edits_between, merge_edits};
use spangec::annotation::{annotate_edits, AnnotationRecord, CorrectionOutput};
use spangec::batch;
use spangec::datagen::{corrupt, make_esc_mixed, make_esd_instance, sentence_rng, EscInstance, EsdInstance};
use spangec::esc::{train_corrector, OracleCorrector, PhraseTable};
use spangec::esd::{train_tagger, DecodeConfig, TaggerModel};
use spangec::eval::{
    edit_counts, efficiency_report, tag_counts, Counts, EfficiencyReport, Prf, SentenceSteps,
};
use spangec::pipeline::{run_sentence, OracleDetector, TaggerDetector};
use spangec::synth::{BigramLanguage, Script};
use spangec::TokenSeq;

use crate::config::{OutputFormat, PipelineConfig};
use crate::error::CliError;
use crate::io::{create_output, parse_pair, parse_sentence, write_err, LineSource};

type Result<T> = std::result::Result<T, CliError>;

fn write_line(out: &mut dyn Write, line: &str) -> Result<()> {
    out.write_all(line.as_bytes()).map_err(write_err)?;
    out.write_all(b"\n").map_err(write_err)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report types serialize")
}

fn parse_pairs(src: &LineSource, chunk: &[(usize, String)]) -> Result<Vec<(TokenSeq, TokenSeq)>> {
    chunk
        .iter()
        .map(|(n, line)| parse_pair(src.path(), *n, line))
        .collect()
}

fn gold_correction(edits: &spangec::SpanList) -> CorrectionOutput {
    CorrectionOutput::new(
        edits
            .iter()
            .enumerate()
            .map(|(i, e)| (i + 1, e.replacement.clone()))
            .collect(),
    )
}

/// An annotation record plus the replacement text of each span.
#[derive(Serialize)]
struct ExtractRecord {
    #[serde(flatten)]
    record: AnnotationRecord,
    replacements: Vec<String>,
}

pub fn extract(input: &Path, output: Option<&Path>, cfg: &PipelineConfig) -> Result<()> {
    let mut src = LineSource::open(input)?;
    let mut out = create_output(output)?;
    let gap = cfg.decode.merge_gap;
    loop {
        let chunk = src.next_chunk()?;
        if chunk.is_empty() {
            break;
        }
        let pairs = parse_pairs(&src, &chunk)?;
        let records = batch::map(&pairs, |_, (s, t)| {
            let edits = merge_edits(&edits_between(s, t), s, gap);
            annotate_edits(s, &edits).map(|a| ExtractRecord {
                record: AnnotationRecord::new(&a, Some(&gold_correction(&edits))),
                replacements: edits.iter().map(|e| e.replacement.join()).collect(),
            })
        });
        for ((n, _), rec) in chunk.iter().zip(records) {
            let rec = rec.map_err(|e| CliError::at_line(src.path(), *n, e))?;
            let line = match cfg.format {
                OutputFormat::Json => to_json(&rec),
                OutputFormat::Tsv => format!(
                    "{}\t{}",
                    rec.record.rendered,
                    rec.record.correction.unwrap_or_default()
                ),
                OutputFormat::Text => rec.record.rendered,
            };
            write_line(&mut out, &line)?;
        }
    }
    out.flush().map_err(write_err)
}

pub fn make_data(input: &Path, esd_out: &Path, esc_out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let mut src = LineSource::open(input)?;
    let mut esd = create_output(Some(esd_out))?;
    let mut esc = create_output(Some(esc_out))?;
    let mut base = 0usize;
    let mut sampled_total = 0usize;
    loop {
        let chunk = src.next_chunk()?;
        if chunk.is_empty() {
            break;
        }
        let pairs = parse_pairs(&src, &chunk)?;
        let made = batch::map(&pairs, |i, (s, t)| {
            let mut rng = sentence_rng(cfg.seed, base + i);
            let esd = make_esd_instance(s, t);
            make_esc_mixed(s, t, &cfg.spans, cfg.sampled_ratio, &mut rng)
                .map(|(e, sampled)| (esd, e, sampled))
        });
        for ((n, _), item) in chunk.iter().zip(made) {
            let (esd_inst, esc_inst, sampled) = item.map_err(|e| CliError::at_line(src.path(), *n, e))?;
            sampled_total += usize::from(sampled);
            write_line(&mut esd, &to_json(&esd_inst))?;
            let rec = AnnotationRecord::new(&esc_inst.annotated, Some(&esc_inst.correction));
            write_line(&mut esc, &to_json(&rec))?;
        }
        base += chunk.len();
    }
    log::info!("wrote {base} detector and {base} corrector instances ({sampled_total} sampled)");
    esd.flush().map_err(write_err)?;
    esc.flush().map_err(write_err)
}

fn read_vocab(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let set: BTreeSet<String> = text.split_whitespace().map(str::to_string).collect();
    Ok(set.into_iter().collect())
}

fn corpus_vocab(input: &Path) -> Result<Vec<String>> {
    let mut src = LineSource::open(input)?;
    let mut set = BTreeSet::new();
    loop {
        let chunk = src.next_chunk()?;
        if chunk.is_empty() {
            break;
        }
        for (n, line) in &chunk {
            set.extend(parse_sentence(src.path(), *n, line)?.into_inner());
        }
    }
    Ok(set.into_iter().collect())
}

pub fn corrupt_cmd(
    input: &Path,
    output: Option<&Path>,
    vocab: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<()> {
    if input.as_os_str() == "-" && vocab.is_none() {
        return Err(CliError::Usage(
            "reading stdin needs --vocab, the corpus vocabulary takes a first pass".into(),
        ));
    }
    let vocab = match vocab {
        Some(p) => read_vocab(p)?,
        None => corpus_vocab(input)?,
    };
    let corrupt_cfg = cfg.corrupt_config(vocab);
    let mut src = LineSource::open(input)?;
    let mut out = create_output(output)?;
    let mut base = 0usize;
    loop {
        let chunk = src.next_chunk()?;
        if chunk.is_empty() {
            break;
        }
        let clean: Vec<TokenSeq> = chunk
            .iter()
            .map(|(n, line)| parse_sentence(src.path(), *n, line))
            .collect::<Result<_>>()?;
        let noisy = batch::map(&clean, |i, s| {
            corrupt(s, &corrupt_cfg, &mut sentence_rng(cfg.seed, base + i))
        });
        for (n, c) in noisy.iter().zip(&clean) {
            write_line(&mut out, &format!("{}\t{}", n.join(), c.join()))?;
        }
        base += chunk.len();
    }
    out.flush().map_err(write_err)
}

fn read_esd_instances(input: &Path) -> Result<Vec<EsdInstance>> {
    let mut src = LineSource::open(input)?;
    let mut all = Vec::new();
    loop {
        let chunk = src.next_chunk()?;
        if chunk.is_empty() {
            break;
        }
        for (n, line) in chunk {
            if line.trim().is_empty() {
                continue;
            }
            let inst: EsdInstance =
                serde_json::from_str(&line).map_err(|e| CliError::at_line(src.path(), n, e))?;
            all.push(inst);
        }
    }
    Ok(all)
}

pub fn train_esd(input: &Path, output: &Path, cfg: &PipelineConfig) -> Result<()> {
    let instances = read_esd_instances(input)?;
    let model = train_tagger(&instances, cfg.epochs, cfg.seed).map_err(CliError::data)?;
    let mut out = create_output(Some(output))?;
    model.write_to(&mut out).map_err(write_err)?;
    out.flush().map_err(write_err)
}

fn read_esc_instances(input: &Path) -> Result<Vec<EscInstance>> {
    let mut src = LineSource::open(input)?;
    let mut all = Vec::new();
    loop {
        let chunk = src.next_chunk()?;
        if chunk.is_empty() {
            break;
        }
        for (n, line) in chunk {
            if line.trim().is_empty() {
                continue;
            }
            let rec: AnnotationRecord =
                serde_json::from_str(&line).map_err(|e| CliError::at_line(src.path(), n, e))?;
            let (annotated, correction) = rec.decode().map_err(|e| CliError::at_line(src.path(), n, e))?;
            let correction =
                correction.ok_or_else(|| CliError::at_line(src.path(), n, "record has no correction"))?;
            all.push(EscInstance {
                annotated,
                correction,
            });
        }
    }
    Ok(all)
}

pub fn train_esc(input: &Path, output: &Path) -> Result<()> {
    let instances = read_esc_instances(input)?;
    let table = train_corrector(&instances).map_err(CliError::data)?;
    let mut out = create_output(Some(output))?;
    table.write_jsonl(&mut out).map_err(write_err)?;
    out.flush().map_err(write_err)
}

pub const ORACLE: &str = "oracle";

pub fn load_tagger(path: &Path) -> Result<TaggerModel> {
    let bytes = fs::read(path).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?;
    TaggerModel::from_bytes(&bytes).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))
}

pub fn load_phrase_table(path: &Path) -> Result<PhraseTable> {
    let f = fs::File::open(path).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?;
    PhraseTable::read_jsonl(BufReader::new(f))
        .map_err(|e| CliError::Model(format!("{}: {e}", path.display())))
}

enum DetectorChoice {
    Tagger(TaggerModel),
    Oracle,
}

enum CorrectorChoice {
    Table(PhraseTable),
    Oracle,
}

pub struct RunArgs<'a> {
    pub input: &'a Path,
    pub esd_model: &'a Path,
    pub esc_model: &'a Path,
    pub gold: Option<&'a Path>,
    pub output: Option<&'a Path>,
    pub report: Option<&'a Path>,
}

pub fn run(args: &RunArgs<'_>, cfg: &PipelineConfig) -> Result<()> {
    let detector = if args.esd_model.as_os_str() == ORACLE {
        DetectorChoice::Oracle
    } else {
        DetectorChoice::Tagger(load_tagger(args.esd_model)?)
    };
    let corrector = if args.esc_model.as_os_str() == ORACLE {
        CorrectorChoice::Oracle
    } else {
        CorrectorChoice::Table(load_phrase_table(args.esc_model)?)
    };
    let needs_gold =
        matches!(detector, DetectorChoice::Oracle) || matches!(corrector, CorrectorChoice::Oracle);
    if needs_gold && args.gold.is_none() {
        return Err(CliError::Usage("oracle models need --gold".into()));
    }
    let mut src = LineSource::open(args.input)?;
    let mut gold_src = args.gold.map(LineSource::open).transpose()?;
    let mut out = create_output(args.output)?;
    let mut steps: Vec<SentenceSteps> = Vec::new();
    loop {
        let chunk = src.next_chunk()?;
        let gold_chunk = match gold_src.as_mut() {
            Some(g) => Some(g.next_chunk()?),
            None => None,
        };
        if let Some(g) = &gold_chunk {
            if g.len() != chunk.len() {
                return Err(CliError::data("input and --gold have different line counts"));
            }
        }
        if chunk.is_empty() {
            break;
        }
        let sources: Vec<TokenSeq> = chunk
            .iter()
            .map(|(n, l)| parse_sentence(src.path(), *n, l))
            .collect::<Result<_>>()?;
        let golds: Option<Vec<TokenSeq>> = match (&gold_chunk, &gold_src) {
            (Some(g), Some(gs)) => Some(
                g.iter()
                    .map(|(n, l)| parse_sentence(gs.path(), *n, l))
                    .collect::<Result<_>>()?,
            ),
            _ => None,
        };
        let outcomes = batch::map(&sources, |i, s| {
            let gold = golds.as_ref().map(|g| &g[i]);
            let oracle_det;
            let tagger_det;
            let det: &dyn spangec::pipeline::Detector = match &detector {
                DetectorChoice::Oracle => {
                    oracle_det = OracleDetector::new(s, gold.expect("gold checked"));
                    &oracle_det
                }
                DetectorChoice::Tagger(m) => {
                    tagger_det = TaggerDetector {
                        model: m,
                        decode: cfg.decode,
                    };
                    &tagger_det
                }
            };
            let oracle_corr;
            let corr: &dyn spangec::Corrector = match &corrector {
                CorrectorChoice::Oracle => {
                    oracle_corr = OracleCorrector::new(gold.expect("gold checked").clone());
                    &oracle_corr
                }
                CorrectorChoice::Table(t) => t,
            };
            run_sentence(i, s, det, corr, cfg.missing_span, gold)
        });
        for ((n, _), outcome) in chunk.iter().zip(outcomes) {
            let outcome = outcome.map_err(|e| CliError::at_line(src.path(), *n, e))?;
            write_line(&mut out, &outcome.output.join())?;
            steps.push(outcome.steps);
        }
    }
    out.flush().map_err(write_err)?;
    let report = efficiency_report(&steps);
    log::info!(
        "{} of {} sentences flagged, step ratio {:.3}",
        report.n_flagged,
        report.n_sentences,
        report.ratio
    );
    let json = serde_json::to_string_pretty(&report).expect("serializable");
    match args.report {
        Some(p) => fs::write(p, json + "\n").map_err(|e| CliError::io(p, e)),
        None => {
            eprintln!("{json}");
            Ok(())
        }
    }
}

pub fn eval(
    source: &Path,
    hypothesis: &Path,
    gold: &Path,
    output: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<()> {
    let mut files = [
        LineSource::open(source)?,
        LineSource::open(hypothesis)?,
        LineSource::open(gold)?,
    ];
    let mut counts = Counts::default();
    loop {
        let mut chunks = Vec::with_capacity(3);
        for f in files.iter_mut() {
            let chunk = f.next_chunk()?;
            let parsed: Vec<TokenSeq> = chunk
                .iter()
                .map(|(n, l)| parse_sentence(f.path(), *n, l))
                .collect::<Result<_>>()?;
            chunks.push(parsed);
        }
        if chunks.iter().any(|c| c.len() != chunks[0].len()) {
            return Err(CliError::data(
                "source, hypothesis and gold have different line counts",
            ));
        }
        if chunks[0].is_empty() {
            break;
        }
        counts += batch::map(&chunks[0], |i, s| edit_counts(s, &chunks[1][i], &chunks[2][i]))
            .into_iter()
            .sum();
    }
    let prf = Prf::from(counts);
    let mut out = create_output(output)?;
    let text = match cfg.format {
        OutputFormat::Json => to_json(&prf),
        OutputFormat::Tsv | OutputFormat::Text => prf.to_string(),
    };
    write_line(&mut out, &text)?;
    out.flush().map_err(write_err)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    threshold: f64,
    detection: Prf,
    correction: Option<Prf>,
    efficiency: Option<EfficiencyReport>,
}

pub fn sweep(
    input: &Path,
    esd_model: &Path,
    esc_model: Option<&Path>,
    thresholds: &[f64],
    output: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<()> {
    if let Some(&t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::Usage(format!("threshold {t} is outside [0, 1]")));
    }
    let model = load_tagger(esd_model)?;
    let table = esc_model.map(load_phrase_table).transpose()?;
    let k = thresholds.len();
    let mut det = vec![Counts::default(); k];
    let mut corr = vec![Counts::default(); k];
    let mut steps: Vec<Vec<SentenceSteps>> = vec![Vec::new(); k];
    let mut src = LineSource::open(input)?;
    loop {
        let chunk = src.next_chunk()?;
        if chunk.is_empty() {
            break;
        }
        let pairs = parse_pairs(&src, &chunk)?;
        let per_sentence = batch::map(&pairs, |i, (s, g)| {
            let gold_tags = make_esd_instance(s, g).tags;
            let probs = model.predict_probs(s);
            thresholds
                .iter()
                .map(|&th| {
                    let pred: Vec<u8> = probs.0.iter().map(|&p| u8::from(p >= th)).collect();
                    let d = tag_counts(&pred, &gold_tags);
                    let c = table.as_ref().map(|t| {
                        let detector = TaggerDetector {
                            model: &model,
                            decode: DecodeConfig {
                                threshold: th,
                                merge_gap: cfg.decode.merge_gap,
                            },
                        };
                        run_sentence(i, s, &detector, t, cfg.missing_span, Some(g))
                            .map(|o| (edit_counts(s, &o.output, g), o.steps))
                    });
                    (d, c)
                })
                .collect::<Vec<_>>()
        });
        for ((n, _), rows) in chunk.iter().zip(per_sentence) {
            for (j, (d, c)) in rows.into_iter().enumerate() {
                det[j] += d;
                if let Some(c) = c {
                    let (c, s) = c.map_err(|e| CliError::at_line(src.path(), *n, e))?;
                    corr[j] += c;
                    steps[j].push(s);
                }
            }
        }
    }
    let rows: Vec<SweepRow> = (0..k)
        .map(|j| SweepRow {
            threshold: thresholds[j],
            detection: det[j].into(),
            correction: table.as_ref().map(|_| corr[j].into()),
            efficiency: table.as_ref().map(|_| efficiency_report(&steps[j])),
        })
        .collect();
    let mut out = create_output(output)?;
    match cfg.format {
        OutputFormat::Json => write_line(&mut out, &to_json(&rows))?,
        OutputFormat::Tsv => {
            write_line(
                &mut out,
                "threshold\tP\tR\tF0.5\tcorr_P\tcorr_R\tcorr_F0.5\tstep_ratio",
            )?;
            for r in &rows {
                let mut line = format!("{}\t{}", r.threshold, r.detection.table_row());
                if let (Some(c), Some(e)) = (&r.correction, &r.efficiency) {
                    line += &format!("\t{}\t{:.3}", c.table_row(), e.ratio);
                }
                write_line(&mut out, &line)?;
            }
        }
        OutputFormat::Text => {
            let pct = |v: f64| format!("{:.1}", 100.0 * v);
            let row = |name: &str, f: &dyn Fn(&SweepRow) -> String| {
                std::iter::once(name.to_string())
                    .chain(rows.iter().map(f))
                    .collect::<Vec<_>>()
                    .join("\t")
            };
            write_line(&mut out, &row("threshold", &|r| r.threshold.to_string()))?;
            write_line(&mut out, &row("P", &|r| pct(r.detection.precision)))?;
            write_line(&mut out, &row("R", &|r| pct(r.detection.recall)))?;
            write_line(&mut out, &row("F0.5", &|r| pct(r.detection.f0_5)))?;
            if table.is_some() {
                write_line(
                    &mut out,
                    &row("corr P", &|r| pct(r.correction.unwrap().precision)),
                )?;
                write_line(&mut out, &row("corr R", &|r| pct(r.correction.unwrap().recall)))?;
                write_line(&mut out, &row("corr F0.5", &|r| pct(r.correction.unwrap().f0_5)))?;
                write_line(
                    &mut out,
                    &row("step ratio", &|r| format!("{:.3}", r.efficiency.unwrap().ratio)),
                )?;
            }
        }
    }
    out.flush().map_err(write_err)
}

pub struct SynthArgs {
    pub sentences: usize,
    pub vocab_size: usize,
    pub successors: usize,
    pub script: Script,
    pub min_len: usize,
    pub max_len: usize,
    pub output: Option<PathBuf>,
}

pub fn synth(args: &SynthArgs, cfg: &PipelineConfig) -> Result<()> {
    if args.vocab_size < 2 || args.successors < 1 || args.min_len < 1 || args.min_len > args.max_len {
        return Err(CliError::Usage(
            "need vocab-size >= 2, successors >= 1 and 1 <= min-len <= max-len".into(),
        ));
    }
    let lang = BigramLanguage::new(args.script, args.vocab_size, args.successors, cfg.seed)
        .with_lengths(args.min_len, args.max_len);
    let mut out = create_output(args.output.as_deref())?;
    for start in (0..args.sentences).step_by(crate::io::CHUNK_LINES) {
        let end = (start + crate::io::CHUNK_LINES).min(args.sentences);
        let lines = batch::map_range(end - start, |i| {
            lang.sentence(&mut sentence_rng(cfg.seed.wrapping_add(1), start + i))
                .join()
        });
        for l in lines {
            write_line(&mut out, &l)?;
        }
    }
    out.flush().map_err(write_err)
}
