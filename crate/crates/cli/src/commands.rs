use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};
use seq2lpc::bench::{bench_extract, bench_model, BenchReport, BenchStage};
use seq2lpc::io::{
    format_alignment_grid, load_model, read_wav, save_model, FrameFile, FrameKind, LpcFile,
    LpcRecord, SymbolTable,
};
use seq2lpc::lp::{lp_from_cepstrum, lp_from_mel};
use seq2lpc::model::{Model, ModelConfig, SymbolSequence};
use seq2lpc::signal::{BandLayout, FeatureExtractor, FrameSpec, MelFrame, N_CEPSTRA};
use seq2lpc::training::{evaluate, toy_corpus, train, Corpus, ToyCorpusSpec, TrainConfig};
use seq2lpc::{Error, Result};

use crate::{BenchArgs, Cli, Command, ExtractArgs, LpcArgs, SynthArgs, TrainArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let threads = cli.threads as usize;
    match &cli.command {
        Command::Extract(a) => extract(a, threads),
        Command::Lpc(a) => lpc(a),
        Command::TrainToy(a) => train_toy(a),
        Command::Synth(a) => synth(a),
        Command::BenchRtf(a) => bench(a, threads),
    }
}

fn emit(v: Value) {
    println!("{v}");
}

fn extract(a: &ExtractArgs, threads: usize) -> Result<()> {
    let clip = read_wav::<f64>(&a.input)?;
    let spec = FrameSpec::default();
    let extractor = FeatureExtractor::<f64>::new(&spec, &BandLayout::lpcnet_22k(&spec))?;
    let (track, mel) = extractor.run(&clip, a.mel.is_some(), threads)?;
    let index = a.pitch_index.then_some(track.pitch_index.as_slice());
    FrameFile::from_features(&track.frames, index)?.write(&a.output)?;
    if let Some(path) = &a.mel {
        FrameFile::from_mel(&mel)?.write(path)?;
    }
    eprintln!(
        "extracted {} frames ({:.2} s){}",
        track.len(),
        clip.duration_seconds(),
        if track.all_unvoiced { ", no voiced frames" } else { "" }
    );
    emit(json!({
        "command": "extract",
        "frames": track.len(),
        "audio_seconds": clip.duration_seconds(),
        "all_unvoiced": track.all_unvoiced,
        "lpcf": a.output,
        "melf": a.mel,
    }));
    Ok(())
}

fn lpc(a: &LpcArgs) -> Result<()> {
    let bytes = fs::read(&a.input)?;
    let records: Vec<LpcRecord> = match bytes.get(..4) {
        Some(b"LPCF") => {
            let file = FrameFile::decode(FrameKind::Lpcf, &bytes)?;
            let layout = BandLayout::lpcnet_22k(&FrameSpec::default());
            (0..file.n_frames())
                .map(|i| {
                    let mut c = [0.0f64; N_CEPSTRA];
                    for (d, &s) in c.iter_mut().zip(file.frame(i)) {
                        *d = s as f64;
                    }
                    lp_from_cepstrum(&c, &layout, a.order).map(|f| LpcRecord::from(&f))
                })
                .collect::<Result<_>>()?
        }
        Some(b"MELF") => {
            let file = FrameFile::decode(FrameKind::Melf, &bytes)?;
            (0..file.n_frames())
                .map(|i| {
                    let v: Vec<f64> = file.frame(i).iter().map(|&s| s as f64).collect();
                    lp_from_mel(&MelFrame::new(&v)?, a.order).map(|f| LpcRecord::from(&f))
                })
                .collect::<Result<_>>()?
        }
        _ => {
            return Err(Error::Format {
                kind: "feature",
                detail: format!("{} is neither LPCF nor MELF", a.input.display()),
            })
        }
    };
    let n = records.len();
    LpcFile::new(a.order, records)?.write(&a.output)?;
    eprintln!("estimated {n} order-{} LP filters", a.order);
    emit(json!({"command": "lpc", "frames": n, "order": a.order, "lpca": a.output}));
    Ok(())
}

/// Symbol names used for the toy corpus; id 0 is the unvoiced symbol.
pub fn toy_symbol_table(vocab: usize) -> Result<SymbolTable> {
    let names = (0..vocab)
        .map(|i| if i == 0 { "sil".to_string() } else { format!("p{i}") })
        .collect();
    SymbolTable::new(names)
}

fn write_corpus(dir: &Path, corpus: &Corpus, table: &SymbolTable) -> Result<Value> {
    let mut utts = Vec::new();
    for (i, u) in corpus.utterances.iter().enumerate() {
        let name = format!("utt{i}");
        let text = table.decode(u.symbols.ids())?;
        fs::write(dir.join(format!("{name}.txt")), format!("{text}\n"))?;
        FrameFile::from_features(&u.feature_frames()?, None)?.write(&dir.join(format!("{name}.lpcf")))?;
        let mel: Vec<MelFrame<f64>> = (0..u.frames())
            .map(|t| MelFrame::new(u.mel.row_slice(t)))
            .collect::<Result<_>>()?;
        FrameFile::from_mel(&mel)?.write(&dir.join(format!("{name}.melf")))?;
        utts.push(json!({
            "name": name,
            "text": text,
            "frames": u.frames(),
            "prosody": [u.prosody.log_duration, u.prosody.log_pitch_span],
            "raw_prosody": [u.raw_prosody.log_duration, u.raw_prosody.log_pitch_span],
        }));
    }
    let manifest = json!({
        "vocab": corpus.vocab,
        "prosody_mean": corpus.stats.mean,
        "prosody_std": corpus.stats.std,
        "utterances": utts,
    });
    fs::write(dir.join("corpus.json"), format!("{manifest:#}\n"))?;
    Ok(manifest)
}

fn train_toy(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_toml(&fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = a.prev_alignment {
        cfg.prev_alignment = p;
    }
    cfg.validate()?;
    fs::create_dir_all(&a.out)?;

    let spec = ToyCorpusSpec::default();
    let corpus = toy_corpus(&spec, a.corpus_seed)?;
    let table = toy_symbol_table(spec.vocab)?;
    fs::write(a.out.join("symbols.txt"), table.to_text())?;
    write_corpus(&a.out, &corpus, &table)?;
    fs::write(a.out.join("train.toml"), cfg.to_toml())?;

    let model = Model::new(cfg.apply(ModelConfig::toy(spec.vocab)), cfg.seed)?;
    fs::write(a.out.join("model.toml"), model.config().to_toml())?;
    let t0 = Instant::now();
    let outcome = train(model, &corpus, &cfg, |step, loss| {
        if a.progress > 0 && step % a.progress == 0 {
            eprintln!("step {step:>5}  loss {:.5}  ({:.0} s)", loss.total, t0.elapsed().as_secs_f64());
        }
    })?;
    let seconds = t0.elapsed().as_secs_f64();
    fs::write(a.out.join("loss.csv"), outcome.loss_csv())?;
    save_model(&a.out.join("weights.s2lw"), &outcome.model)?;
    let eval = evaluate(&outcome.model, &corpus)?;

    let step10 = outcome.log.get(9).map(|l| l.total);
    let last = outcome.log.last().map(|l| l.total);
    if let Some(step) = outcome.aborted_at {
        eprintln!("training stopped at step {step}: non-finite loss");
    }
    eprintln!(
        "trained {} steps in {seconds:.1} s; final loss {:.5}, mean structure fit {:.3}",
        outcome.log.len(),
        last.unwrap_or(f64::NAN),
        eval.mean_structure_fit
    );
    emit(json!({
        "command": "train-toy",
        "steps": outcome.log.len(),
        "aborted_at": outcome.aborted_at,
        "loss_step10": step10,
        "loss_final": last,
        "eval_loss": eval.loss.total,
        "mean_structure_fit": eval.mean_structure_fit,
        "seconds": seconds,
        "out": a.out,
    }));
    if outcome.aborted_at.is_some() {
        return Err(Error::InvalidInput("training diverged".into()));
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let model = load_model(&a.weights)?;
    let table = SymbolTable::read(&a.symbols)?;
    let text = match (&a.input, &a.text) {
        (Some(p), _) => fs::read_to_string(p)?,
        (None, Some(t)) => t.clone(),
        (None, None) => return Err(Error::InvalidInput("no transcript given".into())),
    };
    let symbols = SymbolSequence::new(table.encode(&text)?, model.config().vocab)?;
    let out = model.synthesize(&symbols, a.prosody, a.max_frames)?;
    FrameFile::from_features(&out.feature_frames()?, None)?.write(&a.out)?;
    if let Some(p) = &a.mel {
        let mel: Vec<MelFrame<f64>> = (0..out.frames())
            .map(|t| MelFrame::new(out.mel.row_slice(t)))
            .collect::<Result<_>>()?;
        FrameFile::from_mel(&mel)?.write(p)?;
    }
    if let Some(p) = &a.dump_alignment {
        fs::write(p, format_alignment_grid(&out.alignment))?;
    }
    eprintln!(
        "synthesized {} frames at prosody ({}, {}){}",
        out.frames(),
        a.prosody.0,
        a.prosody.1,
        if out.truncated { ", hit --max-frames before the stop flag" } else { "" }
    );
    emit(json!({
        "command": "synth",
        "frames": out.frames(),
        "symbols": symbols.len(),
        "prosody": [a.prosody.0, a.prosody.1],
        "stop_step": out.stop_step,
        "truncated": out.truncated,
        "lpcf": a.out,
    }));
    Ok(())
}

fn bench(a: &BenchArgs, threads: usize) -> Result<()> {
    let report: BenchReport = match a.stage {
        BenchStage::Extract => {
            let path = a
                .input
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("extract stage needs --input <wav>".into()))?;
            let clip = read_wav::<f64>(path)?;
            if clip.duration_seconds() < 10.0 {
                eprintln!("note: input is shorter than 10 s; timings will be noisy");
            }
            bench_extract(&clip, threads, a.runs)?
        }
        stage => {
            let path = a.weights.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!("{stage} stage needs a trained model (--weights)"))
            })?;
            let model = load_model(path)?;
            let vocab = model.config().vocab;
            let ids = match (&a.symbols, &a.text) {
                (Some(s), Some(t)) => SymbolTable::read(s)?.encode(t)?,
                _ => (1..vocab.max(2)).collect(),
            };
            let symbols = SymbolSequence::new(ids, vocab)?;
            bench_model(&model, &symbols, stage, a.max_frames, a.runs)?
        }
    };
    eprintln!(
        "{}: rtf {:.4} ({:.4} s for {:.2} s of audio, median of {}, {} thread(s))\n  {}\n  {}",
        report.stage,
        report.rtf,
        report.wall_seconds,
        report.audio_seconds,
        report.runs.len(),
        report.threads,
        report.hardware,
        report.reference
    );
    let mut v = serde_json::to_value(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    v["command"] = json!("bench-rtf");
    emit(v);
    Ok(())
}
