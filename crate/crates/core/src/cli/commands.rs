use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use voice2face_tensor::suite::{layer_suite, SUITE_STEP, SUITE_TOLERANCE};

use super::config::RunConfig;
use super::{Cli, Command, EvaluateArgs, GenerateArgs, GlobalArgs, Protocol, SynthArgs, TrainArgs};
use crate::audio::{prepare_voice, read_wav};
use crate::corpus::{
    load_manifest, load_split, prepare_cache, synthesize_corpus, DatasetManifest, LoadOptions, Split, SplitData, TrainingData,
    MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::evaluator::{
    build_trials, export_grids, gender_accuracy, matching_accuracy, specificity_stats, GenderProbe, ProbeConfig, TrialOptions,
};
use crate::face::write_face_png;
use crate::models::{load_checkpoint, save_checkpoint, ModelBundle};
use crate::pipeline::{noise_samples, speech_samples};
use crate::trainer::{final_checkpoint, pretrain_embedder, step_gradient_suite, train, TrainOptions};

pub const CACHE_DIR: &str = "mel_cache";
pub const PRETRAINED_FILE: &str = "pretrained.ckpt";

struct Context<'a> {
    global: &'a GlobalArgs,
    config: RunConfig,
}

impl Context<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.global.output_dir.join(name)
    }

    fn guard(&self, paths: &[PathBuf]) -> Result<()> {
        if self.global.force {
            return Ok(());
        }
        match paths.iter().find(|p| p.exists()) {
            Some(p) => Err(Error::WouldOverwrite(p.clone())),
            None => Ok(()),
        }
    }

    fn manifest_path(&self, command: &str) -> PathBuf {
        self.out(&format!("run_{command}.toml"))
    }

    /// Records the resolved settings so the command can be repeated.
    fn write_run_manifest(&self, command: &str) -> Result<()> {
        let dir = &self.global.output_dir;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text = format!(
            "command = \"{command}\"\ncode_version = \"{}\"\ncorpus_root = {:?}\n\n[config]\n{}",
            env!("CARGO_PKG_VERSION"),
            self.global.corpus_root.display().to_string(),
            indent_config(&self.config.to_toml()?),
        );
        let path = self.manifest_path(command);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn corpus_manifest(&self) -> Result<DatasetManifest> {
        let path = self.global.corpus_root.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::Manifest(format!("no {MANIFEST_FILE} under {}", self.global.corpus_root.display())));
        }
        load_manifest(&path)
    }

    fn load(&self, manifest: &DatasetManifest, split: Split) -> Result<SplitData> {
        let cache = self.global.corpus_root.join(CACHE_DIR);
        let options = LoadOptions {
            vad: self.config.audio.vad(),
            cache_dir: cache.is_dir().then_some(cache),
        };
        load_split(&self.global.corpus_root, manifest, split, &options)
    }
}

/// Nests the config's own tables under `[config]`.
fn indent_config(toml_text: &str) -> String {
    toml_text
        .lines()
        .map(|l| match l.strip_prefix('[') {
            Some(rest) => format!("[config.{rest}"),
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

pub fn execute(cli: &Cli) -> Result<()> {
    let base = match &cli.global.config {
        Some(p) if !p.exists() => return Err(Error::Config(format!("config file {} not found", p.display()))),
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut ctx = Context {
        global: &cli.global,
        config: base.resolve(cli.global.seed)?,
    };
    match &cli.command {
        Command::SynthData(a) => synth_data(&mut ctx, a),
        Command::Prepare => prepare(&ctx),
        Command::Pretrain => pretrain(&ctx),
        Command::Train(a) => train_cmd(&mut ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Evaluate(a) => evaluate(&mut ctx, a),
        Command::Gradcheck => gradcheck(&ctx),
    }
}

fn synth_data(ctx: &mut Context, a: &SynthArgs) -> Result<()> {
    let c = &mut ctx.config.corpus;
    let overrides = [
        (&mut c.identities, a.identities),
        (&mut c.voices_per_identity, a.voices_per_identity),
        (&mut c.faces_per_identity, a.faces_per_identity),
        (&mut c.test_identities, a.test_identities),
        (&mut c.validation_identities, a.validation_identities),
    ];
    for (field, value) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    c.validate()?;
    ctx.guard(&[ctx.out(MANIFEST_FILE), ctx.manifest_path("synth-data")])?;
    let manifest = synthesize_corpus(&ctx.global.output_dir, &ctx.config.corpus)?;
    ctx.write_run_manifest("synth-data")?;
    println!(
        "corpus={} entries={} identities={}",
        ctx.global.output_dir.display(),
        manifest.len(),
        manifest.identity_count()
    );
    Ok(())
}

fn prepare(ctx: &Context) -> Result<()> {
    let manifest = ctx.corpus_manifest()?;
    let cache = ctx.global.corpus_root.join(CACHE_DIR);
    ctx.guard(&[cache.clone(), ctx.manifest_path("prepare")])?;
    let n = prepare_cache(&ctx.global.corpus_root, &manifest, &cache, ctx.config.audio.vad().as_ref())?;
    ctx.write_run_manifest("prepare")?;
    println!("cached={n} dir={}", cache.display());
    Ok(())
}

fn training_data(ctx: &Context) -> Result<TrainingData> {
    let manifest = ctx.corpus_manifest()?;
    let split = ctx.load(&manifest, Split::Train)?;
    TrainingData::new(&split, &manifest.class_map())
}

fn config_json(ctx: &Context) -> Option<serde_json::Value> {
    serde_json::to_value(&ctx.config).ok()
}

fn pretrain(ctx: &Context) -> Result<()> {
    let out = ctx.out(PRETRAINED_FILE);
    ctx.guard(&[out.clone(), ctx.manifest_path("pretrain")])?;
    let data = training_data(ctx)?;
    let arch = ctx.config.model.architecture(data.classes);
    let mut bundle = ModelBundle::<f32>::new(arch, ctx.config.seed)?;
    let report = pretrain_embedder(&mut bundle, &data.voices, &data.voice_labels, &ctx.config.pretrain)?;
    bundle.embedder_frozen = true;
    ctx.write_run_manifest("pretrain")?;
    save_checkpoint(&out, &bundle, config_json(ctx))?;
    println!(
        "speakers={} initial_loss={:.4} final_loss={:.4} train_accuracy={:.4} checkpoint={}",
        report.speakers,
        report.initial_loss(),
        report.final_loss(),
        report.train_accuracy,
        out.display()
    );
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<ModelBundle<f32>> {
    if !path.exists() {
        return Err(Error::Config(format!("checkpoint {} not found", path.display())));
    }
    Ok(load_checkpoint(path)?.0)
}

fn train_cmd(ctx: &mut Context, a: &TrainArgs) -> Result<()> {
    if let Some(n) = a.iterations {
        ctx.config.train.total_iterations = n;
    }
    let dir = ctx.global.output_dir.clone();
    ctx.guard(&[final_checkpoint(&dir), dir.join("run.log"), ctx.manifest_path("train")])?;
    let source = a.checkpoint.clone().unwrap_or_else(|| ctx.out(PRETRAINED_FILE));
    let mut bundle = read_checkpoint(&source)?;
    if !bundle.embedder_frozen {
        warn!("{} holds an embedder that was not pretrained", source.display());
    }
    let data = training_data(ctx)?;
    ctx.write_run_manifest("train")?;
    let options = TrainOptions {
        output_dir: Some(dir.clone()),
        verify_ownership: false,
    };
    let outcome = train(&mut bundle, &data, &ctx.config.train, &options)?;
    if let Some(last) = outcome.reports.last() {
        println!("{last}");
    }
    println!(
        "iterations={} seconds={:.1} checkpoint={}",
        bundle.iteration,
        outcome.seconds,
        final_checkpoint(&dir).display()
    );
    Ok(())
}

fn wav_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(Error::Config(format!("input {} does not exist", input.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no .wav files in {}", input.display())));
    }
    Ok(files)
}

fn generate(ctx: &Context, a: &GenerateArgs) -> Result<()> {
    let inputs = wav_inputs(&a.input)?;
    let outputs: Vec<PathBuf> = inputs
        .iter()
        .map(|p| ctx.out(&format!("{}.png", p.file_stem().unwrap_or_default().to_string_lossy())))
        .collect();
    let mut guarded = outputs.clone();
    guarded.push(ctx.manifest_path("generate"));
    ctx.guard(&guarded)?;
    let bundle = read_checkpoint(&a.checkpoint)?;
    let vad = ctx.config.audio.vad();
    ctx.write_run_manifest("generate")?;
    for (input, output) in inputs.iter().zip(&outputs) {
        let mel = prepare_voice(&read_wav(input)?, vad.as_ref())?;
        write_face_png(output, &bundle.voice_to_face(&mel)?)?;
        println!("{} -> {}", input.display(), output.display());
    }
    Ok(())
}

fn evaluate(ctx: &mut Context, a: &EvaluateArgs) -> Result<()> {
    let name = format!("{:?}", a.protocol).to_lowercase();
    let report_path = ctx.out(&format!("eval_{name}.txt"));
    let mut guarded = vec![report_path.clone(), ctx.manifest_path("evaluate")];
    let grids = matches!(a.protocol, Protocol::Grids | Protocol::All);
    if grids {
        guarded.push(ctx.out("grids"));
    }
    ctx.guard(&guarded)?;
    if let Some(t) = a.trials {
        ctx.config.evaluate.max_trials = t;
    }
    let bundle = read_checkpoint(&a.checkpoint)?;
    let manifest = ctx.corpus_manifest()?;
    let test = ctx.load(&manifest, Split::Test)?;
    ctx.write_run_manifest("evaluate")?;
    let seed = ctx.config.seed;
    let mut lines = Vec::new();
    let wants = |p: Protocol| a.protocol == p || a.protocol == Protocol::All;

    if wants(Protocol::Matching) {
        let trials = build_trials(
            &test,
            &TrialOptions {
                stratified: a.stratified,
                max_trials: (!a.exhaustive).then_some(ctx.config.evaluate.max_trials),
                seed,
            },
        )?;
        lines.push(matching_accuracy(&bundle, &test, &trials)?.to_string());
    }
    if wants(Protocol::Gender) {
        let train_split = ctx.load(&manifest, Split::Train)?;
        let faces: Vec<_> = train_split.faces.iter().map(|f| f.image.clone()).collect();
        let genders: Vec<u8> = train_split.faces.iter().map(|f| f.gender).collect();
        let probe_cfg = ProbeConfig {
            steps: ctx.config.evaluate.probe_steps,
            seed,
            ..ProbeConfig::default()
        };
        let probe = GenderProbe::train(bundle.arch(), &faces, &genders, &probe_cfg)?;
        let test_faces: Vec<_> = test.faces.iter().map(|f| f.image.clone()).collect();
        let test_genders: Vec<u8> = test.faces.iter().map(|f| f.gender).collect();
        let probe_acc = probe.accuracy(&test_faces, &test_genders)?;
        lines.push(probe_acc.to_string());
        let voices: Vec<_> = test.voices.iter().map(|v| v.mel.clone()).collect();
        let voice_genders: Vec<u8> = test.voices.iter().map(|v| v.gender).collect();
        lines.push(gender_accuracy(&bundle, &voices, &voice_genders, &probe, probe_acc.value)?.to_string());
    }
    if wants(Protocol::Specificity) {
        let voices: Vec<_> = test.voices.iter().map(|v| v.mel.clone()).collect();
        let n = ctx.config.evaluate.specificity_samples;
        let report = specificity_stats(&bundle, &speech_samples(&voices, n, seed)?, &noise_samples(n, seed)?)?;
        if let Some(w) = &report.warning {
            warn!("{w}");
        }
        lines.extend(report.lines());
    }
    if grids {
        for p in export_grids(&bundle, &test, &ctx.out("grids"), seed)? {
            lines.push(format!("grid={}", p.display()));
        }
    }
    let text = lines.join("\n") + "\n";
    fs::write(&report_path, &text).map_err(|e| Error::io(&report_path, e))?;
    print!("{text}");
    info!("report written to {}", report_path.display());
    Ok(())
}

fn gradcheck(ctx: &Context) -> Result<()> {
    let path = ctx.out("gradcheck.txt");
    ctx.guard(&[path.clone(), ctx.manifest_path("gradcheck")])?;
    let mut lines = Vec::new();
    let mut failures = 0;
    for e in layer_suite(ctx.config.seed)? {
        failures += usize::from(!e.passes());
        lines.push(format!(
            "check={} max_rel_error={:.3e} pass={}",
            e.name,
            e.report.max_relative_error,
            e.passes()
        ));
    }
    for r in step_gradient_suite(ctx.config.seed, SUITE_STEP)? {
        let pass = r.passes(SUITE_TOLERANCE);
        failures += usize::from(!pass);
        lines.push(format!(
            "check=step_{} max_rel_error={:.3e} coordinates={} kink_crossings={} pass={pass}",
            r.kind.name(),
            r.max_relative_error,
            r.checked,
            r.kink_crossings
        ));
    }
    ctx.write_run_manifest("gradcheck")?;
    let text = lines.join("\n") + "\n";
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    if failures > 0 {
        return Err(Error::Evaluation(format!("{failures} gradient checks exceed {SUITE_TOLERANCE:e}")));
    }
    Ok(())
}
