use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use vidprop::classifier::OracleClassifier;
use vidprop::config::ClassifierSpec;
use vidprop::eval::{
    cluster_purity, detection_metrics, recall_at, temporal_consistency, GroundTruth,
};
use vidprop::image::write_pgm;
use vidprop::pipeline::{
    cluster_stream, detect_stream, propose as run_propose, ClusterRecord, Video,
};
use vidprop::propagation::{Classifier, Detection};
use vidprop::proposals::Proposal;
use vidprop::segmentation::{foreground_prior, prior_mask};
use vidprop::synth::{moving_objects_suite, render, SuiteOptions, SyntheticSpec};
use vidprop::{BBox, PipelineConfig};

use crate::classifier::CommandClassifier;
use crate::{CliError, EvalArgs, EvalMode, InputArgs, Result, RunArgs, SegmentArgs, SynthArgs};

fn load_video(input: &InputArgs, cfg: &PipelineConfig) -> Result<Video> {
    Ok(Video::load(
        &input.frames,
        input.flow.as_deref(),
        input.edges.as_deref(),
        cfg.resize,
    )?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes one JSON object per line to `out/name`, or to stdout without `out`.
fn write_jsonl<T: Serialize>(out: Option<&Path>, name: &str, records: &[T]) -> Result<()> {
    let (path, sink): (_, Box<dyn Write>) = match out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join(name);
            let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            (path, Box::new(f))
        }
        None => (
            Path::new("<stdout>").to_path_buf(),
            Box::new(std::io::stdout().lock()),
        ),
    };
    let mut w = BufWriter::new(sink);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(vidprop::Error::from)?;
        w.write_all(b"\n").map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(vidprop::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(vidprop::Error::from)?);
    }
    Ok(out)
}

pub fn propose(args: &RunArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let video = load_video(&args.input, &cfg)?;
    let props = run_propose(&video, &cfg)?;
    log::info!("{} proposals over {} frames", props.len(), video.len());
    write_jsonl(args.out.as_deref(), "proposals.jsonl", &props)
}

pub fn cluster(args: &RunArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let video = load_video(&args.input, &cfg)?;
    let run = cluster_stream(&video, &cfg)?;
    log::info!("{} global clusters", run.clusters_created);
    write_jsonl(args.out.as_deref(), "clusters.jsonl", &run.records)?;
    if let Some(out) = &args.out {
        write_jsonl(Some(out), "associations.jsonl", &run.associations)?;
    }
    Ok(())
}

pub fn detect(args: &RunArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let video = load_video(&args.input, &cfg)?;
    let mut classifier: Box<dyn Classifier> = match &cfg.classifier {
        ClassifierSpec::Oracle | ClassifierSpec::Always => Box::new(OracleClassifier::new()),
        ClassifierSpec::Command(path) => Box::new(CommandClassifier::spawn(path)?),
    };
    let run = detect_stream(&video, &cfg, &mut classifier)?;
    drop(classifier);
    write_jsonl(args.out.as_deref(), "detections.jsonl", &run.detections)?;
    match &args.out {
        Some(out) => {
            write_json(&out.join("stats.json"), &run.stats)?;
            write_jsonl(Some(out), "calls.jsonl", &run.calls)?;
        }
        None => eprintln!(
            "{}",
            serde_json::to_string(&run.stats).map_err(vidprop::Error::from)?
        ),
    }
    match run.aborted {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct MaskRecord {
    frame: usize,
    global_id: u64,
    path: String,
    area: usize,
}

pub fn segment_prior(args: &SegmentArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let video = load_video(&args.input, &cfg)?;
    let records: Vec<ClusterRecord> = match &args.clusters {
        Some(path) => read_jsonl(path)?,
        None => cluster_stream(&video, &cfg)?.records,
    };
    let (w, h) = video.original_dims;
    let mut groups: BTreeMap<(usize, u64), Vec<BBox>> = BTreeMap::new();
    for r in &records {
        if r.frame >= video.len() {
            return Err(vidprop::Error::EvalMismatch(format!(
                "cluster record for frame {} of a {}-frame video",
                r.frame,
                video.len()
            ))
            .into());
        }
        groups
            .entry((r.frame, r.global_id))
            .or_default()
            .push(r.bbox);
    }
    let mask_dir = args.out.join("masks");
    create_dir(&mask_dir)?;
    let mut index = Vec::with_capacity(groups.len());
    for ((frame, gid), boxes) in &groups {
        let prior = foreground_prior(boxes, w, h)?;
        let mask = prior_mask(&prior, cfg.mask_threshold, true)?;
        let name = format!("mask_{frame:05}_{gid}.pgm");
        write_pgm(&mask_dir.join(&name), &mask)?;
        index.push(MaskRecord {
            frame: *frame,
            global_id: *gid,
            path: format!("masks/{name}"),
            area: mask.support(),
        });
    }
    write_jsonl(Some(&args.out), "masks.jsonl", &index)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let specs: Vec<(Option<String>, SyntheticSpec)> = match (&args.spec, args.suite) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let spec = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            vec![(None, spec)]
        }
        (None, Some(n)) => moving_objects_suite(&SuiteOptions {
            videos: n,
            seed: args.seed,
            ..SuiteOptions::default()
        })?
        .into_iter()
        .enumerate()
        .map(|(i, s)| (Some(format!("video_{i:03}")), s))
        .collect(),
        (None, None) => {
            return Err(CliError::Config(
                "either --spec or --suite is required".into(),
            ))
        }
    };
    for (sub, spec) in &specs {
        let dir = match sub {
            Some(s) => args.out.join(s),
            None => args.out.clone(),
        };
        create_dir(&dir)?;
        render(spec)?.write(&dir)?;
        write_json(&dir.join("spec.json"), spec)?;
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let gt = GroundTruth::load(&args.gt)?;
    let metrics = match args.mode {
        EvalMode::Recall => {
            let props: Vec<Proposal> = read_jsonl(&args.predictions)?;
            serde_json::to_value(recall_at(&props, &gt, args.n)?)
        }
        EvalMode::Purity => {
            let records: Vec<ClusterRecord> = read_jsonl(&args.predictions)?;
            serde_json::to_value(cluster_purity(&records, &gt)?)
        }
        EvalMode::Consistency => {
            let records: Vec<ClusterRecord> = read_jsonl(&args.predictions)?;
            serde_json::to_value(temporal_consistency(&records, &gt)?)
        }
        EvalMode::Detection => {
            let dets: Vec<Detection> = read_jsonl(&args.predictions)?;
            serde_json::to_value(detection_metrics(&dets, &gt)?)
        }
    }
    .map_err(vidprop::Error::from)?;
    let mut text = serde_json::to_string_pretty(&metrics).map_err(vidprop::Error::from)?;
    text.push('\n');
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io("<stdout>", e))?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&out.join("metrics.json"), &metrics)?;
    }
    Ok(())
}
