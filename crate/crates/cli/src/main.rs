//! `scenetext`: label generation, map simulation, decoding, evaluation and
//! visualisation for quadrilateral text detection.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scenetext::io::tensor::{read_prediction_maps, write_label_maps, write_prediction_maps};
use scenetext::io::{detections_from_json, detections_to_json, parse_icdar_gt_bytes, render_svg};
use scenetext::labelgen::{ImageSize, LabelConfig, DEFAULT_SHRINK_RATIO};
use scenetext::losses::gradcheck;
use scenetext::pipeline::bench_nms;
use scenetext::{detect, evaluate, generate_maps, render_oracle_maps, NmsParams, NmsVariant, NoiseModel, PosSensParams, TextInstance};

#[derive(Parser)]
#[command(name = "scenetext", version, about = "Geometry tooling for quadrilateral scene-text detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth maps from an ICDAR-style annotation file.
    Labels {
        #[command(flatten)]
        input: SceneInput,
        /// Output directory for the tensor files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render noisy prediction maps from ground truth.
    Simulate {
        #[command(flatten)]
        input: SceneInput,
        #[arg(long, default_value_t = 0.5)]
        sigma0: f64,
        #[arg(long, default_value_t = 0.05)]
        sigma1: f64,
        #[arg(long = "angle-sigma", default_value_t = 0.0)]
        angle_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode prediction maps into detections.
    Decode {
        /// Directory holding score, geometry and possens tensors.
        #[arg(long)]
        maps: PathBuf,
        #[arg(long, default_value_t = scenetext::DEFAULT_STRIDE)]
        stride: u32,
        #[arg(long, default_value = "pa")]
        nms: NmsVariant,
        #[arg(long = "score-thresh", default_value_t = NmsParams::default().score_thresh)]
        score_thresh: f64,
        #[arg(long = "merge-iou", default_value_t = NmsParams::default().merge_iou)]
        merge_iou: f64,
        #[arg(long = "final-iou", default_value_t = NmsParams::default().final_iou)]
        final_iou: f64,
        #[arg(long, default_value_t = NmsParams::default().epsilon)]
        epsilon: f64,
        /// Output JSON file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score detections against ground truth.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated IoU thresholds.
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        iou: Vec<f64>,
    },
    /// Draw detections, optionally against ground truth, as SVG.
    Render {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Canvas size as HxW.
        #[arg(long, value_parser = parse_size)]
        size: ImageSize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time each NMS variant over a sweep of candidate counts.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,5000,10000")]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Compare analytic loss gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct SceneInput {
    /// Ground-truth file, one quadrilateral per line.
    #[arg(long)]
    gt: PathBuf,
    /// Image size as HxW.
    #[arg(long, value_parser = parse_size)]
    size: ImageSize,
    #[arg(long, default_value_t = scenetext::DEFAULT_STRIDE)]
    stride: u32,
    #[arg(long, default_value_t = DEFAULT_SHRINK_RATIO)]
    shrink: f64,
    #[arg(long, default_value_t = PosSensParams::default().alpha)]
    alpha: f64,
}

impl SceneInput {
    fn load(&self) -> Result<(Vec<TextInstance>, LabelConfig), String> {
        let gt = read_gt(&self.gt)?;
        let cfg = LabelConfig {
            stride: self.stride,
            shrink_ratio: self.shrink,
            possens: PosSensParams { alpha: self.alpha },
        };
        Ok((gt, cfg))
    }
}

fn parse_size(s: &str) -> Result<ImageSize, String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("bad size `{s}`: {e}"));
    Ok(ImageSize::new(parse(h)?, parse(w)?))
}

fn read_gt(path: &Path) -> Result<Vec<TextInstance>, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_icdar_gt_bytes(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_detections(path: &Path) -> Result<Vec<scenetext::QuadBox>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    detections_from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    let err = |e: scenetext::Error| e.to_string();
    match cli.command {
        Command::Labels { input, out } => {
            let (gt, cfg) = input.load()?;
            let maps = generate_maps(&gt, input.size, &cfg).map_err(err)?;
            write_label_maps(&out, &maps).map_err(err)?;
            println!("instances={} skipped={}", gt.len(), maps.skipped);
        }
        Command::Simulate {
            input,
            sigma0,
            sigma1,
            angle_sigma,
            seed,
            out,
        } => {
            let (gt, cfg) = input.load()?;
            let noise = NoiseModel {
                sigma0,
                sigma1,
                angle_sigma,
                seed,
            };
            let maps = render_oracle_maps(&gt, input.size, &cfg, &noise).map_err(err)?;
            write_prediction_maps(&out, &maps).map_err(err)?;
        }
        Command::Decode {
            maps,
            stride,
            nms,
            score_thresh,
            merge_iou,
            final_iou,
            epsilon,
            out,
        } => {
            let maps = read_prediction_maps(&maps, stride).map_err(err)?;
            let params = NmsParams {
                merge_iou,
                final_iou,
                score_thresh,
                epsilon,
            };
            let dets = detect(&maps, &params, nms).map_err(err)?;
            let mut json = detections_to_json(&dets).map_err(err)?;
            json.push('\n');
            write_or_print(out.as_deref(), &json)?;
        }
        Command::Eval { detections, gt, iou } => {
            if let Some(t) = iou.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(format!("IoU threshold {t} outside [0, 1]"));
            }
            let dets = read_detections(&detections)?;
            let gt = read_gt(&gt)?;
            for r in evaluate(&dets, &gt, &iou) {
                println!(
                    "iou={} precision={:.6} recall={:.6} fmeasure={:.6} matched={} detections={} ground_truth={} mean_iou={:.6}",
                    r.iou_threshold,
                    r.precision,
                    r.recall,
                    r.fmeasure,
                    r.num_matched,
                    r.num_detections,
                    r.num_ground_truth,
                    r.mean_iou
                );
            }
        }
        Command::Render {
            detections,
            gt,
            size,
            out,
        } => {
            let dets = read_detections(&detections)?;
            let gt = gt.as_deref().map(read_gt).transpose()?;
            write_or_print(out.as_deref(), &render_svg(size, &dets, gt.as_deref()))?;
        }
        Command::Bench { counts, seed, repeats } => {
            for count in counts {
                for r in bench_nms(count, seed, repeats) {
                    println!(
                        "candidates={} variant={} elapsed_ms={:.3} output_boxes={}",
                        r.candidates,
                        r.variant.short_name(),
                        r.elapsed.as_secs_f64() * 1e3,
                        r.output_boxes
                    );
                }
            }
        }
        Command::Gradcheck { points, seed } => {
            let reports = gradcheck::run_all(points, seed);
            for r in &reports {
                println!(
                    "loss={} points={} max_rel_error={:.3e} status={}",
                    r.loss,
                    r.points,
                    r.max_rel_error,
                    if r.passed() { "pass" } else { "fail" }
                );
            }
            return Ok(reports.iter().all(|r| r.passed()));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
