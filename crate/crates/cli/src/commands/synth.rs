use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;
use vitmerge::io::{write_manifest, write_tensor, write_weights, Manifest, Record, Tensor};
use vitmerge::vit::{random_image, random_weights};
use vitmerge::{VitConfig, VitModel};

use crate::args::OutputArgs;
use crate::report::{argmax, to_rows, RunReport};

/// Writes a random-weight checkpoint, random images, their reference
/// logits and a manifest, for trying the other commands without a
/// converted model.
#[derive(Debug, Args)]
pub struct SynthCmd {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// deit-t, deit-s, deit-b or a full "vit:..." tag
    #[arg(long, default_value = "deit-t")]
    model: String,
    #[arg(long, default_value_t = 4)]
    images: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn run(cmd: SynthCmd) -> Result<()> {
    let started = Instant::now();
    let cfg: VitConfig = cmd.model.parse()?;
    let inputs = cmd.out.join("inputs");
    std::fs::create_dir_all(&inputs).with_context(|| format!("creating {}", inputs.display()))?;

    let store = random_weights(&cfg, cmd.seed);
    let weights = cmd.out.join("weights.vpkw");
    write_weights(&weights, &store)?;
    let model = VitModel::from_store(&store)?;

    let mut records = Vec::with_capacity(cmd.images);
    for i in 0..cmd.images {
        let image_seed = cmd.seed.wrapping_add(1 + i as u64);
        let image = random_image(&cfg, image_seed);
        let name = format!("img_{i:04}.vpkt");
        write_tensor(inputs.join(&name), &image)?;
        let (logits, _) = model.forward(&image, None)?;
        let logits_name = format!("img_{i:04}.logits.vpkt");
        write_tensor(
            inputs.join(&logits_name),
            &Tensor::new(vec![logits.len()], logits.clone())?,
        )?;
        records.push(Record {
            tensor_path: PathBuf::from("inputs").join(name),
            label: (image_seed.wrapping_mul(2_654_435_761) % cfg.num_classes as u64) as usize,
            reference_top1: Some(argmax(&logits)),
            reference_logits_path: Some(PathBuf::from("inputs").join(logits_name)),
        });
    }
    let manifest = cmd.out.join("manifest.json");
    write_manifest(&manifest, &Manifest { records: records.clone() })?;

    let report = RunReport::new(
        started,
        json!({ "model": cfg.tag(), "seed": cmd.seed, "images": cmd.images }),
        to_rows(&records)?,
        json!({ "weights": weights, "manifest": manifest }),
    )?;
    if cmd.output.json {
        return report.print_json();
    }
    println!("weights {}", weights.display());
    println!("manifest {} ({} images)", manifest.display(), cmd.images);
    Ok(())
}
