//! Writes the stripe-orientation toy model and a labelled corpus.
//!
//! cargo run --example stripes -- OUT_DIR [N_IMAGES] [VERTICAL_BIAS]

use std::path::PathBuf;

use anyhow::{Context, Result};
use contrastprobe::cpm::write_model;
use contrastprobe::synthetic::{stripe_net, write_stripe_corpus};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().context("usage: stripes OUT_DIR [N_IMAGES] [VERTICAL_BIAS]")?);
    let n: usize = args.next().map_or(Ok(100), |s| s.parse()).context("N_IMAGES")?;
    let bias: f32 = args.next().map_or(Ok(0.0), |s| s.parse()).context("VERTICAL_BIAS")?;
    let labels = write_stripe_corpus(&out.join("images"), n, 7)?;
    write_model(out.join("stripes.cpm"), &stripe_net(bias))?;
    println!("model: {}", out.join("stripes.cpm").display());
    println!("labels: {}", labels.display());
    Ok(())
}
