use std::fs;
use std::path::Path;

use lgl_core::graph::{save_dataset, FeatureEncoding};
use lgl_core::synth::generate;

use super::Context;
use crate::config::parse_synth;
use crate::error::{CliError, Result};

pub fn cmd_generate(ctx: &Context, config: &Path, binary_features: bool) -> Result<()> {
    let text = fs::read_to_string(config).map_err(|e| CliError::io(config, e))?;
    let cfg = parse_synth(&text)?;
    let g = generate(&cfg)?;
    let encoding = if binary_features {
        FeatureEncoding::Binary
    } else {
        FeatureEncoding::Csv
    };
    save_dataset(&g, &ctx.output_dir, encoding)?;
    ctx.say(format_args!(
        "wrote {} vertices and {} edges to {}",
        g.num_vertices(),
        g.num_edges(),
        ctx.output_dir.display()
    ));
    Ok(())
}
