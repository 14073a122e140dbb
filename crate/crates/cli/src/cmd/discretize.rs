use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use crate::data;
use crate::error::Result;
use crate::manifest::Manifest;

#[derive(Debug, Args)]
pub struct DiscretizeArgs {
    /// Newick tree with branch lengths in time units.
    #[arg(long)]
    pub tree: PathBuf,
    /// `label,time` table dating the leaves.
    #[arg(long)]
    pub tip_dates: Option<PathBuf>,
    /// Time of the latest leaf when dating by branch lengths alone.
    #[arg(long, default_value_t = 0.0)]
    pub most_recent_tip_time: f64,
    /// Time at which slicing starts (default: the latest leaf).
    #[arg(long)]
    pub present: Option<f64>,
    /// Slice width in tree time units.
    #[arg(long, default_value_t = 1.0)]
    pub day_length: f64,
    /// Also map the slices onto this many epidemic days (`lineages.csv`).
    #[arg(long)]
    pub n_days: Option<usize>,
}

pub fn run(args: &DiscretizeArgs, out: &Path) -> Result<()> {
    let mut manifest = Manifest::start("discretize");
    manifest.config(&json!({
        "tree": args.tree,
        "tip_dates": args.tip_dates,
        "most_recent_tip_time": args.most_recent_tip_time,
        "present": args.present,
        "day_length": args.day_length,
        "n_days": args.n_days,
    }));
    let tree = data::load_tree(&args.tree, args.tip_dates.as_deref(), args.most_recent_tip_time)?;
    let (slices, lineages, dropped, dropped_c) = data::tree_lineages(&tree, args.day_length, args.present, args.n_days)?;
    super::ensure_dir(out)?;

    let path = out.join("slices.csv");
    data::write_slices(&path, &slices)?;
    manifest.output(&path);
    if args.n_days.is_some() {
        let path = out.join("lineages.csv");
        data::write_lineages(&path, &lineages)?;
        manifest.output(&path);
        manifest.result("dropped_slices", dropped);
        manifest.result("dropped_coalescences", dropped_c);
        if dropped > 0 {
            eprintln!("warning: {dropped} slice(s) older than day 1 dropped ({dropped_c} coalescence(s))");
        }
    }
    manifest.result("leaves", tree.n_leaves());
    manifest.result("slices", slices.len());
    manifest.write(out)?;
    Ok(())
}
