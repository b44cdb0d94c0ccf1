//! `build-corpus`: the single-utterance and dialogue dataset files.

use crate::context::{write_jsonl, Ctx};
use crate::BranchArg;
use anyhow::Result;
use captalk_core::corpus::{build_dialogue_dataset, build_single_dataset, CorpusManifest};

pub fn run(ctx: &mut Ctx, branch: BranchArg) -> Result<()> {
    let manifest = CorpusManifest::load(&ctx.config.paths.manifest)?;
    let rule = ctx.config.eligibility_rule()?;

    if branch.includes_single() {
        let records: Vec<_> = manifest.utterances.values().cloned().collect();
        let (instances, stats) = build_single_dataset(&records)?;
        if stats.skipped_missing_captions > 0 {
            ctx.warn(format!(
                "single: {} record(s) without captions skipped",
                stats.skipped_missing_captions
            ));
        }
        write_jsonl(&ctx.out_path("single.jsonl"), &instances)?;
        println!(
            "build-corpus: {} single instances ({} failing quality filtered)",
            instances.len(),
            stats.skipped_failed_quality
        );
    }

    if branch.includes_dialogue() {
        let (instances, stats) = build_dialogue_dataset(
            &manifest.sessions,
            &manifest.speaker_captions,
            ctx.config.corpus.window,
            ctx.config.corpus.stride,
            rule,
        )?;
        if stats.dropped_sessions > 0 {
            ctx.warn(format!(
                "dialogue: {} session(s) with no eligible speaker dropped",
                stats.dropped_sessions
            ));
        }
        if stats.skipped_views_missing_captions > 0 {
            ctx.warn(format!(
                "dialogue: {} view(s) without speaker captions skipped",
                stats.skipped_views_missing_captions
            ));
        }
        write_jsonl(&ctx.out_path("dialogue.jsonl"), &instances)?;
        println!("build-corpus: {} dialogue instances", instances.len());
    }

    Ok(())
}
