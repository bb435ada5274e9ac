//! Writes a small synthetic editing corpus and summarises it.

use std::collections::BTreeMap;

use spectral_edit::data::{make_corpus, ClipShape};

fn main() -> spectral_edit::error::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-corpus".into());
    let manifest = make_corpus(16, 1234, ClipShape::default(), out.as_ref())?;
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for s in &manifest.samples {
        *kinds.entry(format!("{:?}", s.edit)).or_default() += 1;
    }
    println!("{} clips of {:?} in {out}", manifest.samples.len(), manifest.shape);
    for (kind, n) in kinds {
        println!("  {kind:<10} {n}");
    }
    let first = &manifest.samples[0];
    println!("clip 0: condition {:?} -> {:?} ({})", first.y_src, first.y_tgt, first.video_path);
    Ok(())
}
