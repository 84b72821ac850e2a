//! Generates a small synthetic dataset, writes it in the binary format with
//! its JSON manifest, and reads both back.

use skiplift::data::{load_dataset, save_dataset, synth_generate, DatasetManifest, SynthConfig};

fn main() -> skiplift::Result<()> {
    let dir = std::env::temp_dir().join("skiplift_data");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("synthetic.gsp");
    let ds = synth_generate(&SynthConfig { seed: 4, count: 16, frames: 120, ..SynthConfig::default() })?;
    save_dataset(&ds, &path)?;
    let manifest = DatasetManifest::describe(&ds, &path, 50.0);
    manifest.save(&path.with_extension("json"))?;

    let back = load_dataset(&path)?;
    println!("{} sequences, {} bytes, identical after reload: {}", back.len(), std::fs::metadata(&path)?.len(), back == ds);
    let first = &back.sequences[0];
    println!("sequence 0: {} frames, {} joints", first.frames(), first.joints());
    println!("first 2D joint {:?}, first 3D joint {:?}", &first.pose2d.frame(0)[..2], &first.pose3d.frame(0)[..3]);
    Ok(())
}
