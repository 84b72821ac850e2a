//! Pose sequences, clip construction and dataset files.

pub mod io;
mod pose;
pub mod synth;
mod window;

pub use io::{load_dataset, save_dataset, DatasetManifest, ManifestEntry};
pub use pose::{Dataset, PoseSequence2D, PoseSequence3D, SequencePair};
pub use synth::{synth_generate, SynthConfig};
pub use window::{
    complete_edge, complete_expand, complete_roll, plan_clip, window, ClipPlan, CompletionMode, CompletionPolicy,
    Window,
};
