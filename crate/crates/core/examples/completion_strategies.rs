//! Shows which frames each boundary completion policy feeds the model for
//! targets near the start of a short video.

use skiplift::data::{plan_clip, CompletionMode, CompletionPolicy};

fn main() -> skiplift::Result<()> {
    let (video, len, threshold) = (20, 9, 2);
    for target in [0, 1, 2, 3, 10] {
        println!("target {target}");
        for mode in [CompletionMode::Edge, CompletionMode::Expand, CompletionMode::Roll] {
            let plan = plan_clip(video, target, len, CompletionPolicy { mode, threshold })?;
            println!(
                "  {:<7} frames {:?}  target at {}{}",
                format!("{mode:?}"),
                plan.frames,
                plan.target_offset,
                if plan.rolled { "  (rolled)" } else { "" }
            );
        }
    }
    Ok(())
}
