//! Dataset directories: `<name>.ppm` (or `.pgm`) images next to `<name>.json`
//! target lists, read in file-name order.

use std::fs;
use std::path::Path;

use detkit::losses::Target;
use detkit::postprocess::letterbox;
use detkit::ppm::{read_image, to_rgb, write_image};
use detkit::train::Sample;

use crate::exit::Failure;

pub fn load_dir(dir: &Path, image_size: usize) -> Result<Vec<Sample>, Failure> {
    let mut images: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")))
        .collect();
    images.sort();
    if images.is_empty() {
        return Err(Failure::usage(format!("no .ppm/.pgm images in {}", dir.display())));
    }
    let mut out = Vec::with_capacity(images.len());
    for path in images {
        let image = to_rgb(&read_image(&path).map_err(|e| Failure::from_image(&path, e))?)?;
        let labels = path.with_extension("json");
        let text = fs::read_to_string(&labels)
            .map_err(|e| Failure::usage(format!("cannot read labels {}: {e}", labels.display())))?;
        let targets: Vec<Target> = serde_json::from_str(&text)?;
        let (image, tf) = letterbox(&image, image_size, image_size)?;
        let targets = targets
            .iter()
            .map(|t| Target {
                bbox: tf.to_letterboxed(&t.bbox),
                class_id: t.class_id,
            })
            .collect();
        out.push(Sample { image, targets });
    }
    Ok(out)
}

pub fn write_dir(dir: &Path, samples: &[Sample]) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        write_image(&dir.join(format!("{i:04}.ppm")), &s.image)?;
        fs::write(dir.join(format!("{i:04}.json")), serde_json::to_string_pretty(&s.targets)?)?;
    }
    Ok(())
}
