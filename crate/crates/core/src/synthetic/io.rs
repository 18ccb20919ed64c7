//! Dataset files: `dataset.manifest` (key/value text holding the generating
//! spec and labels), `frames.bin` (all frames, row-major
//! `[video][frame][dim]`, f64 little-endian) and `centroids.bin`
//! (`[class][dim]`).

use std::fs;
use std::path::Path;

use super::{Dataset, Video, VideoSpec};
use crate::binio::{read_f64_le, write_f64_le, KeyValues};
use crate::error::{Error, Result};

const FORMAT: &str = "dualrep-dataset-v1";

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let s = &ds.spec;
    let mut kv = KeyValues::default();
    kv.push("format", FORMAT);
    kv.push("num_classes", s.num_classes);
    kv.push("videos_per_class", s.videos_per_class);
    kv.push("frames_per_video", s.frames_per_video);
    kv.push("frame_dim", s.frame_dim);
    kv.push("class_separation", s.class_separation);
    kv.push("video_spread", s.video_spread);
    kv.push("drift_scale", s.drift_scale);
    kv.push("noise_scale", s.noise_scale);
    kv.push("seed", s.seed);
    kv.push("num_videos", ds.videos.len());
    let labels: Vec<String> = ds.videos.iter().map(|v| v.class_label.to_string()).collect();
    kv.push("labels", labels.join(","));
    kv.push("frames_file", "frames.bin");
    kv.push("centroids_file", "centroids.bin");
    let manifest = dir.join("dataset.manifest");
    fs::write(&manifest, kv.render("synthetic video dataset")).map_err(|e| Error::io(&manifest, e))?;

    let frames: Vec<f64> = ds.videos.iter().flat_map(|v| v.frames.iter().flatten().copied()).collect();
    write_f64_le(&dir.join("frames.bin"), &frames)?;
    let centroids: Vec<f64> = ds.class_centroids.iter().flatten().copied().collect();
    write_f64_le(&dir.join("centroids.bin"), &centroids)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("dataset.manifest");
    let kv = KeyValues::read(&path)?;
    let format: String = kv.get(&path, "format")?;
    if format != FORMAT {
        return Err(Error::format(&path, format!("unsupported format `{format}`")));
    }
    let spec = VideoSpec {
        num_classes: kv.get(&path, "num_classes")?,
        videos_per_class: kv.get(&path, "videos_per_class")?,
        frames_per_video: kv.get(&path, "frames_per_video")?,
        frame_dim: kv.get(&path, "frame_dim")?,
        class_separation: kv.get(&path, "class_separation")?,
        video_spread: kv.get(&path, "video_spread")?,
        drift_scale: kv.get(&path, "drift_scale")?,
        noise_scale: kv.get(&path, "noise_scale")?,
        seed: kv.get(&path, "seed")?,
    };
    let n: usize = kv.get(&path, "num_videos")?;
    let labels_raw: String = kv.get(&path, "labels")?;
    let labels: Vec<usize> = labels_raw
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::format(&path, format!("bad label `{s}`"))))
        .collect::<Result<_>>()?;
    if labels.len() != n {
        return Err(Error::format(&path, format!("{} labels for {n} videos", labels.len())));
    }
    let frames_file: String = kv.get(&path, "frames_file")?;
    let centroids_file: String = kv.get(&path, "centroids_file")?;
    let flat = read_f64_le(&dir.join(&frames_file))?;
    let (t, d) = (spec.frames_per_video, spec.frame_dim);
    if flat.len() != n * t * d {
        return Err(Error::format(
            dir.join(&frames_file),
            format!("expected {} values, found {}", n * t * d, flat.len()),
        ));
    }
    let videos = flat
        .chunks_exact(t * d)
        .zip(labels)
        .enumerate()
        .map(|(id, (chunk, class_label))| Video {
            id,
            class_label,
            frames: chunk.chunks_exact(d).map(<[f64]>::to_vec).collect(),
        })
        .collect();
    let class_centroids = read_f64_le(&dir.join(&centroids_file))?.chunks_exact(d).map(<[f64]>::to_vec).collect();
    Ok(Dataset { spec, videos, class_centroids })
}
