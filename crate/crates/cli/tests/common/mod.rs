#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const W: u32 = 32;
pub const H: u32 = 24;
pub const FRAMES: usize = 25;

pub fn rtss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn in_box(x: u32, y: u32, i: usize, speed: u32) -> bool {
    let x0 = 2 + (i as u32 * speed) % (W - 10);
    (x0..x0 + 8).contains(&x) && (8..16).contains(&y)
}

/// Writes one video: a textured background with a moving box, exact
/// ground truth, and semantic maps marking the box.
fn write_video(root: &Path, sem_root: &Path, rel: &str, speed: u32, shade: u8) {
    let video = root.join(rel);
    let input = video.join("input");
    let gt = video.join("groundtruth");
    let sem = sem_root.join(rel);
    for d in [&input, &gt, &sem] {
        std::fs::create_dir_all(d).unwrap();
    }
    std::fs::write(video.join("temporalROI.txt"), format!("5 {FRAMES}\n")).unwrap();
    for i in 1..=FRAMES {
        let frame = image::RgbImage::from_fn(W, H, |x, y| {
            if in_box(x, y, i, speed) {
                image::Rgb([230, 40, 30])
            } else {
                let t = ((x * 7 + y * 13) % 32) as u8;
                image::Rgb([shade + t, shade, shade + t / 2])
            }
        });
        frame.save(input.join(format!("in{i:06}.png"))).unwrap();
        let mask = image::GrayImage::from_fn(W, H, |x, y| {
            image::Luma([if in_box(x, y, i, speed) { 255 } else { 0 }])
        });
        mask.save(gt.join(format!("gt{i:06}.png"))).unwrap();
        mask.save(sem.join(format!("sem{i:06}.png"))).unwrap();
    }
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let sem = dir.path().join("sem");
        write_video(&data, &sem, "baseline/box", 1, 60);
        write_video(&data, &sem, "baseline/fast", 2, 90);
        write_video(&data, &sem, "shadow/slow", 1, 120);
        let config = "input_pattern = \"in%06d.png\"\n\
                      seed = 11\n\
                      [semantic]\n\
                      source = \"maps\"\n\
                      dir = \"sem\"\n\
                      [subsense]\n\
                      n_samples = 20\n";
        std::fs::write(dir.path().join("config.toml"), config).unwrap();
        let single = "input_dir = \"data/baseline/box/input\"\n\
                      input_pattern = \"in%06d.png\"\n\
                      output_dir = \"out\"\n\
                      [semantic]\n\
                      source = \"maps\"\n\
                      dir = \"sem/baseline/box\"\n\
                      [subsense]\n\
                      n_samples = 20\n";
        std::fs::write(dir.path().join("single.toml"), single).unwrap();
        Fixture { dir }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn s(&self, rel: &str) -> String {
        self.path(rel).to_string_lossy().into_owned()
    }
}

/// Relative path → contents of every file under `root`, except timing logs.
pub fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if !p.file_name().unwrap().to_string_lossy().starts_with("timing") {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
