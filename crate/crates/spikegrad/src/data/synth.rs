//! Synthetic stand-in datasets, written and read through the real file
//! formats.
//!
//! The digit images are seven-segment glyphs with translation jitter,
//! intensity scaling, pixel dropout, and background speckle; the event
//! streams place class-dependent blobs in space and time plus noise events.
//! Both are deterministic per seed and exist so the full training and
//! ingestion pipelines can run in environments without the original
//! datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

use super::aer::{write_aer_bytes, Event, EventStream, SENSOR_DIM};
use super::idx::{write_idx_images, write_idx_labels, IdxImages};
use crate::error::Result;

pub const IMAGE_DIM: usize = 28;

/// Segment mask per digit, order: A (top), B (top right), C (bottom right),
/// D (bottom), E (bottom left), F (top left), G (middle).
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],    // 0
    [false, true, true, false, false, false, false], // 1
    [true, true, false, true, true, false, true],   // 2
    [true, true, true, true, false, false, true],   // 3
    [false, true, true, false, false, true, true],  // 4
    [true, false, true, true, false, true, true],   // 5
    [true, false, true, true, true, true, true],    // 6
    [true, true, true, false, false, false, false], // 7
    [true, true, true, true, true, true, true],     // 8
    [true, true, true, true, false, true, true],    // 9
];

fn draw_segment(canvas: &mut [f64], seg: usize, dx: i32, dy: i32) {
    let (x0, x1) = (9i32, 19i32);
    let (y0, ym, y1) = (5i32, 14i32, 23i32);
    fn put(canvas: &mut [f64], x: i32, y: i32, dx: i32, dy: i32) {
        let (x, y) = (x + dx, y + dy);
        if (0..IMAGE_DIM as i32).contains(&x) && (0..IMAGE_DIM as i32).contains(&y) {
            canvas[y as usize * IMAGE_DIM + x as usize] = 1.0;
        }
    }
    let hbar = |canvas: &mut [f64], y: i32| {
        for x in x0..=x1 {
            put(canvas, x, y, dx, dy);
            put(canvas, x, y + 1, dx, dy);
        }
    };
    let vbar = |canvas: &mut [f64], x: i32, ya: i32, yb: i32| {
        for y in ya..=yb {
            put(canvas, x, y, dx, dy);
            put(canvas, x + 1, y, dx, dy);
        }
    };
    match seg {
        0 => hbar(canvas, y0),
        1 => vbar(canvas, x1 - 1, y0, ym),
        2 => vbar(canvas, x1 - 1, ym, y1),
        3 => hbar(canvas, y1 - 1),
        4 => vbar(canvas, x0, ym, y1),
        5 => vbar(canvas, x0, y0, ym),
        _ => hbar(canvas, ym),
    }
}

/// Render one jittered glyph of `label` into a 28x28 u8 image.
fn render_digit(label: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut canvas = vec![0.0f64; IMAGE_DIM * IMAGE_DIM];
    let dx = rng.gen_range(-2..=2);
    let dy = rng.gen_range(-2..=2);
    for (seg, &on) in SEGMENTS[label].iter().enumerate() {
        if on {
            draw_segment(&mut canvas, seg, dx, dy);
        }
    }
    let scale = rng.gen_range(0.7..1.0);
    let noise = Normal::new(0.0, 10.0).unwrap();
    let mut out = vec![0u8; IMAGE_DIM * IMAGE_DIM];
    for (o, &c) in out.iter_mut().zip(&canvas) {
        let mut v = c * 255.0 * scale;
        if c > 0.0 {
            if rng.gen_bool(0.08) {
                v = 0.0; // dropout
            } else {
                v += noise.sample(rng);
            }
        } else if rng.gen_bool(0.02) {
            v = rng.gen_range(10.0..50.0); // background speckle
        }
        *o = v.clamp(0.0, 255.0) as u8;
    }
    out
}

/// Generate `n` labeled digit images.
pub fn synth_digit_images(seed: u64, n: usize) -> (IdxImages, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * IMAGE_DIM * IMAGE_DIM);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.gen_range(0..10usize);
        data.extend_from_slice(&render_digit(label, &mut rng));
        labels.push(label as u8);
    }
    (IdxImages { count: n, rows: IMAGE_DIM, cols: IMAGE_DIM, data }, labels)
}

/// Write a synthetic digit dataset in the standard IDX file layout.
pub fn write_synth_mnist_dir(dir: &Path, seed: u64, n_train: usize, n_test: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (train_images, train_labels) = synth_digit_images(seed, n_train);
    let (test_images, test_labels) = synth_digit_images(seed.wrapping_add(1), n_test);
    std::fs::write(dir.join("train-images-idx3-ubyte"), write_idx_images(&train_images))?;
    std::fs::write(dir.join("train-labels-idx1-ubyte"), write_idx_labels(&train_labels))?;
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), write_idx_images(&test_images))?;
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), write_idx_labels(&test_labels))?;
    Ok(())
}

/// Generate one labeled event stream: two class-positioned blobs with
/// class-dependent onset times plus uniform noise events.
pub fn synth_event_stream(seed: u64, label: usize) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = label as f64 * std::f64::consts::TAU / 10.0;
    let cx = 17.0 + 10.0 * angle.cos();
    let cy = 17.0 + 10.0 * angle.sin();
    let onset = 20_000 + 25_000 * (label % 5) as u32; // microseconds
    let mut events = Vec::new();
    for blob in 0..2 {
        let (bx, by) = if blob == 0 { (cx, cy) } else { (34.0 - cx, 34.0 - cy) };
        for _ in 0..90 {
            let x = (bx + rng.gen_range(-3.0..3.0)).clamp(0.0, (SENSOR_DIM - 1) as f64);
            let y = (by + rng.gen_range(-3.0..3.0)).clamp(0.0, (SENSOR_DIM - 1) as f64);
            let ts = onset + rng.gen_range(0..80_000);
            events.push(Event {
                x: x as u8,
                y: y as u8,
                polarity: blob as u8,
                timestamp_us: ts,
            });
        }
    }
    for _ in 0..30 {
        events.push(Event {
            x: rng.gen_range(0..SENSOR_DIM as u8),
            y: rng.gen_range(0..SENSOR_DIM as u8),
            polarity: rng.gen_range(0..2),
            timestamp_us: rng.gen_range(0..300_000),
        });
    }
    events.sort_by_key(|e| e.timestamp_us);
    EventStream { events }
}

/// Write a synthetic event dataset in the per-label directory layout
/// (`dir/<label>/<index>.bin`).
pub fn write_synth_nmnist_dir(dir: &Path, seed: u64, per_class: usize) -> Result<()> {
    for label in 0..10usize {
        let class_dir = dir.join(label.to_string());
        std::fs::create_dir_all(&class_dir)?;
        for k in 0..per_class {
            let stream =
                synth_event_stream(seed.wrapping_add((label * per_class + k) as u64), label);
            std::fs::write(class_dir.join(format!("{k:05}.bin")), write_aer_bytes(&stream))?;
        }
    }
    Ok(())
}

/// Load an event dataset from the per-label directory layout, sorted by
/// label and file name.
pub fn load_nmnist_dir(dir: &Path) -> Result<Vec<(EventStream, usize)>> {
    let mut out = Vec::new();
    for label in 0..10usize {
        let class_dir = dir.join(label.to_string());
        if !class_dir.is_dir() {
            continue;
        }
        let mut files: Vec<_> = std::fs::read_dir(&class_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |x| x == "bin"))
            .collect();
        files.sort();
        for f in files {
            out.push((super::aer::load_nmnist_sample(&f)?, label));
        }
    }
    Ok(out)
}
