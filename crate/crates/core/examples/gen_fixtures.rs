//! Writes the procedural part of the BVH fixture corpus.
//!
//! cargo run -p xtopo-core --example gen_fixtures -- fixtures/

use std::path::{Path, PathBuf};

use xtopo_core::bvh::{write_bvh, RawMotion};
use xtopo_core::skeleton::Skeleton;
use xtopo_core::synthetic::{self, Style};

fn save(dir: &Path, name: &str, skeleton: &Skeleton, raw: &RawMotion) {
    let text = write_bvh(&skeleton.to_raw(), raw).expect("writable motion");
    let path = dir.join(name);
    std::fs::write(&path, text).expect("write fixture");
    println!("{} ({} joints, {} frames)", path.display(), skeleton.joint_count(), raw.frame_count());
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).expect("create output directory");

    let biped = synthetic::biped_skeleton();
    save(&dir, "biped22.bvh", &biped, &synthetic::biped_walk_raw(&biped, 240, 60.0, &Style::default()));
    save(
        &dir,
        "biped22_run.bvh",
        &biped,
        &synthetic::biped_walk_raw(&biped, 180, 60.0, &Style { speed: 1.8, amplitude: 1.3, ..Style::default() }),
    );
    save(&dir, "biped22_styled.bvh", &biped, &synthetic::biped_walk_raw(&biped, 200, 60.0, &Style::sample(7, 1.0)));

    let quad = synthetic::quadruped_skeleton();
    save(&dir, "quadruped23.bvh", &quad, &synthetic::quadruped_trot_raw(&quad, 240, 60.0, &Style::default()));
    save(
        &dir,
        "quadruped23_slow.bvh",
        &quad,
        &synthetic::quadruped_trot_raw(&quad, 150, 30.0, &Style { speed: 0.7, ..Style::sample(3, 0.5) }),
    );

    let snake = synthetic::snake_skeleton(12);
    save(&dir, "snake12.bvh", &snake, &synthetic::snake_slither_raw(&snake, 200, 60.0, &Style::default()));
    let short = synthetic::snake_skeleton(5);
    save(&dir, "snake5.bvh", &short, &synthetic::snake_slither_raw(&short, 90, 30.0, &Style::sample(11, 1.0)));

    let hex = synthetic::hexapod_skeleton();
    save(&dir, "hexapod20.bvh", &hex, &synthetic::hexapod_walk_raw(&hex, 160, 60.0, &Style::default()));
}
