//! Generate a few cluttered worlds, print one, and save them as text files.
//!
//!     cargo run --example generate_worlds -- [count] [fill] [out_dir]

use lics::bench::optimal_time;
use lics::worldgen::{generate_world, save_world, split_worlds, world_to_string, WorldgenConfig};

fn main() -> lics::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: u64 = args.next().map_or(6, |s| s.parse().expect("count"));
    let fill: f64 = args.next().map_or(0.25, |s| s.parse().expect("fill"));
    let out = args.next().unwrap_or_else(|| "target/example-worlds".into());

    let worlds = (0..count)
        .map(|seed| {
            generate_world(&WorldgenConfig {
                seed,
                fill_probability: fill,
                ..Default::default()
            })
        })
        .collect::<lics::Result<Vec<_>>>()?;

    print!("{}", world_to_string(&worlds[0]));
    println!();
    std::fs::create_dir_all(&out)?;
    for w in &worlds {
        let occupied = w.cells.iter().filter(|&&c| c).count() as f64 / w.cells.len() as f64;
        println!(
            "{}  occupied {:4.1}%  L* {:5.2} m  T* {:5.2} s",
            w.id,
            100.0 * occupied,
            w.lstar.unwrap_or(f64::NAN),
            optimal_time(w)?
        );
        save_world(w, format!("{out}/{}.world", w.id))?;
    }
    let (train, test) = split_worlds(&worlds, 0.78, 0);
    println!("split: {} train, {} test; saved to {out}", train.len(), test.len());
    Ok(())
}
