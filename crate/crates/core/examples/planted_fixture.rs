//! Writes the six-node planted-structure panel used by the integration tests.
//!
//! Structure: a chain A -> B -> C, a pair D <-> E driven by a shared latent
//! factor, and an isolated node F. Each node has two indicators observed over
//! three years for 60 entities.
//!
//! Usage: cargo run --example planted_fixture -- <out-dir>

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const ENTITIES: usize = 60;
const YEARS: [i32; 3] = [2015, 2016, 2017];
const NODES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];
const FEATURES: usize = 2 * YEARS.len();

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "planted".into()));
    fs::create_dir_all(&dir).expect("create output directory");
    let mut rng = ChaCha8Rng::seed_from_u64(20_200_601);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut draw = |sd: f64| sd * normal.sample(&mut rng);

    // values[node][entity][feature], feature = indicator * years + year
    let mut values = vec![vec![[0.0; FEATURES]; ENTITIES]; NODES.len()];
    for e in 0..ENTITIES {
        let shared = draw(1.0);
        for f in 0..FEATURES {
            let a = draw(1.0);
            let b = a + 0.25 * a * a + draw(0.3);
            let c = b + draw(0.3);
            let d = shared + draw(0.4);
            let ee = shared.tanh() * 2.0 + draw(0.4);
            let iso = draw(1.0);
            for (node, v) in [a, b, c, d, ee, iso].into_iter().enumerate() {
                values[node][e][f] = v;
            }
        }
    }

    let entity = |e: usize| format!("E{e:02}");
    let mut panel = String::from("entity,indicator,year,value\n");
    for (node, name) in NODES.iter().enumerate() {
        for k in 0..2 {
            for (t, year) in YEARS.iter().enumerate() {
                for e in 0..ENTITIES {
                    let v = values[node][e][k * YEARS.len() + t];
                    let _ = writeln!(
                        panel,
                        "{},{}{},{},{:.6}",
                        entity(e),
                        name.to_lowercase(),
                        k + 1,
                        year,
                        v
                    );
                }
            }
        }
    }
    let mut nodes = String::from("indicator,node\n");
    for name in NODES {
        for k in 1..=2 {
            let _ = writeln!(nodes, "{}{k},{name}", name.to_lowercase());
        }
    }
    let mut groups = String::from("grouping,entity\n");
    for e in 0..ENTITIES {
        let _ = writeln!(groups, "all,{}", entity(e));
    }
    for e in (0..ENTITIES).step_by(2) {
        let _ = writeln!(groups, "even,{}", entity(e));
    }
    fs::write(dir.join("panel.csv"), panel).unwrap();
    fs::write(dir.join("nodes.csv"), nodes).unwrap();
    fs::write(dir.join("groupings.csv"), groups).unwrap();
    println!("wrote fixture to {}", dir.display());
}
