//! Regenerates the bundled data files: the calibration table and the ring
//! corpus.  Run from the workspace root:
//!
//!     cargo run --release -p dhym-core --example generate_data

use dhym_core::calibration;
use dhym_core::ring::ToyRing;
use std::path::Path;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let data = root.join("data");
    std::fs::create_dir_all(data.join("rings")).unwrap();

    let table = calibration::build_default_table(2000, 20260824);
    table.save(&data.join("calibration.txt")).unwrap();
    println!("wrote {}", data.join("calibration.txt").display());

    let rings = [
        ("cp2.ring", ToyRing::cp(2)),
        ("cp3.ring", ToyRing::cp(3)),
        ("blowup_cp2.ring", ToyRing::blowup_cp2(2)),
        ("curve_product.ring", ToyRing::curve_product()),
    ];
    for (name, ring) in rings {
        let path = data.join("rings").join(name);
        std::fs::write(&path, ring.to_text()).unwrap();
        println!("wrote {}", path.display());
    }
}
