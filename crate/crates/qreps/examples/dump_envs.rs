//! Regenerates the serialized environment instances under `data/`.
//!
//! Run from the workspace root: `cargo run -p qreps --example dump_envs`.

use qreps::envs;

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for name in envs::TABULAR_ENV_NAMES {
        let mdp = envs::by_name(name).unwrap();
        let file = dir.join(format!("{}.mdp", name.replace('-', "_")));
        std::fs::write(&file, mdp.to_text()).expect("write data file");
        println!("wrote {}", file.display());
    }
}
