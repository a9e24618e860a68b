use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let out = PathBuf::from(env::var("OUT_DIR").unwrap()).join("loopsoup.h");

    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(&out);
            // Keep the committed header in sync for consumers that vendor the
            // repo without running cargo; best effort, read-only checkouts are
            // fine.
            let include = PathBuf::from(&crate_dir).join("include");
            if std::fs::create_dir_all(&include).is_ok() {
                let _ = std::fs::copy(&out, include.join("loopsoup.h"));
            }
        }
        Err(e) => panic!("header generation failed: {e}"),
    }

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
