//! Generates `include/beamfuse.h` from the `#[no_mangle]` surface. The
//! header is committed so C consumers never need the Rust toolchain.

use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("beamfuse.h");

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("BEAMFUSE_H".into()),
        cpp_compat: true,
        documentation: true,
        header: Some("/* C interface to the beamfuse simulator and models. */".into()),
        usize_is_size_t: true,
        ..Default::default()
    };

    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        // Parse errors must fail the build; only fall through when cbindgen
        // skips generation because the crate is mid-expansion.
        Err(cbindgen::Error::ParseSyntaxError { .. }) => {}
        Err(e) => panic!("header generation failed: {e}"),
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
}
