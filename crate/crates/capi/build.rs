fn main() {
    // Regenerate the committed C header when the gen-header feature is on.
    #[cfg(feature = "gen-header")]
    {
        let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
        let out = std::path::Path::new(&crate_dir).join("include").join("blowlab.h");
        cbindgen::Builder::new()
            .with_crate(&crate_dir)
            .with_config(cbindgen::Config::from_file(
                std::path::Path::new(&crate_dir).join("cbindgen.toml"),
            ).expect("cbindgen.toml"))
            .generate()
            .expect("header generation")
            .write_to_file(out);
    }
}
