fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    let dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("AKLT_PREP_H".into()),
        autogen_warning: Some("/* Generated by cbindgen from src/lib.rs. Do not edit. */".into()),
        cpp_compat: true,
        enumeration: cbindgen::EnumConfig { prefix_with_name: true, rename_variants: cbindgen::RenameRule::ScreamingSnakeCase, ..Default::default() },
        ..Default::default()
    };
    cbindgen::Builder::new()
        .with_crate(&dir)
        .with_config(config)
        .generate()
        .expect("header generation")
        .write_to_file(format!("{dir}/include/aklt_prep.h"));
}
