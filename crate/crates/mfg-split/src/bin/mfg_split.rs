fn main() {
    // CLI wiring arrives with the scenario module.
    eprintln!("mfg-split: not yet wired");
    std::process::exit(1);
}
