fn main() {
    std::process::exit(beamtrack_core::cli::run(std::env::args_os()));
}
