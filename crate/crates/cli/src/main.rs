fn main() {
    std::process::exit(spectral_homotopy_cli::run(std::env::args_os()));
}
