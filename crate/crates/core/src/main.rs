fn main() {
    std::process::exit(cdf_core::cli::run(std::env::args_os()));
}
