fn main() {
    std::process::exit(avse_core::cli::run(std::env::args_os()));
}
