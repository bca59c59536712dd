fn main() {
    std::process::exit(merton_core::cli::run(std::env::args_os()));
}
