fn main() {
    std::process::exit(vie::cli::run(std::env::args_os()));
}
