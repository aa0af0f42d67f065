fn main() {
    std::process::exit(brox::cli::run(std::env::args_os()));
}
