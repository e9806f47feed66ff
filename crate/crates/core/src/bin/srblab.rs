fn main() {
    std::process::exit(srblab::cli::run(std::env::args_os()));
}
