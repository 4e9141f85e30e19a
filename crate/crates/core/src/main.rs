fn main() {
    std::process::exit(streamtune::cli::run(std::env::args_os()));
}
