fn main() {
    std::process::exit(vadkit::cli::run(std::env::args_os()));
}
