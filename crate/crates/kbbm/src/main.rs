fn main() {
    std::process::exit(kbbm::cli::run(std::env::args_os()));
}
