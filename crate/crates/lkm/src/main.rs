fn main() {
    std::process::exit(lkm::cli::run(std::env::args_os()));
}
