fn main() {
    std::process::exit(ccsoc::cli::run(std::env::args_os()));
}
