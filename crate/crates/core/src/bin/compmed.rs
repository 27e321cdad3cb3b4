fn main() {
    std::process::exit(compmed::cli::run(std::env::args_os()));
}
