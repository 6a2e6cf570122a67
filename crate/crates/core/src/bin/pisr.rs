fn main() {
    std::process::exit(pisr::cli::run(std::env::args_os()));
}
