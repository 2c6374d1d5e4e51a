fn main() {
    std::process::exit(gcondense::cli::run(std::env::args_os()));
}
