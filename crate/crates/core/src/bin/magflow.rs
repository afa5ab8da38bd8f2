fn main() {
    std::process::exit(magflow::cli::run(std::env::args_os()));
}
