fn main() {
    std::process::exit(optbench::cli::run(std::env::args_os()));
}
