fn main() {
    std::process::exit(robust_fpca::cli::run(std::env::args_os()));
}
