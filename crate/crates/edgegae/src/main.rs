fn main() {
    std::process::exit(edgegae::cli::run(std::env::args_os()));
}
