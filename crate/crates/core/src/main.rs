fn main() {
    std::process::exit(transnet::cli::run(std::env::args_os()));
}
