fn main() {
    std::process::exit(monorefine::cli::run(std::env::args_os()));
}
