fn main() {
    std::process::exit(ctkit_cli::run(std::env::args_os()));
}
