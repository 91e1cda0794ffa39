fn main() {
    std::process::exit(chainbound_cli::run(std::env::args_os()));
}
