fn main() {
    std::process::exit(handshake_cli::run(std::env::args_os()));
}
