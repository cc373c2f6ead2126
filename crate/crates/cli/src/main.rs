fn main() {
    std::process::exit(artic_cli::run(std::env::args_os()));
}
