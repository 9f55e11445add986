fn main() {
    std::process::exit(matalign_cli::run(std::env::args_os()));
}
