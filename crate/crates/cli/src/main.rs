fn main() {
    std::process::exit(amsum_cli::run(std::env::args_os().skip(1)));
}
