fn main() {
    std::process::exit(fou_transfer::cli::run_from(std::env::args_os()));
}
