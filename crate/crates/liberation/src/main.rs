fn main() {
    std::process::exit(liberation::cli::run(std::env::args_os()));
}
