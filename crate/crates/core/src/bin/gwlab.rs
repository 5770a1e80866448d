fn main() {
    std::process::exit(gwlab::cli::run(std::env::args_os()));
}
