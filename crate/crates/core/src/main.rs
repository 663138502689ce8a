fn main() {
    std::process::exit(tgat::cli::run(std::env::args_os()));
}
