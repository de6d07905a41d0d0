fn main() {
    std::process::exit(zfrac::cli::run(std::env::args_os()));
}
