fn main() {
    std::process::exit(mcv::cli::run(std::env::args_os()));
}
