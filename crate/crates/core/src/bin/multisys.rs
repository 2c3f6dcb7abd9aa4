fn main() {
    std::process::exit(multisys::cli::run(std::env::args_os()));
}
