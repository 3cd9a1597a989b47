fn main() {
    std::process::exit(misfit::cli::run(std::env::args_os()));
}
