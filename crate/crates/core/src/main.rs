fn main() {
    std::process::exit(cfvimp::cli::run(std::env::args_os()));
}
