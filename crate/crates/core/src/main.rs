fn main() {
    std::process::exit(extremix::cli::run(std::env::args_os()));
}
