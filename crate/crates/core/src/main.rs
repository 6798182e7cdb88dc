fn main() {
    std::process::exit(hlift::cli::run(std::env::args_os()));
}
