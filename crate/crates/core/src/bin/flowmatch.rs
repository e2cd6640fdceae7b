fn main() {
    std::process::exit(flowmatch::cli::run(std::env::args_os()));
}
