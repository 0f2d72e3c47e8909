fn main() {
    std::process::exit(battpool::cli::run(std::env::args_os()));
}
