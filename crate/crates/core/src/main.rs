fn main() {
    std::process::exit(qlwave::cli::run(std::env::args_os()));
}
