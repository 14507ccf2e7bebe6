fn main() {
    std::process::exit(restrictlab_cli::run(std::env::args_os()));
}
