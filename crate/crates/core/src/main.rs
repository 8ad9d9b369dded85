fn main() {
    std::process::exit(pencilspec::cli::run(std::env::args_os()));
}
