fn main() {
    std::process::exit(msbtree::cli::run(std::env::args_os()));
}
