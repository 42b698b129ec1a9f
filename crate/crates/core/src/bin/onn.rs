fn main() {
    std::process::exit(onn::cli::main_with(std::env::args_os()));
}
