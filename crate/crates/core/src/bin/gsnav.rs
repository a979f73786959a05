fn main() {
    std::process::exit(gsnav::cli::main_with(std::env::args_os()));
}
