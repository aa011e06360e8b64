fn main() {
    std::process::exit(ptgame::cli::main_with_args(std::env::args_os()));
}
