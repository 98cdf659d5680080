fn main() {
    std::process::exit(duetmf::cli::main_with_args(std::env::args_os()));
}
