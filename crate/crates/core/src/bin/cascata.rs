fn main() {
    std::process::exit(cascata::runner::main_with_args(std::env::args_os()));
}
