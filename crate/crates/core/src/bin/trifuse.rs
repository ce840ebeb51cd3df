fn main() {
    std::process::exit(trifuse::app::main_with_args(std::env::args_os()));
}
