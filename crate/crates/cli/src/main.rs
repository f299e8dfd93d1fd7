fn main() {
    std::process::exit(bgk_sl::main_with_args(std::env::args_os()));
}
