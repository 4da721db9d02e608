fn main() {
    std::process::exit(gsseg_cli::main_with(std::env::args_os()));
}
