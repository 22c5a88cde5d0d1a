fn main() {
    std::process::exit(vdclink::cli::main_with_args(std::env::args_os()));
}
