fn main() {
    let code = instrux::cli::dispatch(std::env::args_os());
    std::process::exit(code);
}
