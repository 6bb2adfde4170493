fn main() {
    let mut stdout = std::io::stdout().lock();
    let code = ppbsp::cli::main_with(std::env::args_os(), &mut stdout);
    std::process::exit(code);
}
