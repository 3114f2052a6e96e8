fn main() {
    std::process::exit(taylor_lab_cli::run_from(std::env::args_os()));
}
