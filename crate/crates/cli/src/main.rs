fn main() {
    std::process::exit(spvar_cli::run(std::env::args_os()))
}
