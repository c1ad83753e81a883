fn main() {
    env_logger::init();
    std::process::exit(lics_cli::dispatch(std::env::args_os()));
}
