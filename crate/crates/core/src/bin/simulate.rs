fn main() {
    env_logger::init();
    std::process::exit(oam_memory::cli::main_with(std::env::args_os()));
}
