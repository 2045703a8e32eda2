fn main() {
    std::process::exit(numindex::harness::main_with(std::env::args_os()));
}
