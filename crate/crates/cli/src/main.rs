fn main() {
    std::process::exit(tracerflow::run(std::env::args_os()));
}
