fn main() {
    std::process::exit(railscope::cli::main(std::env::args_os()));
}
