fn main() {
    std::process::exit(storage_bilevel::driver::cli_main(std::env::args_os()));
}
