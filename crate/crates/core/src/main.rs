fn main() -> std::process::ExitCode {
    smartcart::cli::main()
}
