fn main() -> std::process::ExitCode {
    ethical_fibers::cli::main()
}
