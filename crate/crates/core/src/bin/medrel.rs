fn main() -> std::process::ExitCode {
    medrel_core::cli::main()
}
