fn main() -> std::process::ExitCode {
    qrobust::cli::main()
}
